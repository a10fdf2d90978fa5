"""
The font control branch.

A strided hint encoder brings the hint image down to latent resolution, where it is added to the trunk's input
convolution of z_t. The trunk is a copy of the denoiser's encoder; each of its three outputs passes through a
zero-initialised 1x1 projection, so a fresh branch contributes exactly nothing.
"""
import copy
from typing import List, Union

import numpy as np
import torch
import torch.nn as nn

from textcontrol.diffusion.denoiser import ControlFeatures, Denoiser, broadcast_timesteps
from textcontrol.diffusion.text_encoder import TextEmbedding
from textcontrol.domain import HintImage
from textcontrol.exceptions import ShapeMismatch

HINT_CHANNELS = 3


class ZeroConv2d(nn.Module):
    """
    1x1 convolution with weight and bias initialised to zero.
    """

    def __init__(self, in_channels: int, out_channels: int):
        super().__init__()
        self.conv = nn.Conv2d(in_channels, out_channels, kernel_size=1)
        nn.init.zeros_(self.conv.weight)
        nn.init.zeros_(self.conv.bias)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.conv(x)


class HintEncoder(nn.Module):
    """
    Strided convolution stack from an H x W hint to (w0, H/8, W/8).
    """

    def __init__(self, out_channels: int, in_channels: int = HINT_CHANNELS):
        super().__init__()
        self.layers = nn.Sequential(
            nn.Conv2d(in_channels, 16, 3, padding=1), nn.SiLU(),
            nn.Conv2d(16, 16, 3, stride=2, padding=1), nn.SiLU(),
            nn.Conv2d(16, 32, 3, stride=2, padding=1), nn.SiLU(),
            nn.Conv2d(32, 32, 3, stride=2, padding=1), nn.SiLU(),
            nn.Conv2d(32, out_channels, 3, padding=1),
        )

    def forward(self, hint: torch.Tensor) -> torch.Tensor:
        return self.layers(hint)


class ControlNet(nn.Module):
    def __init__(self, denoiser: Denoiser, image_size: int):
        super().__init__()
        self.image_size = image_size
        self.latent_size = denoiser.latent_size
        self.hint_encoder = HintEncoder(denoiser.widths[0])
        self.trunk = copy.deepcopy(denoiser.encoder)
        self.zero_projections = nn.ModuleList(ZeroConv2d(c, c) for c, _, _ in denoiser.injection_shapes)
        self.shapes = denoiser.injection_shapes

    def copy_trunk_from(self, denoiser: Denoiser):
        """
        Re-initialises the trunk from the denoiser's encoder. The projections are untouched.
        """
        self.trunk.load_state_dict(denoiser.encoder.state_dict())

    def prepare_hint(self, hint: torch.Tensor) -> torch.Tensor:
        if hint.dim() == 3:
            hint = hint[:, None]
        if hint.dim() != 4 or tuple(hint.shape[-2:]) != (self.image_size, self.image_size):
            raise ShapeMismatch(f"Hint of shape {tuple(hint.shape)} does not match image size {self.image_size}")
        if hint.shape[1] == 1:
            hint = hint.repeat(1, HINT_CHANNELS, 1, 1)
        elif hint.shape[1] != HINT_CHANNELS:
            raise ShapeMismatch(f"Hints have 1 or {HINT_CHANNELS} channels, got {hint.shape[1]}")
        return hint

    def forward(self, hint: torch.Tensor, z_t: torch.Tensor, t, text: TextEmbedding) -> ControlFeatures:
        """
        :param hint: (B, H, W) or (B, 1, H, W) hint pixels in [0, 1].
        :return: One feature map per injection point.
        """
        hint = self.prepare_hint(hint.to(z_t.dtype))
        if hint.shape[0] != z_t.shape[0]:
            raise ShapeMismatch(f"{hint.shape[0]} hints for {z_t.shape[0]} latents")
        t = broadcast_timesteps(t, z_t.shape[0], z_t.device)
        time = self.trunk.embed_time(t, z_t.dtype)
        outputs = self.trunk(z_t, time, text, hint_features=self.hint_encoder(hint))
        return [projection(h) for projection, h in zip(self.zero_projections, outputs)]

    def zero_initialised(self) -> bool:
        return all(not p.detach().any() for p in self.zero_projections.parameters())


def hint_tensor(hints: List[HintImage]) -> torch.Tensor:
    return torch.from_numpy(np.stack([h.pixels for h in hints]).astype(np.float32))[:, None]


def encode_hint(hint: Union[HintImage, List[HintImage], torch.Tensor], z_t: torch.Tensor, t, text: TextEmbedding,
                controlnet: ControlNet) -> ControlFeatures:
    """
    Control features z_f for a hint (or batch of hints).
    :raises ShapeMismatch: When the hint does not match the configured image size.
    """
    if isinstance(hint, HintImage):
        hint = [hint]
    if isinstance(hint, list):
        hint = hint_tensor(hint)
    return controlnet(hint.to(z_t.device), z_t, t, text)

