"""
The noise predictor: a two-level encoder-decoder over latents with timestep conditioning, cross-attention to the
caption embedding at every level, and additive injection points for control features.

Injection points, for widths (w0, w1) and an m x m latent:
    0: after encoder level 0   (w0, m, m)
    1: after encoder level 1   (w1, m/2, m/2)
    2: after the bottleneck    (w1, m/2, m/2)
"""
import math
from typing import List, Optional, Sequence, Tuple

import torch
import torch.nn as nn
import torch.nn.functional as F

from textcontrol.diffusion.text_encoder import TextEmbedding
from textcontrol.exceptions import ShapeMismatch

ControlFeatures = List[torch.Tensor]

NORM_GROUPS = 8


def timestep_embedding(t: torch.Tensor, dim: int, max_period: float = 10000.0) -> torch.Tensor:
    """
    Sinusoidal embedding of integer timesteps.
    :param t: (B,) timesteps.
    :return: (B, dim) float32 embedding, cosines then sines.
    """
    half = dim // 2
    frequencies = torch.exp(-math.log(max_period) * torch.arange(half, dtype=torch.float32, device=t.device) / half)
    arguments = t.to(torch.float32)[:, None] * frequencies[None]
    embedding = torch.cat([torch.cos(arguments), torch.sin(arguments)], dim=-1)
    if dim % 2:
        embedding = F.pad(embedding, (0, 1))
    return embedding


def injection_shapes(widths: Sequence[int], latent_size: int) -> List[Tuple[int, int, int]]:
    w0, w1 = widths
    half = latent_size // 2
    return [(w0, latent_size, latent_size), (w1, half, half), (w1, half, half)]


def inject(control: Optional[torch.Tensor], activation: torch.Tensor) -> torch.Tensor:
    """
    Adds a control feature map to a denoiser activation. A missing control feature leaves the activation untouched.
    :raises ShapeMismatch: When the shapes differ.
    """
    if control is None:
        return activation
    if control.shape != activation.shape:
        raise ShapeMismatch(f"Control feature {tuple(control.shape)} does not match activation "
                            f"{tuple(activation.shape)}")
    return activation + control


class ResBlock(nn.Module):
    def __init__(self, in_channels: int, out_channels: int, time_dim: int):
        super().__init__()
        self.norm1 = nn.GroupNorm(NORM_GROUPS, in_channels)
        self.conv1 = nn.Conv2d(in_channels, out_channels, 3, padding=1)
        self.time_projection = nn.Linear(time_dim, out_channels)
        self.norm2 = nn.GroupNorm(NORM_GROUPS, out_channels)
        self.conv2 = nn.Conv2d(out_channels, out_channels, 3, padding=1)
        self.skip = nn.Conv2d(in_channels, out_channels, 1) if in_channels != out_channels else nn.Identity()

    def forward(self, x: torch.Tensor, time: torch.Tensor) -> torch.Tensor:
        h = self.conv1(F.silu(self.norm1(x)))
        h = h + self.time_projection(F.silu(time))[:, :, None, None]
        h = self.conv2(F.silu(self.norm2(h)))
        return self.skip(x) + h


class CrossAttention(nn.Module):
    """
    Residual attention from image positions (queries) to caption tokens (keys and values).
    """

    def __init__(self, channels: int, text_dim: int, heads: int = 4):
        super().__init__()
        self.norm = nn.GroupNorm(NORM_GROUPS, channels)
        self.attention = nn.MultiheadAttention(channels, heads, kdim=text_dim, vdim=text_dim, batch_first=True)

    def forward(self, x: torch.Tensor, text: TextEmbedding) -> torch.Tensor:
        b, c, h, w = x.shape
        queries = self.norm(x).flatten(2).transpose(1, 2)
        attended, _ = self.attention(queries, text.values, text.values, key_padding_mask=~text.mask,
                                     need_weights=False)
        return x + attended.transpose(1, 2).reshape(b, c, h, w)


class UNetEncoder(nn.Module):
    """
    Timestep embedding plus the encoder half of the denoiser. The control branch owns a copy of this module.
    """

    def __init__(self, latent_channels: int, widths: Sequence[int], text_dim: int, heads: int = 4):
        super().__init__()
        w0, w1 = widths
        self.widths = (w0, w1)
        self.time_dim = w0 * 4
        self.time_mlp = nn.Sequential(nn.Linear(w0, self.time_dim), nn.SiLU(), nn.Linear(self.time_dim, self.time_dim))
        self.conv_in = nn.Conv2d(latent_channels, w0, 3, padding=1)
        self.level0 = ResBlock(w0, w0, self.time_dim)
        self.attention0 = CrossAttention(w0, text_dim, heads)
        self.down = nn.Conv2d(w0, w0, 3, stride=2, padding=1)
        self.level1 = ResBlock(w0, w1, self.time_dim)
        self.attention1 = CrossAttention(w1, text_dim, heads)
        self.middle1 = ResBlock(w1, w1, self.time_dim)
        self.middle_attention = CrossAttention(w1, text_dim, heads)
        self.middle2 = ResBlock(w1, w1, self.time_dim)

    def embed_time(self, t: torch.Tensor, dtype: torch.dtype) -> torch.Tensor:
        return self.time_mlp(timestep_embedding(t, self.widths[0]).to(dtype))

    def forward(self, z: torch.Tensor, time: torch.Tensor, text: TextEmbedding,
                control: Optional[ControlFeatures] = None,
                hint_features: Optional[torch.Tensor] = None) -> ControlFeatures:
        control = control if control is not None else [None, None, None]
        h = self.conv_in(z)
        if hint_features is not None:
            h = h + hint_features
        h0 = inject(control[0], self.attention0(self.level0(h, time), text))
        h1 = inject(control[1], self.attention1(self.level1(self.down(h0), time), text))
        middle = self.middle2(self.middle_attention(self.middle1(h1, time), text), time)
        return [h0, h1, inject(control[2], middle)]


class Denoiser(nn.Module):
    def __init__(self, latent_channels: int, latent_size: int, widths: Sequence[int] = (32, 64),
                 text_dim: int = 64, heads: int = 4):
        super().__init__()
        w0, w1 = widths
        self.latent_channels = latent_channels
        self.latent_size = latent_size
        self.widths = (w0, w1)
        self.encoder = UNetEncoder(latent_channels, widths, text_dim, heads)
        time_dim = self.encoder.time_dim
        self.decoder1 = ResBlock(w1 * 2, w1, time_dim)
        self.decoder_attention1 = CrossAttention(w1, text_dim, heads)
        self.up = nn.Sequential(nn.Upsample(scale_factor=2, mode='nearest'), nn.Conv2d(w1, w1, 3, padding=1))
        self.decoder0 = ResBlock(w1 + w0, w0, time_dim)
        self.decoder_attention0 = CrossAttention(w0, text_dim, heads)
        self.out = nn.Sequential(nn.GroupNorm(NORM_GROUPS, w0), nn.SiLU(), nn.Conv2d(w0, latent_channels, 3, padding=1))

    @property
    def injection_shapes(self) -> List[Tuple[int, int, int]]:
        return injection_shapes(self.widths, self.latent_size)

    def check_latent(self, z: torch.Tensor):
        expected = (self.latent_channels, self.latent_size, self.latent_size)
        if z.dim() != 4 or tuple(z.shape[1:]) != expected:
            raise ShapeMismatch(f"Expected latents (B, {', '.join(map(str, expected))}), got {tuple(z.shape)}")

    def forward(self, z_t: torch.Tensor, t, text: TextEmbedding,
                control: Optional[ControlFeatures] = None) -> torch.Tensor:
        self.check_latent(z_t)
        if text.values.shape[0] != z_t.shape[0]:
            raise ShapeMismatch(f"{text.values.shape[0]} caption embeddings for {z_t.shape[0]} latents")
        if control is not None and len(control) != len(self.injection_shapes):
            raise ShapeMismatch(f"Expected {len(self.injection_shapes)} control features, got {len(control)}")
        t = broadcast_timesteps(t, z_t.shape[0], z_t.device)
        time = self.encoder.embed_time(t, z_t.dtype)
        h0, h1, middle = self.encoder(z_t, time, text, control)
        h = self.decoder_attention1(self.decoder1(torch.cat([middle, h1], dim=1), time), text)
        h = self.decoder_attention0(self.decoder0(torch.cat([self.up(h), h0], dim=1), time), text)
        return self.out(h)


def broadcast_timesteps(t, batch: int, device) -> torch.Tensor:
    t = torch.as_tensor(t, device=device)
    if t.dim() == 0:
        t = t.expand(batch)
    if t.shape != (batch,):
        raise ShapeMismatch(f"Expected {batch} timesteps, got shape {tuple(t.shape)}")
    return t.long()


def predict_eps(z_t: torch.Tensor, t, text: TextEmbedding, control: Optional[ControlFeatures],
                denoiser: Denoiser) -> torch.Tensor:
    """
    eps_theta(z_t, t, c_t, z_f): the predicted noise, latent-shaped.
    """
    return denoiser(z_t, t, text, control)
