"""
Image <-> latent codecs. Images are (B, 3, H, W) in [0, 1]; latents are (B, c, H/8, W/8).
"""
import logging
import math
from typing import Sequence

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from textcontrol.config import CODEC_FACTOR
from textcontrol.enums import CodecMode
from textcontrol.exceptions import CodecQualityError, ShapeMismatch
from textcontrol.rng import RandomStream

logger = logging.getLogger(__name__)


class Codec(nn.Module):
    mode: CodecMode

    def __init__(self, image_size: int, latent_channels: int):
        super().__init__()
        self.image_size = image_size
        self.latent_channels = latent_channels
        self.latent_size = image_size // CODEC_FACTOR

    def _check_image(self, image: torch.Tensor):
        if image.dim() != 4 or tuple(image.shape[1:]) != (3, self.image_size, self.image_size):
            raise ShapeMismatch(f"Expected images (B, 3, {self.image_size}, {self.image_size}), "
                                f"got {tuple(image.shape)}")

    def _check_latent(self, latent: torch.Tensor):
        expected = (self.latent_channels, self.latent_size, self.latent_size)
        if latent.dim() != 4 or tuple(latent.shape[1:]) != expected:
            raise ShapeMismatch(f"Expected latents (B, {', '.join(map(str, expected))}), got {tuple(latent.shape)}")

    def encode(self, image: torch.Tensor) -> torch.Tensor:
        raise NotImplementedError

    def decode(self, latent: torch.Tensor) -> torch.Tensor:
        raise NotImplementedError


class AnalyticCodec(Codec):
    """
    Fixed codec: average-pool to latent resolution, bilinear upsampling back. Latent channels cycle over the
    centred RGB channels; decoding reads the first three. Constant images round-trip exactly.
    """
    mode = CodecMode.ANALYTIC

    def __init__(self, image_size: int, latent_channels: int):
        super().__init__(image_size, latent_channels)
        if latent_channels < 3:
            raise ShapeMismatch("The analytic codec needs at least 3 latent channels")

    def encode(self, image: torch.Tensor) -> torch.Tensor:
        self._check_image(image)
        pooled = F.avg_pool2d(image * 2.0 - 1.0, CODEC_FACTOR)
        index = torch.arange(self.latent_channels, device=image.device) % 3
        return pooled[:, index]

    def decode(self, latent: torch.Tensor) -> torch.Tensor:
        self._check_latent(latent)
        upsampled = F.interpolate(latent[:, :3], size=(self.image_size, self.image_size), mode='bilinear',
                                  align_corners=False)
        return (upsampled + 1.0) / 2.0


class LearnedCodec(Codec):
    """
    Small convolutional autoencoder, three stride-2 stages each way.
    """
    mode = CodecMode.LEARNED

    def __init__(self, image_size: int, latent_channels: int, width: int = 32):
        super().__init__(image_size, latent_channels)
        self.encoder = nn.Sequential(
            nn.Conv2d(3, width, 3, stride=2, padding=1), nn.SiLU(),
            nn.Conv2d(width, width * 2, 3, stride=2, padding=1), nn.SiLU(),
            nn.Conv2d(width * 2, width * 2, 3, stride=2, padding=1), nn.SiLU(),
            nn.Conv2d(width * 2, latent_channels, 1),
        )
        self.decoder = nn.Sequential(
            nn.Conv2d(latent_channels, width * 2, 3, padding=1), nn.SiLU(),
            nn.ConvTranspose2d(width * 2, width * 2, 4, stride=2, padding=1), nn.SiLU(),
            nn.ConvTranspose2d(width * 2, width, 4, stride=2, padding=1), nn.SiLU(),
            nn.ConvTranspose2d(width, width, 4, stride=2, padding=1), nn.SiLU(),
            nn.Conv2d(width, 3, 3, padding=1), nn.Sigmoid(),
        )

    def encode(self, image: torch.Tensor) -> torch.Tensor:
        self._check_image(image)
        return self.encoder(image * 2.0 - 1.0)

    def decode(self, latent: torch.Tensor) -> torch.Tensor:
        self._check_latent(latent)
        return self.decoder(latent)


def images_to_tensor(images: Sequence[np.ndarray]) -> torch.Tensor:
    """
    H x W x 3 uint8 images to a (B, 3, H, W) float tensor in [0, 1].
    """
    return torch.from_numpy(np.stack(images)).permute(0, 3, 1, 2).float() / 255.0


def tensor_to_images(pixels: torch.Tensor) -> list:
    array = (pixels.detach().clamp(0.0, 1.0).permute(0, 2, 3, 1).cpu().numpy() * 255.0).round()
    return list(array.astype(np.uint8))


def build_codec(mode: CodecMode, image_size: int, latent_channels: int) -> Codec:
    if mode == CodecMode.ANALYTIC:
        return AnalyticCodec(image_size, latent_channels)
    return LearnedCodec(image_size, latent_channels)


def psnr(reference: torch.Tensor, reconstruction: torch.Tensor) -> float:
    mse = float(F.mse_loss(reconstruction, reference))
    return float('inf') if mse == 0 else 10.0 * math.log10(1.0 / mse)


def pretrain_codec(codec: Codec, images: Sequence[np.ndarray], epochs: int, stream: RandomStream,
                   psnr_floor: float, batch_size: int = 16, learning_rate: float = 1e-3) -> float:
    """
    Trains a learned codec on reconstruction, measures held-out PSNR and freezes it.
    :param images: H x W x 3 uint8 images.
    :return: Held-out PSNR in dB.
    :raises CodecQualityError: When the PSNR is below the floor.
    """
    data = images_to_tensor(images)
    holdout = max(1, len(data) // 10) if len(data) > 1 else 0
    train, held = data[holdout:], data[:holdout] if holdout else data
    if codec.mode == CodecMode.LEARNED and epochs > 0:
        optimizer = torch.optim.Adam(codec.parameters(), lr=learning_rate)
        codec.train()
        for epoch in range(epochs):
            order = torch.randperm(len(train), generator=stream.torch)
            total = 0.0
            for start in range(0, len(train), batch_size):
                batch = train[order[start:start + batch_size]]
                loss = F.mse_loss(codec.decode(codec.encode(batch)), batch)
                optimizer.zero_grad()
                loss.backward()
                optimizer.step()
                total += float(loss) * len(batch)
            logger.debug("Codec epoch %d: reconstruction mse %.5f", epoch + 1, total / max(len(train), 1))
    codec.eval()
    with torch.no_grad():
        score = psnr(held, codec.decode(codec.encode(held)))
    logger.info("Codec %s held-out PSNR %.2f dB (floor %.2f dB)", codec.mode.value, score, psnr_floor)
    if score < psnr_floor:
        raise CodecQualityError(f"Codec PSNR {score:.2f} dB is below the floor of {psnr_floor:.2f} dB; "
                                f"train on more images or for more epochs")
    freeze(codec)
    return score


def freeze(module: nn.Module):
    module.eval()
    for parameter in module.parameters():
        parameter.requires_grad_(False)
