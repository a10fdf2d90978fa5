"""
Noise schedule, forward noising and the clean-latent estimate.

Timesteps run 1..T. Index 0 of every table is the noise-free state (alpha_bar[0] = 1), which DDIM uses as its
final target.
"""
import math
from dataclasses import dataclass
from typing import Union

import numpy as np
import torch

from textcontrol.enums import ScheduleKind
from textcontrol.exceptions import ScheduleError, ShapeMismatch, TimestepOutOfRange

Timestep = Union[int, torch.Tensor]


@dataclass(frozen=True)
class NoiseSchedule:
    T: int
    beta: torch.Tensor  # (T + 1,) float64, beta[0] = 0
    alpha: torch.Tensor
    alpha_bar: torch.Tensor
    kind: ScheduleKind = ScheduleKind.LINEAR
    beta_start: float = 1e-4
    beta_end: float = 0.02

    def to_dict(self) -> dict:
        return {'T': self.T, 'beta_start': self.beta_start, 'beta_end': self.beta_end, 'kind': self.kind.value}

    @classmethod
    def from_dict(cls, values: dict) -> 'NoiseSchedule':
        return make_schedule(values['T'], values['beta_start'], values['beta_end'], ScheduleKind(values['kind']))

    def check_timestep(self, t: Timestep, allow_zero: bool = False):
        low = 0 if allow_zero else 1
        values = t if isinstance(t, torch.Tensor) else torch.tensor([t])
        if values.numel() and (int(values.min()) < low or int(values.max()) > self.T):
            raise TimestepOutOfRange(f"Timestep {t if not isinstance(t, torch.Tensor) else values.tolist()} "
                                     f"outside [{low}, {self.T}]")

    def coefficients(self, t: Timestep, like: torch.Tensor, allow_zero: bool = False):
        """
        sqrt(alpha_bar[t]) and sqrt(1 - alpha_bar[t]) broadcastable against a (B, C, H, W) tensor.
        """
        self.check_timestep(t, allow_zero=allow_zero)
        index = t if isinstance(t, torch.Tensor) else torch.tensor(t)
        alpha_bar = self.alpha_bar[index.long().cpu()].to(dtype=like.dtype, device=like.device)
        if alpha_bar.dim() == 1:
            alpha_bar = alpha_bar.view(-1, *([1] * (like.dim() - 1)))
        return alpha_bar.sqrt(), (1.0 - alpha_bar).sqrt()


def make_schedule(T: int, beta_start: float, beta_end: float,
                  kind: ScheduleKind = ScheduleKind.LINEAR) -> NoiseSchedule:
    """
    Builds the beta, alpha and alpha_bar tables.
    :raises ScheduleError: When the range is not 0 < beta_start <= beta_end < 1 or T < 2.
    """
    if T < 2:
        raise ScheduleError(f"Need T >= 2, got {T}")
    if not 0 < beta_start <= beta_end < 1:
        raise ScheduleError(f"Need 0 < beta_start <= beta_end < 1, got {beta_start}, {beta_end}")
    if kind == ScheduleKind.LINEAR:
        betas = np.linspace(beta_start, beta_end, T, dtype=np.float64)
    else:
        betas = np.linspace(math.sqrt(beta_start), math.sqrt(beta_end), T, dtype=np.float64) ** 2
    betas = np.concatenate([[0.0], betas])
    alphas = 1.0 - betas
    alpha_bar = np.cumprod(alphas)
    return NoiseSchedule(T=T, beta=torch.from_numpy(betas), alpha=torch.from_numpy(alphas),
                         alpha_bar=torch.from_numpy(alpha_bar), kind=kind, beta_start=beta_start,
                         beta_end=beta_end)


def add_noise(z0: torch.Tensor, t: Timestep, eps: torch.Tensor, schedule: NoiseSchedule) -> torch.Tensor:
    """
    z_t = sqrt(alpha_bar[t]) * z0 + sqrt(1 - alpha_bar[t]) * eps
    """
    if z0.shape != eps.shape:
        raise ShapeMismatch(f"z0 {tuple(z0.shape)} and eps {tuple(eps.shape)} differ")
    signal, noise = schedule.coefficients(t, z0)
    return signal * z0 + noise * eps


def estimate_z0(z_t: torch.Tensor, t: Timestep, eps_hat: torch.Tensor, schedule: NoiseSchedule,
                allow_zero: bool = False) -> torch.Tensor:
    """
    Closed-form clean latent: (z_t - sqrt(1 - alpha_bar[t]) * eps_hat) / sqrt(alpha_bar[t]).
    """
    if z_t.shape != eps_hat.shape:
        raise ShapeMismatch(f"z_t {tuple(z_t.shape)} and eps_hat {tuple(eps_hat.shape)} differ")
    signal, noise = schedule.coefficients(t, z_t, allow_zero=allow_zero)
    return (z_t - noise * eps_hat) / signal


def estimate_x0(z_t: torch.Tensor, t: Timestep, eps_hat: torch.Tensor, schedule: NoiseSchedule,
                codec) -> torch.Tensor:
    """
    Pixel-space prediction: the decoded clean-latent estimate. Differentiable w.r.t. eps_hat.
    """
    return codec.decode(estimate_z0(z_t, t, eps_hat, schedule))
