import torch

from textcontrol.enums import LossReduction
from textcontrol.exceptions import ShapeMismatch


def ldm_loss(eps: torch.Tensor, eps_hat: torch.Tensor, reduction: LossReduction = LossReduction.MEAN) -> torch.Tensor:
    """
    Noise-prediction loss ||eps - eps_hat||^2.

    ``MEAN`` averages the squared error over every element; ``SUM`` takes the squared L2 norm over each latent and
    averages over the batch. The reduction fixes the scale that lambda_ocr balances against, so it is stored in
    checkpoints.
    """
    if eps.shape != eps_hat.shape:
        raise ShapeMismatch(f"eps {tuple(eps.shape)} and eps_hat {tuple(eps_hat.shape)} differ")
    squared = (eps - eps_hat) ** 2
    if reduction == LossReduction.MEAN:
        return squared.mean()
    return squared.flatten(1).sum(dim=1).mean()
