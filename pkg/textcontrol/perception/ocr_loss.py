"""
Region cropping and the multi-layer OCR perceptual loss.

For each aligned (ground truth, prediction) patch pair and each of the recognizer's first three feature layers l,
the squared channel-norm differences are summed over the valid (h, w) positions and divided by H_l * W_l, where
W_l counts only the valid (unpadded) columns. Layers are summed and pairs averaged.
"""
import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import torch
import torch.nn.functional as F

from textcontrol.domain import TextRegion
from textcontrol.exceptions import LossContractError, ShapeMismatch

logger = logging.getLogger(__name__)

# ITU-R BT.601 luma weights, as used by PIL's RGB -> L conversion.
LUMA = (0.299, 0.587, 0.114)


@dataclass
class PatchBatch:
    pixels: torch.Tensor  # (N, 1, patch_height, patch_max_width) ink maps
    widths: torch.Tensor  # (N,) unpadded widths
    texts: List[str]

    def __len__(self):
        return self.pixels.shape[0]

    @classmethod
    def empty(cls, height: int, max_width: int, dtype=torch.float32) -> 'PatchBatch':
        return cls(torch.zeros((0, 1, height, max_width), dtype=dtype), torch.zeros(0, dtype=torch.long), [])

    @classmethod
    def concatenate(cls, batches: Sequence['PatchBatch'], height: int, max_width: int) -> 'PatchBatch':
        batches = [b for b in batches if len(b)]
        if not batches:
            return cls.empty(height, max_width)
        return cls(torch.cat([b.pixels for b in batches]), torch.cat([b.widths for b in batches]),
                   [t for b in batches for t in b.texts])


def ink(image: torch.Tensor) -> torch.Tensor:
    """
    (3, H, W) RGB in [0, 1] to (1, H, W) ink map, 1 where the pixel is black.
    """
    weights = torch.tensor(LUMA, dtype=image.dtype, device=image.device)[:, None, None]
    return 1.0 - (image * weights).sum(dim=0, keepdim=True)


def patch_width(w: int, h: int, target_height: int, max_width: int) -> int:
    return max(1, min(max_width, int(round(w * target_height / h))))


def crop_regions(image: torch.Tensor, regions: Sequence[TextRegion], target_height: int = 32,
                 max_width: int = 256) -> PatchBatch:
    """
    Crops every region of an image into a recognizer patch: the bbox crop as an ink map, resized bilinearly to the
    target height keeping its aspect ratio (capped at the maximum width), then zero-padded on the right.
    Regions with no area inside the image are skipped. Differentiable with respect to the image.
    :param image: (3, H, W) RGB in [0, 1].
    """
    if image.dim() != 3 or image.shape[0] != 3:
        raise ShapeMismatch(f"Expected a (3, H, W) image, got {tuple(image.shape)}")
    height, width = image.shape[1:]
    pixels, widths, texts = [], [], []
    for region in regions:
        clamped = region.clamped(width, height)
        if clamped is None:
            continue
        x, y, w, h = clamped.bbox
        crop = ink(image[:, y:y + h, x:x + w])
        new_width = patch_width(w, h, target_height, max_width)
        resized = F.interpolate(crop[None], size=(target_height, new_width), mode='bilinear', align_corners=False)
        pixels.append(F.pad(resized, (0, max_width - new_width))[0])
        widths.append(new_width)
        texts.append(region.text)
    if not pixels:
        return PatchBatch.empty(target_height, max_width, image.dtype)
    return PatchBatch(torch.stack(pixels), torch.tensor(widths, dtype=torch.long), texts)


def crop_pairs(gt_images: torch.Tensor, pred_images: torch.Tensor, regions: Sequence[Sequence[TextRegion]],
               target_height: int = 32, max_width: int = 256) -> Tuple[PatchBatch, PatchBatch]:
    """
    Crops the same regions from ground-truth and predicted image batches, so the patch lists are pairwise aligned.
    """
    if gt_images.shape != pred_images.shape:
        raise ShapeMismatch(f"Ground truth {tuple(gt_images.shape)} and prediction {tuple(pred_images.shape)} differ")
    gt, pred = [], []
    for gt_image, pred_image, image_regions in zip(gt_images, pred_images, regions):
        gt.append(crop_regions(gt_image, image_regions, target_height, max_width))
        pred.append(crop_regions(pred_image, image_regions, target_height, max_width))
    return (PatchBatch.concatenate(gt, target_height, max_width),
            PatchBatch.concatenate(pred, target_height, max_width))


def recognizer_features(patches: torch.Tensor, recognizer) -> List[torch.Tensor]:
    """
    Feature maps of the recognizer's first three convolution layers, (N, C_l, H_l, W_l) each.
    :raises ShapeMismatch: When the patches do not have the recognizer's input geometry.
    """
    return recognizer.extract_features(patches)


def feature_distance(gt_features: Sequence[torch.Tensor], pred_features: Sequence[torch.Tensor],
                     valid_widths: Optional[Sequence[torch.Tensor]] = None) -> torch.Tensor:
    """
    Per-pair sum over layers of the valid-area mean squared channel norm, averaged over pairs.
    :param valid_widths: Per layer, (N,) counts of valid columns. Defaults to full width.
    """
    if len(gt_features) != len(pred_features):
        raise LossContractError(f"{len(gt_features)} ground-truth layers against {len(pred_features)} predicted")
    pairs = gt_features[0].shape[0]
    total = gt_features[0].new_zeros(pairs)
    for layer, (gt, pred) in enumerate(zip(gt_features, pred_features)):
        if gt.shape != pred.shape:
            raise LossContractError(f"Layer {layer + 1} feature shapes differ: {tuple(gt.shape)} vs "
                                    f"{tuple(pred.shape)}")
        _, _, h, w = gt.shape
        squared = ((pred - gt) ** 2).sum(dim=1)  # (N, H_l, W_l)
        if valid_widths is None:
            widths = torch.full((pairs,), w, dtype=torch.long, device=gt.device)
        else:
            widths = valid_widths[layer].to(gt.device).clamp(1, w)
        columns = torch.arange(w, device=gt.device)
        mask = (columns[None, :] < widths[:, None]).to(squared.dtype)[:, None, :]
        total = total + (squared * mask).sum(dim=(1, 2)) / (h * widths.to(squared.dtype))
    return total.mean()


def ocr_loss(gt_patches: PatchBatch, pred_patches: PatchBatch, recognizer) -> torch.Tensor:
    """
    Multi-layer OCR perceptual loss between aligned patch lists. Differentiable with respect to the predicted
    patches; the recognizer is not updated.
    :raises LossContractError: When the lists differ in length or geometry.
    """
    if len(gt_patches) != len(pred_patches):
        raise LossContractError(f"{len(gt_patches)} ground-truth patches against {len(pred_patches)} predicted")
    if not torch.equal(gt_patches.widths, pred_patches.widths):
        raise LossContractError("Ground-truth and predicted patches are not aligned")
    if len(gt_patches) == 0:
        logger.warning("OCR loss over an empty patch list is 0")
        return pred_patches.pixels.new_zeros(())
    with torch.no_grad():
        gt_features = recognizer_features(gt_patches.pixels, recognizer)
    pred_features = recognizer_features(pred_patches.pixels, recognizer)
    return feature_distance(gt_features, pred_features, recognizer.valid_widths(gt_patches.widths))


def total_loss(l_ldm, l_ocr, lambda_ocr: float):
    """
    L = L_LDM + lambda * L_OCR.
    :raises LossContractError: When a loss is negative or not finite.
    """
    for name, value in (('l_ldm', l_ldm), ('l_ocr', l_ocr)):
        scalar = float(value)
        if not scalar >= 0 or scalar == float('inf'):
            raise LossContractError(f"{name} must be finite and >= 0, got {scalar}")
    if lambda_ocr < 0:
        raise LossContractError(f"lambda_ocr must be >= 0, got {lambda_ocr}")
    if lambda_ocr == 0:
        return l_ldm
    return l_ldm + lambda_ocr * l_ocr
