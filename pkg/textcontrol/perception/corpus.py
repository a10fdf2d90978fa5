"""
Labelled typographic patches for recognizer pretraining.

Each sample is one short line rendered at a small glyph size, then cropped with the same code the OCR loss and the
evaluator use, so the recognizer sees exactly the patch geometry it is later applied to.
"""
import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
import torch

from textcontrol.enums import BenchmarkStyle
from textcontrol.hints.benchmark import colours, line_region, paint_region
from textcontrol.hints.fonts import FontRegistry
from textcontrol.perception.ocr_loss import PatchBatch, crop_regions
from textcontrol.rng import seeded_rng

logger = logging.getLogger(__name__)

CORPUS_CANVAS = 1024


@dataclass
class RecognizerCorpus:
    patches: PatchBatch
    alphabet: str
    parameters: dict

    def __len__(self):
        return len(self.patches)

    def split(self, holdout_fraction: float = 0.1) -> Tuple[PatchBatch, PatchBatch]:
        """
        :return: (train, held-out). The held-out split is the tail of the corpus.
        """
        held = max(1, int(round(len(self) * holdout_fraction)))
        cut = len(self) - held
        p = self.patches
        return (PatchBatch(p.pixels[:cut], p.widths[:cut], p.texts[:cut]),
                PatchBatch(p.pixels[cut:], p.widths[cut:], p.texts[cut:]))


def build_corpus(font_registry: FontRegistry, alphabet: str, count: int, seed: int, patch_height: int = 32,
                 patch_max_width: int = 256, font_ids: Optional[Sequence[str]] = None, min_char_px: int = 6,
                 max_char_px: int = 16, scene_fraction: float = 0.5) -> RecognizerCorpus:
    """
    Renders ``count`` labelled patches. A ``scene_fraction`` of them use pale coloured backgrounds with dark
    coloured text, the rest black on white.
    """
    font_ids = list(font_ids or font_registry.font_ids)
    for font_id in font_ids:
        font_registry.check(font_id)
    root = seeded_rng(seed)
    batches: List[PatchBatch] = []
    for index in range(count):
        rng = root.substream('recognizer-corpus', index).numpy
        font_id = font_ids[int(rng.integers(0, len(font_ids)))]
        font_px = int(rng.integers(min_char_px, max_char_px + 1))
        region = line_region(rng, alphabet, font_id, font_px, CORPUS_CANVAS, font_registry)
        if region is None:
            continue
        style = BenchmarkStyle.SCENE if rng.random() < scene_fraction else BenchmarkStyle.PLAIN
        background, ink = colours(rng, style)
        _, _, w, h = region.bbox
        pixels = np.empty((h, w, 3), dtype=np.uint8)
        pixels[:] = background
        paint_region(pixels, region, ink, font_registry)
        image = torch.from_numpy(pixels).permute(2, 0, 1).float() / 255.0
        batches.append(crop_regions(image, [region], patch_height, patch_max_width))

    parameters = {'count': count, 'seed': seed, 'font_ids': font_ids, 'min_char_px': min_char_px,
                  'max_char_px': max_char_px, 'scene_fraction': scene_fraction}
    logger.info("Rendered %d recognizer patches over %d font(s), alphabet of %d", count, len(font_ids),
                len(alphabet))
    return RecognizerCorpus(PatchBatch.concatenate(batches, patch_height, patch_max_width), alphabet, parameters)
