"""
Small-text benchmark generation: images dense with short lines of small text, placed without overlap.
"""
import logging
import os
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
from django.conf import settings

from textcontrol.domain import AnnotatedImage, TextRegion
from textcontrol.enums import BenchmarkStyle
from textcontrol.hints.fonts import FontRegistry
from textcontrol.hints.render import rasterize_region
from textcontrol.manifest import save_manifest
from textcontrol.rng import seeded_rng

logger = logging.getLogger(__name__)

PLACEMENT_ATTEMPTS = 30
MAX_LINE_CHARS = 8
CAPTION_TEMPLATES = (
    'a white card with the text {quoted}',
    'a printed sheet reading {quoted}',
    'a label that says {quoted}',
    'small lettering on paper: {quoted}',
)


@dataclass
class TinyBenchmark:
    images: List[AnnotatedImage]
    parameters: dict
    notes: List[str] = field(default_factory=list)

    @property
    def metadata(self) -> dict:
        return {'generator': 'tiny-benchmark', 'parameters': self.parameters, 'notes': self.notes}

    def write(self, out_dir: str, manifest_name: str = 'manifest.jsonl') -> str:
        """
        Writes every image as PNG plus the manifest.
        :return: Manifest path.
        """
        return save_manifest(os.path.join(out_dir, manifest_name), self.images, metadata=self.metadata)


def line_region(rng: np.random.Generator, pool: str, font_id: str, font_px: int, canvas: int,
                 font_registry: FontRegistry) -> Optional[TextRegion]:
    length = int(rng.integers(1, MAX_LINE_CHARS + 1))
    text = ''.join(pool[i] for i in rng.integers(0, len(pool), size=length))
    font = font_registry.get(font_id, font_px)
    while text:
        _, _, right, bottom = font.getbbox(text, anchor='lt')
        w, h = int(np.ceil(right)) + 1, max(int(np.ceil(bottom)), font_px)
        if w < canvas and h < canvas:
            return TextRegion(text=text, bbox=(0, 0, w, h), font_id=font_id, font_px=font_px)
        text = text[:-1]
    return None


def colours(rng: np.random.Generator, style: BenchmarkStyle):
    if style == BenchmarkStyle.PLAIN:
        return np.array([255, 255, 255], dtype=np.uint8), np.array([0, 0, 0], dtype=np.uint8)
    background = rng.integers(190, 256, size=3).astype(np.uint8)
    ink = rng.integers(0, 70, size=3).astype(np.uint8)
    return background, ink


def paint_region(pixels: np.ndarray, region: TextRegion, ink: np.ndarray, font_registry: FontRegistry):
    """
    Blends the region's text into an H x W x 3 uint8 image in place, weighted by glyph coverage.
    """
    coverage = rasterize_region(region, font_registry).astype(np.float32)[:, :, np.newaxis] / 255.0
    x, y, w, h = region.bbox
    box = pixels[y:y + h, x:x + w].astype(np.float32)
    pixels[y:y + h, x:x + w] = np.rint(box * (1.0 - coverage) + ink * coverage).astype(np.uint8)


def generate_tiny_benchmark(count: int, canvas: int, max_lines: int, max_char_px: int, seed: int,
                            font_registry: FontRegistry, pool: Optional[str] = None,
                            font_ids: Optional[Sequence[str]] = None, min_char_px: Optional[int] = None,
                            style: BenchmarkStyle = BenchmarkStyle.PLAIN) -> TinyBenchmark:
    """
    Generates a benchmark of images with 1..max_lines non-overlapping text lines, every font size below max_char_px.
    Lines that cannot be placed after a bounded number of attempts are left out and noted.
    """
    if not max_char_px < canvas:
        raise ValueError(f"max_char_px ({max_char_px}) must be smaller than canvas ({canvas})")
    pool = pool or settings.TEXTCONTROL_CHARACTER_POOL
    font_ids = list(font_ids or font_registry.font_ids)
    for font_id in font_ids:
        font_registry.check(font_id)
    # Half the maximum, at least 6 px, but always below the maximum.
    min_char_px = min_char_px or max(1, min(max(6, max_char_px // 2), max_char_px - 1))
    if not 0 < min_char_px < max_char_px:
        raise ValueError(f"Need 0 < min_char_px < max_char_px, got {min_char_px}, {max_char_px}")

    parameters = {'count': count, 'canvas': canvas, 'max_lines': max_lines, 'max_char_px': max_char_px,
                  'min_char_px': min_char_px, 'seed': seed, 'pool': pool, 'font_ids': font_ids,
                  'style': style.value, 'placement_attempts': PLACEMENT_ATTEMPTS}
    root = seeded_rng(seed)
    images, notes = [], []
    for index in range(count):
        rng = root.substream('benchmark-image', index).numpy
        wanted = int(rng.integers(1, max_lines + 1))
        background, ink = colours(rng, style)
        pixels = np.empty((canvas, canvas, 3), dtype=np.uint8)
        pixels[:] = background
        placed: List[TextRegion] = []
        for _ in range(wanted):
            font_id = font_ids[int(rng.integers(0, len(font_ids)))]
            font_px = int(rng.integers(min_char_px, max_char_px))
            candidate = line_region(rng, pool, font_id, font_px, canvas, font_registry)
            region = None
            attempts = PLACEMENT_ATTEMPTS if candidate is not None else 0
            for _ in range(attempts):
                _, _, w, h = candidate.bbox
                x = int(rng.integers(0, canvas - w + 1))
                y = int(rng.integers(0, canvas - h + 1))
                moved = TextRegion(candidate.text, (x, y, w, h), candidate.font_id, candidate.font_px)
                if not any(moved.overlaps(other) for other in placed):
                    region = moved
                    break
            if region is None:
                notes.append(f"image {index:05d}: placed {len(placed)} of {wanted} lines")
                break
            placed.append(region)
            paint_region(pixels, region, ink, font_registry)

        quoted = ', '.join(f'"{r.text}"' for r in placed)
        template = CAPTION_TEMPLATES[int(rng.integers(0, len(CAPTION_TEMPLATES)))]
        images.append(AnnotatedImage(
            image_id=f"tiny-{index:05d}", image=pixels, caption=template.format(quoted=quoted), regions=placed,
            captions={'short': quoted}))

    for note in notes:
        logger.warning("Benchmark placement: %s", note)
    logger.info("Generated %d benchmark images (%dx%d, <= %d lines, < %dpx glyphs)", count, canvas, canvas,
                max_lines, max_char_px)
    return TinyBenchmark(images=images, parameters=parameters, notes=notes)
