"""
Typographic images and the three hint kinds.

Every hint starts from an all-black canvas the size of its source image; per-region results are pasted into the
region's bounding box with a pixelwise maximum, so disjoint regions compose independently.
"""
import logging
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
from PIL import Image, ImageDraw

from textcontrol.domain import AnnotatedImage, HintImage, TextRegion
from textcontrol.enums import HintKind
from textcontrol.exceptions import GlyphOverflow
from textcontrol.hints.canny import CannyParams, canny
from textcontrol.hints.fonts import FontRegistry
from textcontrol.hints.segmentation_base import Segmenter, ThresholdSegmenter

logger = logging.getLogger(__name__)

SegmentFunction = Union[Segmenter, Callable[[np.ndarray], np.ndarray]]


def rasterize_region(region: TextRegion, font_registry: FontRegistry, font_id: Optional[str] = None) -> np.ndarray:
    """
    Rasterises a region's text into an array the size of its bounding box.
    :param font_id: Font to use instead of the region's own.
    :return: h x w uint8 coverage, 255 where the glyphs are fully inked.
    :raises UnknownFont: When the font does not resolve.
    :raises GlyphOverflow: When the rendered text is taller than the bounding box.
    """
    font_id = font_id or region.font_id
    font = font_registry.get(font_id, region.font_px)
    _, _, w, h = region.bbox
    _, _, _, ink_bottom = font.getbbox(region.text, anchor='lt')
    if ink_bottom > h:
        raise GlyphOverflow(f"Text \"{region.text}\" in font {font_id} at {region.font_px}px is {ink_bottom}px "
                            f"tall, which does not fit bbox {region.bbox}")
    canvas = Image.new('L', (w, h), 0)
    ImageDraw.Draw(canvas).text((0, 0), region.text, fill=255, font=font, anchor='lt')
    return np.asarray(canvas, dtype=np.uint8)


def render_typographic_image(regions: Sequence[TextRegion], size: Tuple[int, int],
                             font_registry: FontRegistry) -> np.ndarray:
    """
    Prints regions in their own fonts, black on white.
    :param size: (H, W).
    :return: H x W x 3 uint8 image.
    """
    height, width = size
    gray = np.full((height, width), 255, dtype=np.uint8)
    for region in regions:
        visible = _visible_slices(region, gray.shape)
        if visible is None:
            logger.warning("Typographic image: bbox %s of \"%s\" lies outside the %dx%d canvas",
                           region.bbox, region.text, height, width)
            continue
        coverage = rasterize_region(region, font_registry)
        box, inner = visible
        np.minimum(gray[box], 255 - coverage[inner], out=gray[box])
    return np.repeat(gray[:, :, np.newaxis], 3, axis=2)


def _blank(size: Tuple[int, int]) -> np.ndarray:
    return np.zeros(size, dtype=np.float32)


def _visible_slices(region: TextRegion, shape: Tuple[int, ...]):
    """
    :return: (canvas slices, patch slices) of the part of the region's bbox inside the canvas, or None.
    """
    clamped = region.clamped(shape[1], shape[0])
    if clamped is None:
        return None
    x, y, _, _ = region.bbox
    cx, cy, cw, ch = clamped.bbox
    box = (slice(cy, cy + ch), slice(cx, cx + cw))
    inner = (slice(cy - y, cy - y + ch), slice(cx - x, cx - x + cw))
    return box, inner


def _paste(canvas: np.ndarray, region: TextRegion, patch: np.ndarray, notes: Optional[List[str]] = None):
    """
    Pastes a patch the size of the region's bbox; only the part inside the canvas is written.
    """
    visible = _visible_slices(region, canvas.shape)
    if visible is None:
        if notes is not None:
            notes.append(f"skipped bbox {region.bbox} of \"{region.text}\" outside the canvas")
        return
    box, inner = visible
    np.maximum(canvas[box], patch[inner].astype(np.float32), out=canvas[box])


def _usable_regions(image: AnnotatedImage, notes: List[str]) -> List[TextRegion]:
    height, width = image.size
    usable = []
    for region in image.regions:
        clamped = region.clamped(width, height)
        if clamped is None or clamped.bbox[2] < 1 or clamped.bbox[3] < 1:
            notes.append(f"skipped degenerate bbox {region.bbox} of \"{region.text}\"")
            continue
        usable.append(clamped)
    return usable


def make_glyph_hint(regions: Sequence[TextRegion], size: Tuple[int, int], uniform_font: str,
                    font_registry: FontRegistry, source_id: str = '') -> HintImage:
    """
    Renders every region in one uniform font, white on black, ignoring the regions' own fonts. Anti-aliased.
    """
    font_registry.check(uniform_font)
    notes: List[str] = []
    canvas = _blank(size)
    for region in regions:
        if region.clamped(size[1], size[0]) is None:
            notes.append(f"skipped bbox {region.bbox} of \"{region.text}\" outside the canvas")
            continue
        coverage = rasterize_region(region, font_registry, font_id=uniform_font)
        _paste(canvas, region, coverage.astype(np.float32) / 255.0, notes)
    for note in notes:
        logger.warning("Glyph hint for %s: %s", source_id or 'layout', note)
    return HintImage(kind=HintKind.GLYPH, pixels=canvas, source_id=source_id, notes=notes)


def make_canny_hint(image: AnnotatedImage, params: CannyParams = CannyParams()) -> HintImage:
    """
    Edge-detects each text box crop and pastes the edge maps onto a black canvas.
    """
    notes: List[str] = []
    canvas = _blank(image.size)
    gray = np.asarray(Image.fromarray(image.image, mode='RGB').convert('L'), dtype=np.float64) / 255.0
    for region in _usable_regions(image, notes):
        x, y, w, h = region.bbox
        edges = canny(gray[y:y + h, x:x + w], params)
        _paste(canvas, region, edges.astype(np.float32))
    for note in notes:
        logger.warning("Canny hint for %s: %s", image.image_id, note)
    return HintImage(kind=HintKind.CANNY, pixels=canvas, source_id=image.image_id, notes=notes)


def make_font_hint(image: AnnotatedImage, segmenter: Optional[SegmentFunction] = None) -> HintImage:
    """
    Segments the text in each text box crop and pastes the binary masks onto a black canvas.
    A region whose segmentation fails is skipped and noted.
    """
    segmenter = segmenter or ThresholdSegmenter()
    notes: List[str] = []
    canvas = _blank(image.size)
    for region in _usable_regions(image, notes):
        x, y, w, h = region.bbox
        crop = image.image[y:y + h, x:x + w]
        try:
            mask = np.asarray(segmenter(crop))
        except Exception as e:
            notes.append(f"segmenter failed on \"{region.text}\": {e!r}")
            continue
        if mask.shape != (h, w):
            notes.append(f"segmenter returned shape {mask.shape} for a {h}x{w} crop of \"{region.text}\"")
            continue
        _paste(canvas, region, (mask > 0).astype(np.float32))
    for note in notes:
        logger.warning("Font hint for %s: %s", image.image_id, note)
    return HintImage(kind=HintKind.FONT, pixels=canvas, source_id=image.image_id, notes=notes)


class HintBuilder:
    """
    Builds hints of one kind with fixed parameters.
    """

    def __init__(self, kind: HintKind, font_registry: FontRegistry, uniform_font: str = 'default',
                 canny_params: CannyParams = CannyParams(), segmenter: Optional[SegmentFunction] = None):
        self.kind = kind
        self.font_registry = font_registry
        self.uniform_font = uniform_font
        self.canny_params = canny_params
        self.segmenter = segmenter or ThresholdSegmenter()

    @classmethod
    def from_config(cls, config, font_registry: FontRegistry, segmenter: Optional[SegmentFunction] = None):
        params = CannyParams(config.canny_low, config.canny_high, config.canny_sigma)
        return cls(config.hint_kind, font_registry, config.uniform_font, params, segmenter)

    def build(self, image: AnnotatedImage) -> HintImage:
        if self.kind == HintKind.GLYPH:
            return make_glyph_hint(image.regions, image.size, self.uniform_font, self.font_registry,
                                   source_id=image.image_id)
        elif self.kind == HintKind.CANNY:
            return make_canny_hint(image, self.canny_params)
        elif self.kind == HintKind.FONT:
            return make_font_hint(image, self.segmenter)
        raise ValueError(f"Unknown hint kind {self.kind!r}")

    def build_from_layout(self, regions: Sequence[TextRegion], size: Tuple[int, int],
                          source_id: str = '') -> HintImage:
        """
        Builds a hint from a layout alone: canny and font hints are taken from the layout's typographic image.
        """
        if self.kind == HintKind.GLYPH:
            return make_glyph_hint(regions, size, self.uniform_font, self.font_registry, source_id=source_id)
        typographic = AnnotatedImage(image_id=source_id, image=render_typographic_image(regions, size,
                                                                                         self.font_registry),
                                     caption='', regions=list(regions))
        return self.build(typographic)
