"""
Value types shared by every stage of the pipeline.
"""
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Tuple

import numpy as np

from textcontrol.enums import HintKind
from textcontrol.exceptions import ShapeMismatch

BBox = Tuple[int, int, int, int]


@dataclass(frozen=True)
class TextRegion:
    """
    One line of text: its string, pixel bounding box (x, y, w, h; origin top-left), font and glyph height.
    """
    text: str
    bbox: BBox
    font_id: str
    font_px: int

    @property
    def is_blank(self) -> bool:
        return not self.text.strip()

    @property
    def area(self) -> int:
        return max(self.bbox[2], 0) * max(self.bbox[3], 0)

    def clamped(self, width: int, height: int) -> Optional['TextRegion']:
        """
        Clamps the bounding box to an image of the given size.
        :return: The clamped region, or None if nothing of the box is left inside the image.
        """
        x, y, w, h = self.bbox
        x0, y0 = max(x, 0), max(y, 0)
        x1, y1 = min(x + w, width), min(y + h, height)
        if x1 <= x0 or y1 <= y0:
            return None
        return replace(self, bbox=(x0, y0, x1 - x0, y1 - y0))

    def overlaps(self, other: 'TextRegion') -> bool:
        ax, ay, aw, ah = self.bbox
        bx, by, bw, bh = other.bbox
        return ax < bx + bw and bx < ax + aw and ay < by + bh and by < ay + ah

    def to_dict(self) -> dict:
        return {'text': self.text, 'bbox': list(self.bbox), 'font_id': self.font_id, 'font_px': self.font_px}

    @classmethod
    def from_dict(cls, region_dict: dict) -> 'TextRegion':
        x, y, w, h = (int(v) for v in region_dict['bbox'])
        return cls(text=str(region_dict['text']), bbox=(x, y, w, h), font_id=str(region_dict['font_id']),
                   font_px=int(region_dict['font_px']))


@dataclass
class AnnotatedImage:
    """
    An image, its caption and its text regions: the unit of training and benchmark data.
    """
    image_id: str
    image: np.ndarray  # H x W x 3, uint8
    caption: str
    regions: List[TextRegion] = field(default_factory=list)
    captions: Dict[str, str] = field(default_factory=dict)  # Alternative captions keyed by source.
    image_path: Optional[str] = None

    def __post_init__(self):
        if self.image.ndim != 3 or self.image.shape[2] != 3 or self.image.dtype != np.uint8:
            raise ShapeMismatch(f"Image {self.image_id} must be an HxWx3 uint8 array, got "
                                f"{self.image.shape} {self.image.dtype}")

    @property
    def size(self) -> Tuple[int, int]:
        return self.image.shape[0], self.image.shape[1]

    def caption_for(self, key: str) -> str:
        """
        Caption from the given source, falling back to the main caption.
        """
        if key == 'caption':
            return self.caption
        return self.captions.get(key, self.caption)


@dataclass
class HintImage:
    """
    Single-channel conditioning image aligned with its source image. Pixels are in [0, 1].
    """
    kind: HintKind
    pixels: np.ndarray  # H x W, float32
    source_id: str
    notes: List[str] = field(default_factory=list)  # Regions skipped while building the hint.

    @property
    def size(self) -> Tuple[int, int]:
        return self.pixels.shape

    def to_uint8(self) -> np.ndarray:
        return np.rint(np.clip(self.pixels, 0.0, 1.0) * 255.0).astype(np.uint8)
