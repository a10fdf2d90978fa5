import functools
import glob
import logging
import os
from typing import Dict, Iterable, Optional

from django.conf import settings
from PIL import ImageFont

from textcontrol.exceptions import UnknownFont

logger = logging.getLogger(__name__)

BUILTIN_FONT = 'default'


class FontRegistry:
    """
    Read-only map from font id to an outline font that rasterises at any pixel height.

    The id ``default`` always resolves to Pillow's bundled outline font. Glyphs a font lacks rasterise as the
    font's own ``.notdef`` glyph, which for the bundled font and most TrueType fonts is a hollow box.
    """

    def __init__(self, font_paths: Optional[Dict[str, Optional[str]]] = None):
        self._paths: Dict[str, Optional[str]] = {BUILTIN_FONT: None}
        self._paths.update(font_paths or {})

    @classmethod
    def from_directory(cls, font_dir: Optional[str]) -> 'FontRegistry':
        paths = {}
        if font_dir:
            for pattern in ('*.ttf', '*.otf', '*.ttc'):
                for path in sorted(glob.glob(os.path.join(font_dir, pattern))):
                    paths[os.path.splitext(os.path.basename(path))[0]] = path
            logger.info("Registered %d fonts from %s", len(paths), font_dir)
        return cls(paths)

    @classmethod
    def from_settings(cls) -> 'FontRegistry':
        return cls.from_directory(settings.TEXTCONTROL_FONT_DIR)

    @property
    def font_ids(self) -> Iterable[str]:
        return sorted(self._paths)

    def __contains__(self, font_id: str) -> bool:
        return font_id in self._paths

    def check(self, font_id: str):
        """
        :raises UnknownFont: When the font id is not registered.
        """
        if font_id not in self._paths:
            raise UnknownFont(f"Unknown font \"{font_id:s}\"; registered: {', '.join(self.font_ids)}")

    def get(self, font_id: str, font_px: int) -> ImageFont.FreeTypeFont:
        """
        Loads a font at a pixel size.
        :raises UnknownFont: When the font id is not registered.
        """
        self.check(font_id)
        return self._load(font_id, int(font_px))

    @functools.lru_cache(maxsize=256)
    def _load(self, font_id: str, font_px: int) -> ImageFont.FreeTypeFont:
        path = self._paths[font_id]
        if path is None:
            return ImageFont.load_default(size=font_px)
        return ImageFont.truetype(path, font_px)

    def __repr__(self):
        return f"<FontRegistry: {', '.join(self.font_ids)}>"
