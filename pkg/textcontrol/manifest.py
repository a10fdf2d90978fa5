"""
Line-delimited JSON dataset manifests.

The first line may be a header ``{"manifest_version": 1, "metadata": {...}}``. Every other line is one record::

    {"id": "...", "image_path": "images/x.png", "caption": "...", "captions": {...},
     "regions": [{"text": "...", "bbox": [x, y, w, h], "font_id": "...", "font_px": 12}]}

Image paths are relative to the manifest's directory.
"""
import json
import logging
import os
from dataclasses import dataclass, field
from typing import Iterable, List, Optional

import numpy as np
from PIL import Image

from textcontrol.domain import AnnotatedImage, TextRegion
from textcontrol.exceptions import ManifestError, MissingImageFile

logger = logging.getLogger(__name__)

MANIFEST_VERSION = 1


@dataclass
class LoadedDataset:
    images: List[AnnotatedImage]
    metadata: dict = field(default_factory=dict)
    dropped_regions: int = 0  # Regions rejected for blank text or zero area after clamping.
    clamped_regions: int = 0

    def __len__(self):
        return len(self.images)


def read_png(path: str) -> np.ndarray:
    with Image.open(path) as image:
        return np.asarray(image.convert('RGB'), dtype=np.uint8).copy()


def write_png(path: str, pixels: np.ndarray):
    mode = 'L' if pixels.ndim == 2 else 'RGB'
    # Fixed encoder options so identical pixels give identical bytes.
    Image.fromarray(pixels, mode=mode).save(path, format='PNG', optimize=False, compress_level=6)


def _parse_record(record: dict, base_dir: str, line_number: int, dataset: LoadedDataset,
                  image_size: Optional[int]) -> AnnotatedImage:
    try:
        image_path = record['image_path']
        caption = str(record['caption'])
        raw_regions = record.get('regions', [])
        captions = {str(k): str(v) for k, v in record.get('captions', {}).items()}
        regions = [TextRegion.from_dict(r) for r in raw_regions]
    except (KeyError, TypeError, ValueError, AttributeError) as e:
        raise ManifestError(f"Malformed record: {e!r}", line_number=line_number) from e

    full_path = image_path if os.path.isabs(image_path) else os.path.join(base_dir, image_path)
    if not os.path.isfile(full_path):
        raise MissingImageFile(f"Image file not found: {full_path}", path=full_path, line_number=line_number)
    pixels = read_png(full_path)
    height, width = pixels.shape[:2]
    if image_size is not None and (height, width) != (image_size, image_size):
        raise ManifestError(f"Image {full_path} is {width}x{height}, expected {image_size}x{image_size}",
                            line_number=line_number)

    kept = []
    for region in regions:
        if region.is_blank:
            dataset.dropped_regions += 1
            continue
        clamped = region.clamped(width, height)
        if clamped is None:
            dataset.dropped_regions += 1
            continue
        if clamped.bbox != region.bbox:
            dataset.clamped_regions += 1
        kept.append(clamped)

    image_id = str(record.get('id') or os.path.splitext(os.path.basename(image_path))[0])
    return AnnotatedImage(image_id=image_id, image=pixels, caption=caption, regions=kept, captions=captions,
                          image_path=image_path)


def load_dataset(manifest_path: str, image_size: Optional[int] = None) -> LoadedDataset:
    """
    Loads every record of a manifest.
    :param manifest_path: Path to the line-delimited manifest.
    :param image_size: When given, every image must be image_size x image_size.
    :return: LoadedDataset with clamped regions and the count of dropped regions.
    :raises ManifestError: On a malformed line, with its line number.
    :raises MissingImageFile: When a record's image does not exist.
    """
    base_dir = os.path.dirname(os.path.abspath(manifest_path))
    dataset = LoadedDataset(images=[])
    with open(manifest_path, 'r', encoding='utf-8') as manifest:
        for line_number, line in enumerate(manifest, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as e:
                raise ManifestError(f"Invalid JSON: {e.msg}", line_number=line_number) from e
            if not isinstance(record, dict):
                raise ManifestError("Record is not an object", line_number=line_number)
            if 'manifest_version' in record:
                if line_number != 1:
                    raise ManifestError("Header must be the first line", line_number=line_number)
                dataset.metadata = dict(record.get('metadata', {}))
                continue
            dataset.images.append(_parse_record(record, base_dir, line_number, dataset, image_size))

    if dataset.dropped_regions:
        logger.warning("Dropped %d regions from %s (blank text or empty after clamping)",
                       dataset.dropped_regions, manifest_path)
    logger.info("Loaded %d images from %s", len(dataset.images), manifest_path)
    return dataset


def record_for(image: AnnotatedImage, image_path: str) -> dict:
    record = {
        'id': image.image_id,
        'image_path': image_path,
        'caption': image.caption,
        'regions': [r.to_dict() for r in image.regions],
    }
    if image.captions:
        record['captions'] = dict(sorted(image.captions.items()))
    return record


def save_manifest(manifest_path: str, images: Iterable[AnnotatedImage], metadata: Optional[dict] = None,
                  image_dir: str = 'images') -> str:
    """
    Writes a manifest. Images without an image_path are written as PNG under image_dir next to the manifest.
    :return: The manifest path.
    """
    base_dir = os.path.dirname(os.path.abspath(manifest_path))
    os.makedirs(base_dir, exist_ok=True)
    lines = [json.dumps({'manifest_version': MANIFEST_VERSION, 'metadata': metadata or {}}, sort_keys=True)]
    for image in images:
        image_path = image.image_path
        if image_path is None:
            image_path = f"{image_dir}/{image.image_id}.png"
            os.makedirs(os.path.join(base_dir, image_dir), exist_ok=True)
            write_png(os.path.join(base_dir, image_path), image.image)
        lines.append(json.dumps(record_for(image, image_path), ensure_ascii=False, sort_keys=True))
    with open(manifest_path, 'w', encoding='utf-8') as manifest:
        manifest.write('\n'.join(lines) + '\n')
    return manifest_path
