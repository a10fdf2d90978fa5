"""
Benchmark evaluation.

Each benchmark entry is sampled ``batch`` times from its caption and layout (or, with ``generate=False``, its
reference image is evaluated as-is). Text regions are cropped at the benchmark's bounding boxes, recognised by an
OCR engine and scored per line with sentence accuracy and normalised edit distance.
"""
import json
import logging
import math
import os
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
import torch
from django.core.exceptions import ValidationError

from textcontrol.diffusion.checkpoint import load_checkpoint
from textcontrol.enums import HintKind
from textcontrol.evaluation.engine_base import OcrEngine
from textcontrol.evaluation.engines import crop_patch
from textcontrol.evaluation.metrics import frechet_distance, mean_ned, normalized_edit_distance, \
    normalize_whitespace, sentence_accuracy
from textcontrol.exceptions import MetricError
from textcontrol.hints.fonts import FontRegistry
from textcontrol.manifest import load_dataset, write_png
from textcontrol.perception.ocr_loss import PatchBatch
from textcontrol.perception.recognizer import Recognizer
from textcontrol.sampler import DEFAULT_BATCH, DEFAULT_STEPS, SampleRequest, Sampler

logger = logging.getLogger(__name__)

REPORT_VERSION = 1


@dataclass
class RegionRecord:
    image_id: str
    sample: int
    font_id: str
    gt: str
    recognized: str
    ned: float
    exact: bool
    failed: bool = False

    @classmethod
    def from_dict(cls, values: dict) -> 'RegionRecord':
        return cls(**values)


@dataclass
class EvalReport:
    name: str
    acc: float
    ned: float
    lines: int  # Scored text lines: benchmark regions times samples per entry.
    images: int
    failures: int  # Crops the OCR engine failed on, scored as "".
    fid: Optional[float] = None
    per_font: Dict[str, dict] = field(default_factory=dict)
    records: List[RegionRecord] = field(default_factory=list)
    parameters: dict = field(default_factory=dict)

    def validate(self) -> 'EvalReport':
        for key in ('acc', 'ned'):
            value = getattr(self, key)
            if not (math.isfinite(value) and 0.0 <= value <= 1.0):
                raise MetricError(f"{key} must be a finite value in [0, 1], got {value}")
        if self.fid is not None and not (math.isfinite(self.fid) and self.fid >= 0.0):
            raise MetricError(f"fid must be finite and >= 0, got {self.fid}")
        return self

    def to_dict(self) -> dict:
        values = asdict(self)
        values['report_version'] = REPORT_VERSION
        return values

    @classmethod
    def from_dict(cls, values: dict) -> 'EvalReport':
        values = dict(values)
        if values.pop('report_version', None) != REPORT_VERSION:
            raise ValidationError(f"Not a version {REPORT_VERSION} evaluation report")
        values['records'] = [RegionRecord.from_dict(r) for r in values.get('records', [])]
        return cls(**values).validate()

    def write(self, path: str) -> str:
        directory = os.path.dirname(os.path.abspath(path))
        os.makedirs(directory, exist_ok=True)
        with open(path, 'w', encoding='utf-8') as report_file:
            json.dump(self.to_dict(), report_file, indent=2, sort_keys=True, ensure_ascii=False)
            report_file.write('\n')
        return path

    @classmethod
    def read(cls, path: str) -> 'EvalReport':
        try:
            with open(path, 'r', encoding='utf-8') as report_file:
                return cls.from_dict(json.load(report_file))
        except (OSError, json.JSONDecodeError, TypeError) as e:
            raise ValidationError(f"Could not read evaluation report {path}: {e}") from e


def score_records(records: Sequence[RegionRecord]) -> dict:
    pairs = [(r.recognized, r.gt) for r in records]
    return {'acc': sentence_accuracy(pairs), 'ned': mean_ned(pairs), 'lines': len(pairs)}


def per_font_scores(records: Sequence[RegionRecord]) -> Dict[str, dict]:
    grouped = defaultdict(list)
    for record in records:
        grouped[record.font_id].append(record)
    return {font_id: score_records(grouped[font_id]) for font_id in sorted(grouped)}


def image_features(recognizer: Recognizer, images: Sequence[np.ndarray], batch_size: int = 64) -> np.ndarray:
    """
    Pooled third-layer recognizer features of whole images, one row per image.
    """
    rows = []
    for start in range(0, len(images), batch_size):
        chunk = [crop_patch(image, recognizer) for image in images[start:start + batch_size]]
        patches = PatchBatch.concatenate(chunk, recognizer.patch_height, recognizer.patch_max_width)
        with torch.no_grad():
            rows.append(recognizer.pooled_features(patches.pixels, patches.widths).double().numpy())
    return np.concatenate(rows, axis=0)


def evaluate_benchmark(benchmark_path: str, engine: OcrEngine, checkpoint: Optional[str] = None,
                       seed: int = 0, generate: bool = True, steps: int = DEFAULT_STEPS,
                       batch: int = DEFAULT_BATCH, hint_kind: Optional[HintKind] = None,
                       base_checkpoint: Optional[str] = None, feature_recognizer: Optional[Recognizer] = None,
                       font_registry: Optional[FontRegistry] = None, image_dir: Optional[str] = None,
                       name: Optional[str] = None) -> EvalReport:
    """
    Evaluates a checkpoint on a benchmark manifest.
    :param generate: False scores the benchmark's own images instead of generated ones.
    :param feature_recognizer: When given, the FID between generated and reference images is computed from its
        pooled features.
    :param image_dir: When given, generated images are written there as ``<id>-<k>.png``.
    :raises ValidationError: When generation is requested without a checkpoint, or the benchmark does not fit the
        model.
    """
    dataset = load_dataset(benchmark_path)
    if not dataset.images:
        raise ValidationError(f"Benchmark {benchmark_path} has no images")
    parameters = {'benchmark': os.path.abspath(benchmark_path), 'generate': generate, 'seed': seed,
                  'engine': engine.describe()}

    sampler = None
    if generate:
        if not checkpoint:
            raise ValidationError("Generating benchmark images needs --checkpoint (or pass --no-generate)")
        model, _ = load_checkpoint(checkpoint, base_path=base_checkpoint)
        size = model.config.image_size
        for image in dataset.images:
            if image.size != (size, size):
                raise ValidationError(f"Benchmark image {image.image_id} is {image.size[1]}x{image.size[0]}, the "
                                      f"model generates {size}x{size}")
        sampler = Sampler(model, font_registry or FontRegistry.from_settings())
        hint_kind = hint_kind or model.config.hint_kind
        parameters.update({'checkpoint': os.path.abspath(checkpoint), 'steps': steps, 'batch': batch,
                           'hint_kind': hint_kind.value})

    crops, pending = [], []
    generated = []
    for index, image in enumerate(dataset.images):
        if sampler is None:
            samples = [image.image]
        else:
            request = SampleRequest(caption=image.caption, regions=list(image.regions), hint_kind=hint_kind,
                                    steps=steps, seed=seed + index, batch=batch, request_id=image.image_id)
            samples = sampler.sample(request).images
            generated.extend(samples)
            if image_dir:
                os.makedirs(image_dir, exist_ok=True)
                for k, sample in enumerate(samples):
                    write_png(os.path.join(image_dir, f"{image.image_id}-{k:02d}.png"), sample)
        for k, sample in enumerate(samples):
            for region in image.regions:
                x, y, w, h = region.bbox
                crops.append(sample[y:y + h, x:x + w])
                pending.append((image.image_id, k, region))
    if not crops:
        raise ValidationError(f"Benchmark {benchmark_path} has no text lines to score")

    recognized = engine.recognize_crops(crops)
    records = []
    for (image_id, k, region), text in zip(pending, recognized):
        failed = text is None
        text = '' if failed else text
        records.append(RegionRecord(image_id=image_id, sample=k, font_id=region.font_id, gt=region.text,
                                    recognized=text, ned=normalized_edit_distance(text, region.text),
                                    exact=normalize_whitespace(text) == normalize_whitespace(region.text),
                                    failed=failed))
    failures = sum(r.failed for r in records)
    if failures:
        logger.warning("OCR failed on %d of %d crops; scored as empty text", failures, len(records))

    fid = None
    if feature_recognizer is not None and generated:
        if len(generated) < 2 or len(dataset.images) < 2:
            logger.warning("FID needs at least two generated and two reference images; skipped")
        else:
            fid = frechet_distance(image_features(feature_recognizer, [i.image for i in dataset.images]),
                                   image_features(feature_recognizer, generated))

    scores = score_records(records)
    report = EvalReport(name=name or os.path.splitext(os.path.basename(benchmark_path))[0], acc=scores['acc'],
                        ned=scores['ned'], lines=scores['lines'], images=len(dataset.images), failures=failures,
                        fid=fid, per_font=per_font_scores(records), records=records, parameters=parameters)
    logger.info("%s: ACC %.4f, NED %.4f over %d lines%s", report.name, report.acc, report.ned, report.lines,
                '' if fid is None else f", FID {fid:.4f}")
    return report.validate()
