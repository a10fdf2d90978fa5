"""
Deterministic DDIM inference.

A request's layout is turned into a hint, its caption into an embedding, and a seeded Gaussian latent is denoised
over a uniformly strided, strictly decreasing timestep subsequence that starts at T and ends at the noise-free index
0. Decoded images are clamped to [0, 1].
"""
import json
import logging
import os
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
import torch

from textcontrol.diffusion.codec import tensor_to_images
from textcontrol.diffusion.model import TextControlModel
from textcontrol.diffusion.schedule import NoiseSchedule, estimate_z0
from textcontrol.domain import AnnotatedImage, HintImage, TextRegion
from textcontrol.enums import HintKind
from textcontrol.exceptions import FontError, RequestError, TimestepOutOfRange
from textcontrol.hints.canny import CannyParams
from textcontrol.hints.fonts import FontRegistry
from textcontrol.hints.render import HintBuilder
from textcontrol.manifest import save_manifest, write_png
from textcontrol.rng import seeded_rng

logger = logging.getLogger(__name__)

DEFAULT_STEPS = 20
DEFAULT_BATCH = 4


@dataclass
class SampleRequest:
    caption: str
    regions: List[TextRegion]
    hint_kind: HintKind = HintKind.GLYPH
    steps: int = DEFAULT_STEPS
    seed: int = 0
    batch: int = DEFAULT_BATCH
    negative_prompt: str = ''
    guidance: float = 1.0  # 1.0 disables classifier-free guidance.
    request_id: str = 'sample'

    def validate(self, timesteps: int) -> 'SampleRequest':
        if not 1 <= self.steps <= timesteps:
            raise RequestError(f"steps must be in [1, {timesteps}], got {self.steps}")
        if self.batch < 1:
            raise RequestError(f"batch must be >= 1, got {self.batch}")
        if self.guidance < 0:
            raise RequestError(f"guidance must be >= 0, got {self.guidance}")
        return self

    def to_dict(self) -> dict:
        return {'request_id': self.request_id, 'caption': self.caption,
                'regions': [r.to_dict() for r in self.regions], 'hint_kind': self.hint_kind.value,
                'steps': self.steps, 'seed': self.seed, 'batch': self.batch,
                'negative_prompt': self.negative_prompt, 'guidance': self.guidance}

    @classmethod
    def from_dict(cls, values: dict) -> 'SampleRequest':
        try:
            return cls(caption=str(values['caption']),
                       regions=[TextRegion.from_dict(r) for r in values.get('regions', [])],
                       hint_kind=HintKind(values.get('hint_kind', HintKind.GLYPH.value)),
                       steps=int(values.get('steps', DEFAULT_STEPS)), seed=int(values.get('seed', 0)),
                       batch=int(values.get('batch', DEFAULT_BATCH)),
                       negative_prompt=str(values.get('negative_prompt', '')),
                       guidance=float(values.get('guidance', 1.0)),
                       request_id=str(values.get('request_id', 'sample')))
        except (KeyError, TypeError, ValueError) as e:
            raise RequestError(f"Malformed sample request: {e!r}") from e

    @classmethod
    def read(cls, path: str) -> 'SampleRequest':
        """
        Reads a request from a JSON file holding one object.
        """
        try:
            with open(path, 'r', encoding='utf-8') as request_file:
                return cls.from_dict(json.load(request_file))
        except (OSError, json.JSONDecodeError) as e:
            raise RequestError(f"Could not read sample request {path}: {e}") from e


@dataclass
class SampleResult:
    request: SampleRequest
    images: List[np.ndarray]  # H x W x 3 uint8
    hint: HintImage
    evaluations: int
    timesteps: List[Tuple[int, int]] = field(default_factory=list)


def ddim_timesteps(T: int, steps: int) -> List[Tuple[int, int]]:
    """
    (t, t_prev) pairs of a uniform stride over T..0, e.g. T=1000, steps=20 -> (1000, 950), ..., (50, 0).
    """
    if not 1 <= steps <= T:
        raise TimestepOutOfRange(f"steps must be in [1, {T}], got {steps}")
    points = np.rint(np.linspace(T, 0, steps + 1)).astype(int).tolist()
    return list(zip(points[:-1], points[1:]))


def ddim_step(z_t: torch.Tensor, t: int, t_prev: int, eps_hat: torch.Tensor, schedule: NoiseSchedule) -> torch.Tensor:
    """
    Deterministic (eta = 0) DDIM update from t to t_prev <= t.
    """
    if t_prev > t or t_prev < 0:
        raise TimestepOutOfRange(f"DDIM step needs 0 <= t_prev <= t, got t={t}, t_prev={t_prev}")
    z0 = estimate_z0(z_t, t, eps_hat, schedule)
    signal, noise = schedule.coefficients(t_prev, z_t, allow_zero=True)
    return signal * z0 + noise * eps_hat


class Sampler:
    """
    Runs sample requests against one model. ``evaluations`` counts denoiser evaluations per image.
    """

    def __init__(self, model: TextControlModel, font_registry: FontRegistry):
        self.model = model.eval()
        self.font_registry = font_registry
        self.evaluations = 0

    def hint_builder(self, kind: HintKind) -> HintBuilder:
        config = self.model.config
        return HintBuilder(kind, self.font_registry, config.uniform_font,
                           CannyParams(config.canny_low, config.canny_high, config.canny_sigma))

    def build_hint(self, request: SampleRequest) -> HintImage:
        size = self.model.config.image_size
        try:
            return self.hint_builder(request.hint_kind).build_from_layout(request.regions, (size, size),
                                                                          source_id=request.request_id)
        except FontError as e:
            raise RequestError(f"Cannot build a {request.hint_kind.value} hint: {e.message}") from e

    def predict(self, z: torch.Tensor, t: int, text, hint: torch.Tensor, negative, guidance: float) -> torch.Tensor:
        if negative is None:
            self.evaluations += z.shape[0]
            return self.model.predict_eps(z, t, text, hint)
        both = self.model.predict_eps(torch.cat([z, z]), t, negative.cat(text), torch.cat([hint, hint]))
        self.evaluations += 2 * z.shape[0]
        unconditional, conditional = both.chunk(2)
        return unconditional + guidance * (conditional - unconditional)

    @torch.no_grad()
    def sample(self, request: SampleRequest) -> SampleResult:
        config = self.model.config
        request.validate(config.timesteps)
        hint_image = self.build_hint(request)
        hint = torch.from_numpy(hint_image.pixels)[None, None].repeat(request.batch, 1, 1, 1)
        text = self.model.encode_text([request.caption] * request.batch)
        negative = None
        if request.guidance != 1.0:
            negative = self.model.encode_text([request.negative_prompt] * request.batch)

        stream = seeded_rng(request.seed).substream('sample-noise')
        z = torch.randn((request.batch,) + config.latent_shape, generator=stream.torch)
        plan = ddim_timesteps(config.timesteps, request.steps)
        start = self.evaluations
        for t, t_prev in plan:
            eps_hat = self.predict(z, t, text, hint, negative, request.guidance)
            z = ddim_step(z, t, t_prev, eps_hat, self.model.schedule)
        pixels = torch.nan_to_num(self.model.codec.decode(z), nan=0.0).clamp(0.0, 1.0)
        logger.info("Sampled %d image(s) for %s in %d steps (%d denoiser evaluations)", request.batch,
                    request.request_id, request.steps, self.evaluations - start)
        return SampleResult(request=request, images=tensor_to_images(pixels), hint=hint_image,
                            evaluations=self.evaluations - start, timesteps=plan)


def write_samples(out_dir: str, result: SampleResult, metadata: Optional[dict] = None) -> str:
    """
    Writes the sampled images, the hint and a sidecar manifest echoing the request's regions.
    :return: Manifest path.
    """
    request = result.request
    os.makedirs(out_dir, exist_ok=True)
    write_png(os.path.join(out_dir, f"{request.request_id}-hint.png"), result.hint.to_uint8())
    images = [AnnotatedImage(image_id=f"{request.request_id}-{request.seed}-{i:02d}", image=image,
                             caption=request.caption, regions=list(request.regions))
              for i, image in enumerate(result.images)]
    header = {'request': request.to_dict(), 'evaluations': result.evaluations,
              'timesteps': [list(pair) for pair in result.timesteps], 'hint_notes': result.hint.notes}
    header.update(metadata or {})
    return save_manifest(os.path.join(out_dir, 'samples.jsonl'), images, metadata=header)


def sample_layouts(sampler: Sampler, images: Sequence[AnnotatedImage], hint_kind: HintKind, steps: int, seed: int,
                   batch: int = DEFAULT_BATCH) -> List[SampleResult]:
    """
    One request per annotated image, reusing its caption and layout.
    """
    results = []
    for index, image in enumerate(images):
        request = SampleRequest(caption=image.caption, regions=list(image.regions), hint_kind=hint_kind,
                                steps=steps, seed=seed + index, batch=batch, request_id=image.image_id)
        results.append(sampler.sample(request))
    return results
