"""
Training loop.

Each step encodes the clean images, noises them at uniformly drawn timesteps, predicts the noise with the control
features of the hints, and optimises L_LDM (plus lambda * L_OCR on the decoded clean-image estimate when enabled).
Data order comes from a per-epoch substream and noise from a generator whose state is checkpointed, so a resumed run
reproduces the uninterrupted one.
"""
import json
import logging
import math
import os
import time
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np
import torch
from django.conf import settings
from django.core.exceptions import ValidationError

from textcontrol.config import TrainConfig, write_effective_config
from textcontrol.diffusion.checkpoint import load_base_weights, read_checkpoint, check_compatible, save_checkpoint
from textcontrol.diffusion.codec import images_to_tensor, pretrain_codec
from textcontrol.diffusion.controlnet import hint_tensor
from textcontrol.diffusion.losses import ldm_loss
from textcontrol.diffusion.model import TextControlModel
from textcontrol.diffusion.schedule import add_noise, estimate_x0
from textcontrol.domain import AnnotatedImage, HintImage, TextRegion
from textcontrol.enums import CodecMode, TrainingStage
from textcontrol.exceptions import NonFiniteLoss
from textcontrol.hints.fonts import FontRegistry
from textcontrol.hints.render import HintBuilder
from textcontrol.manifest import load_dataset
from textcontrol.perception.ocr_loss import crop_pairs, ocr_loss, total_loss
from textcontrol.perception.recognizer import Recognizer, load_recognizer
from textcontrol.rng import RandomStream, seeded_rng

logger = logging.getLogger(__name__)

CHECKPOINT_NAME = 'checkpoint.pt'
METRICS_NAME = 'metrics.jsonl'


@dataclass
class TrainBatch:
    images: torch.Tensor  # (B, 3, H, W) in [0, 1]
    hints: torch.Tensor  # (B, 1, H, W)
    captions: List[str]
    regions: List[List[TextRegion]]

    def __len__(self):
        return self.images.shape[0]


@dataclass
class LossRecord:
    step: int
    t_mean: float
    l_ldm: float
    l_ocr: Optional[float]
    total: float
    grad_norm: float
    wallclock: float = 0.0
    ocr_skipped: bool = False

    def to_dict(self) -> dict:
        record = {'step': self.step, 't_mean': self.t_mean, 'l_ldm': self.l_ldm, 'total': self.total,
                  'grad_norm': self.grad_norm, 'wallclock': self.wallclock}
        if self.l_ocr is not None:
            record['l_ocr'] = self.l_ocr
        return record


@dataclass
class TrainState:
    step: int = 0
    epoch: int = 0
    batch_index: int = 0  # Next batch within the epoch.
    averages: dict = field(default_factory=dict)
    ocr_skipped: int = 0
    optimizer: Optional[dict] = None
    noise: Optional[dict] = None

    def update_averages(self, record: LossRecord, decay: float):
        for name in ('l_ldm', 'l_ocr', 'total'):
            value = getattr(record, name)
            if value is None:
                continue
            previous = self.averages.get(name)
            self.averages[name] = value if previous is None else decay * previous + (1.0 - decay) * value

    def to_dict(self) -> dict:
        return {'step': self.step, 'epoch': self.epoch, 'batch_index': self.batch_index,
                'averages': dict(self.averages), 'ocr_skipped': self.ocr_skipped, 'optimizer': self.optimizer,
                'noise': self.noise}

    @classmethod
    def from_dict(cls, values: dict) -> 'TrainState':
        return cls(**values)


@dataclass
class TrainResult:
    checkpoint_path: str
    metrics_path: str
    state: TrainState
    records: List[LossRecord]
    stopped: bool = False


class Trainer:
    def __init__(self, config: TrainConfig, model: TextControlModel, recognizer: Optional[Recognizer] = None,
                 stream: Optional[RandomStream] = None):
        self.config = config
        self.model = model
        self.recognizer = recognizer
        self.stream = stream or seeded_rng(config.seed)
        self.noise = self.stream.substream('noise')
        self.parameters = model.prepare_for(config.stage, config.freeze_base)
        self.optimizer = torch.optim.AdamW(self.parameters, lr=config.learning_rate,
                                           betas=(config.adam_beta1, config.adam_beta2),
                                           weight_decay=config.weight_decay)
        self.state = TrainState()
        if recognizer is not None:
            recognizer.freeze()

    @property
    def uses_ocr_loss(self) -> bool:
        return self.config.use_ocr_loss and self.config.stage == TrainingStage.CONTROL

    def load_state(self, state: TrainState):
        self.state = state
        if state.optimizer is not None:
            self.optimizer.load_state_dict(state.optimizer)
        if state.noise is not None:
            self.noise.load_state_dict(state.noise)

    def snapshot(self) -> dict:
        self.state.optimizer = self.optimizer.state_dict()
        self.state.noise = self.noise.state_dict()
        return self.state.to_dict()

    def grad_norms(self) -> dict:
        groups = {'control': self.model.controlnet, 'denoiser': self.model.denoiser,
                  'text_encoder': self.model.text_encoder}
        norms = {}
        for name, module in groups.items():
            grads = [p.grad.detach().flatten() for p in module.parameters() if p.grad is not None]
            if grads:
                norms[name] = float(torch.cat(grads).norm())
        return norms

    def train_step(self, batch: TrainBatch) -> LossRecord:
        """
        One optimiser update on a batch.
        :raises NonFiniteLoss: When a loss or the gradient norm is not finite. Parameters are left untouched.
        """
        config, model, schedule = self.config, self.model, self.model.schedule
        if len(batch) == 0:
            raise ValueError("Empty training batch")
        model.train()
        with torch.no_grad():
            z0 = model.codec.encode(batch.images)
        t = torch.randint(1, schedule.T + 1, (len(batch),), generator=self.noise.torch)
        eps = torch.randn(z0.shape, generator=self.noise.torch)
        z_t = add_noise(z0, t, eps, schedule)
        text = model.encode_text(batch.captions)
        hints = batch.hints if config.stage == TrainingStage.CONTROL else None
        eps_hat = model.predict_eps(z_t, t, text, hints)
        l_ldm = ldm_loss(eps, eps_hat, config.loss_reduction)

        l_ocr, skipped = None, False
        if self.uses_ocr_loss:
            x0_hat = estimate_x0(z_t, t, eps_hat, schedule, model.codec)
            gt, pred = crop_pairs(batch.images, x0_hat, batch.regions, config.patch_height, config.patch_max_width)
            if len(gt):
                l_ocr = ocr_loss(gt, pred, self.recognizer)
            else:
                skipped = True
                self.state.ocr_skipped += 1
                logger.warning("Step %d: no text regions survived cropping, training on L_LDM alone",
                               self.state.step + 1)

        self.optimizer.zero_grad(set_to_none=True)
        losses_finite = math.isfinite(float(l_ldm)) and (l_ocr is None or math.isfinite(float(l_ocr)))
        if losses_finite:
            total = total_loss(l_ldm, l_ocr, config.lambda_ocr) if l_ocr is not None else l_ldm
        else:
            total = l_ldm + config.lambda_ocr * l_ocr if l_ocr is not None else l_ldm
        total.backward()
        grad_norm = float(torch.nn.utils.clip_grad_norm_(self.parameters, config.grad_clip))
        if not losses_finite or not math.isfinite(grad_norm):
            self.optimizer.zero_grad(set_to_none=True)
            raise NonFiniteLoss(f"Non-finite loss at step {self.state.step + 1}", diagnostics={
                't': t.tolist(), 'l_ldm': float(l_ldm), 'l_ocr': None if l_ocr is None else float(l_ocr),
                'total': float(total), 'grad_norm': grad_norm, 'grad_norms': self.grad_norms()})
        self.optimizer.step()

        self.state.step += 1
        record = LossRecord(step=self.state.step, t_mean=float(t.float().mean()), l_ldm=float(l_ldm),
                            l_ocr=None if l_ocr is None else float(l_ocr), total=float(total), grad_norm=grad_norm,
                            ocr_skipped=skipped)
        self.state.update_averages(record, config.ema_decay)
        return record


def prepare_examples(images: Sequence[AnnotatedImage], config: TrainConfig,
                     font_registry: FontRegistry) -> List[HintImage]:
    builder = HintBuilder.from_config(config, font_registry)
    hints = [builder.build(image) for image in images]
    noted = sum(1 for h in hints if h.notes)
    if noted:
        logger.warning("%d of %d hints skipped at least one region", noted, len(hints))
    return hints


def make_batch(images: Sequence[AnnotatedImage], hints: Sequence[HintImage], index: Sequence[int],
               caption_key: str) -> TrainBatch:
    chosen = [images[i] for i in index]
    return TrainBatch(images=images_to_tensor([image.image for image in chosen]),
                      hints=hint_tensor([hints[i] for i in index]),
                      captions=[image.caption_for(caption_key) for image in chosen],
                      regions=[list(image.regions) for image in chosen])


def epoch_order(stream: RandomStream, epoch: int, count: int) -> List[int]:
    return torch.randperm(count, generator=stream.substream('data', epoch).torch).tolist()


def _open_metrics(path: str, resume_step: int):
    """
    Opens the metrics log for appending, first dropping records past the resume step.
    """
    kept = []
    if resume_step and os.path.exists(path):
        with open(path, 'r', encoding='utf-8') as metrics:
            kept = [line for line in metrics if line.strip() and json.loads(line)['step'] <= resume_step]
    metrics = open(path, 'w', encoding='utf-8')
    metrics.writelines(kept)
    return metrics


def load_recognizer_for(config: TrainConfig, recognizer_path: Optional[str]) -> Optional[Recognizer]:
    if not (config.use_ocr_loss and config.stage == TrainingStage.CONTROL):
        return None
    if not recognizer_path:
        raise ValidationError("use_ocr_loss needs a pretrained recognizer; pass --recognizer or set "
                              "use_ocr_loss: false")
    recognizer = load_recognizer(recognizer_path)
    if (recognizer.patch_height, recognizer.patch_max_width) != (config.patch_height, config.patch_max_width):
        raise ValidationError(f"Recognizer patches are {recognizer.patch_height}x{recognizer.patch_max_width}, "
                              f"config expects {config.patch_height}x{config.patch_max_width}")
    return recognizer


def train(config: TrainConfig, manifest_path: str, out_dir: str, recognizer_path: Optional[str] = None,
          base_checkpoint: Optional[str] = None, resume: Optional[str] = None,
          font_registry: Optional[FontRegistry] = None,
          should_stop: Optional[Callable[[], bool]] = None) -> TrainResult:
    """
    Trains for ``config.epochs`` epochs of ceil(N / batch_size) steps, writing periodic checkpoints, a final
    ``checkpoint.pt`` and one metrics record per step.
    :param base_checkpoint: Checkpoint whose base and codec weights initialise the model.
    :param resume: Checkpoint with a training state to continue from.
    :param should_stop: Polled between steps; a True result checkpoints and returns early.
    """
    config.validate()
    os.makedirs(out_dir, exist_ok=True)
    write_effective_config(out_dir, config.to_dict(), name='train-config.yaml')
    font_registry = font_registry or FontRegistry.from_settings()
    dataset = load_dataset(manifest_path, image_size=config.image_size)
    if not dataset.images:
        raise ValidationError(f"Dataset {manifest_path} has no images")
    recognizer = load_recognizer_for(config, recognizer_path)

    stream = seeded_rng(config.seed)
    model = TextControlModel.initialise(config, stream)
    resume_payload = None
    if resume:
        resume_payload = read_checkpoint(resume)
        check_compatible(resume_payload, config, resume)
        if 'train_state' not in resume_payload:
            raise ValidationError(f"{resume} holds no training state to resume from")
        model.load_base_state_dict(resume_payload['base'])
        model.load_control_state_dict(resume_payload['control'])
        model.codec.load_state_dict(resume_payload['codec'])
    elif base_checkpoint:
        load_base_weights(model, base_checkpoint)
    elif config.codec_mode == CodecMode.LEARNED:
        floor = config.codec_psnr_floor if config.codec_psnr_floor is not None \
            else settings.TEXTCONTROL_CODEC_PSNR_FLOOR
        pretrain_codec(model.codec, [image.image for image in dataset.images], config.codec_pretrain_epochs,
                       stream.substream('codec'), floor)
    if config.stage == TrainingStage.CONTROL and not (base_checkpoint or resume):
        logger.warning("Training the control branch without --base-checkpoint: the base model is untrained")

    trainer = Trainer(config, model, recognizer, stream)
    if resume_payload is not None:
        trainer.load_state(TrainState.from_dict(resume_payload['train_state']))
        logger.info("Resuming %s at step %d (epoch %d, batch %d)", resume, trainer.state.step,
                    trainer.state.epoch, trainer.state.batch_index)

    hints = prepare_examples(dataset.images, config, font_registry)
    count = len(dataset.images)
    batches_per_epoch = math.ceil(count / config.batch_size)
    checkpoint_path = os.path.join(out_dir, CHECKPOINT_NAME)
    metrics_path = os.path.join(out_dir, METRICS_NAME)
    records: List[LossRecord] = []
    stopped = False
    started = time.monotonic()
    logger.info("Training %s stage on %d images: %d epoch(s) x %d step(s), %d trainable parameters",
                config.stage.value, count, config.epochs, batches_per_epoch,
                sum(p.numel() for p in trainer.parameters))

    with _open_metrics(metrics_path, trainer.state.step) as metrics:
        while trainer.state.epoch < config.epochs and not stopped:
            order = epoch_order(stream, trainer.state.epoch, count)
            while trainer.state.batch_index < batches_per_epoch:
                if should_stop is not None and should_stop():
                    logger.warning("Stop requested at step %d", trainer.state.step)
                    stopped = True
                    break
                start = trainer.state.batch_index * config.batch_size
                batch = make_batch(dataset.images, hints, order[start:start + config.batch_size],
                                   config.caption_key)
                record = trainer.train_step(batch)
                trainer.state.batch_index += 1
                record.wallclock = round(time.monotonic() - started, 3)
                records.append(record)
                metrics.write(json.dumps(record.to_dict(), sort_keys=True) + '\n')
                metrics.flush()
                if record.step % 50 == 0:
                    logger.info("Step %d: total %.4f (avg %.4f), l_ldm %.4f, l_ocr %s", record.step, record.total,
                                trainer.state.averages['total'], record.l_ldm,
                                'n/a' if record.l_ocr is None else f"{record.l_ocr:.4f}")
                if config.checkpoint_every and record.step % config.checkpoint_every == 0:
                    save_checkpoint(os.path.join(out_dir, 'checkpoints', f"step-{record.step:06d}.pt"), model,
                                    trainer.snapshot())
            if not stopped:
                trainer.state.epoch += 1
                trainer.state.batch_index = 0

    save_checkpoint(checkpoint_path, model, trainer.snapshot())
    if trainer.state.ocr_skipped:
        logger.warning("%d step(s) had no croppable regions and skipped the OCR loss", trainer.state.ocr_skipped)
    logger.info("Finished at step %d; checkpoint %s", trainer.state.step, checkpoint_path)
    return TrainResult(checkpoint_path, metrics_path, trainer.state, records, stopped)


def smoothed(values: Sequence[float], window: int = 50) -> np.ndarray:
    """
    Trailing moving average, used for loss curves.
    """
    values = np.asarray(values, dtype=np.float64)
    if len(values) == 0:
        return values
    cumulative = np.cumsum(np.insert(values, 0, 0.0))
    starts = np.maximum(np.arange(1, len(values) + 1) - window, 0)
    return (cumulative[1:] - cumulative[starts]) / (np.arange(1, len(values) + 1) - starts)
