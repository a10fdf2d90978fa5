"""
Training configuration.

Values resolve in this order, later wins: dataclass defaults, ``TEXTCONTROL_<FIELD>`` environment variables, a flat
YAML config file, command-line flags.
"""
import io
import logging
import os
from dataclasses import asdict, dataclass, fields, replace
from typing import Any, Dict, Mapping, Optional, Tuple

from django.core.exceptions import ValidationError
from ruamel.yaml import YAML

from textcontrol.enums import CodecMode, HintKind, LossReduction, ScheduleKind, TrainingStage

logger = logging.getLogger(__name__)

ENV_PREFIX = 'TEXTCONTROL_'
CODEC_FACTOR = 8

_ENUM_FIELDS = {
    'hint_kind': HintKind,
    'loss_reduction': LossReduction,
    'schedule_kind': ScheduleKind,
    'codec_mode': CodecMode,
    'stage': TrainingStage,
}


def dump_yaml(values: Mapping[str, Any]) -> str:
    stream = io.StringIO()
    YAML().dump(dict(values), stream)
    return stream.getvalue()


def parse_bool(value) -> bool:
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in ('1', 'true', 'yes', 'on'):
        return True
    if text in ('0', 'false', 'no', 'off'):
        return False
    raise ValidationError(f"Not a boolean: {value!r}")


def parse_int_tuple(value) -> Tuple[int, ...]:
    if isinstance(value, str):
        value = [v for v in value.replace(' ', '').split(',') if v]
    return tuple(int(v) for v in value)


@dataclass(frozen=True)
class TrainConfig:
    # Geometry
    image_size: int = 64
    latent_channels: int = 4
    latent_size: int = 8
    codec_mode: CodecMode = CodecMode.ANALYTIC
    codec_pretrain_epochs: int = 20
    codec_psnr_floor: Optional[float] = None  # None: settings.TEXTCONTROL_CODEC_PSNR_FLOOR

    # Noise schedule
    timesteps: int = 1000
    beta_start: float = 1e-4
    beta_end: float = 0.02
    schedule_kind: ScheduleKind = ScheduleKind.LINEAR

    # Networks
    model_widths: Tuple[int, ...] = (32, 64)
    text_dim: int = 64
    text_layers: int = 1
    text_heads: int = 4
    text_max_length: int = 64

    # Objective
    lambda_ocr: float = 0.1
    use_ocr_loss: bool = True
    loss_reduction: LossReduction = LossReduction.MEAN
    patch_height: int = 32
    patch_max_width: int = 256

    # Optimisation
    learning_rate: float = 1e-4
    batch_size: int = 8
    epochs: int = 1
    weight_decay: float = 0.01
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    grad_clip: float = 1.0
    ema_decay: float = 0.98
    freeze_base: bool = True
    stage: TrainingStage = TrainingStage.CONTROL
    checkpoint_every: int = 500
    seed: int = 0

    # Data
    hint_kind: HintKind = HintKind.FONT
    caption_key: str = 'caption'
    uniform_font: str = 'default'
    canny_low: float = 0.1
    canny_high: float = 0.3
    canny_sigma: float = 1.0

    def validate(self) -> 'TrainConfig':
        """
        Checks the configuration invariants.
        :raises ValidationError: On the first violated invariant.
        """
        if self.lambda_ocr < 0:
            raise ValidationError(f"lambda_ocr must be >= 0, got {self.lambda_ocr}")
        if self.timesteps < 2:
            raise ValidationError(f"timesteps must be >= 2, got {self.timesteps}")
        if self.image_size % CODEC_FACTOR:
            raise ValidationError(f"image_size {self.image_size} is not divisible by the codec factor {CODEC_FACTOR}")
        if self.latent_size * CODEC_FACTOR != self.image_size:
            raise ValidationError(f"latent_size {self.latent_size} does not match image_size {self.image_size} "
                                  f"at downsampling factor {CODEC_FACTOR}")
        if self.latent_size % 2:
            raise ValidationError("latent_size must be even for the two-level denoiser")
        if len(self.model_widths) != 2 or any(w % 8 for w in self.model_widths):
            raise ValidationError(f"model_widths must be two multiples of 8, got {self.model_widths}")
        if self.text_dim % self.text_heads:
            raise ValidationError("text_dim must be divisible by text_heads")
        if not 0 < self.beta_start <= self.beta_end < 1:
            raise ValidationError(f"Need 0 < beta_start <= beta_end < 1, got {self.beta_start}, {self.beta_end}")
        if not 0 < self.canny_low < self.canny_high:
            raise ValidationError("Need 0 < canny_low < canny_high")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValidationError("batch_size must be >= 1 and epochs >= 0")
        if self.learning_rate <= 0:
            raise ValidationError("learning_rate must be > 0")
        return self

    @property
    def latent_shape(self) -> Tuple[int, int, int]:
        return self.latent_channels, self.latent_size, self.latent_size

    def to_dict(self) -> Dict[str, Any]:
        """
        Plain, YAML/JSON-serialisable representation.
        """
        result = asdict(self)
        for name, value in result.items():
            if name in _ENUM_FIELDS:
                result[name] = value.value
            elif isinstance(value, tuple):
                result[name] = list(value)
        return result

    def to_yaml(self) -> str:
        return dump_yaml(self.to_dict())

    @classmethod
    def coerce(cls, name: str, value):
        """
        Converts a raw value (string from the environment or a flag, YAML scalar) to the field's type.
        """
        field_types = {f.name: f for f in fields(cls)}
        if name not in field_types:
            raise ValidationError(f"Unknown configuration key {name!r}")
        if value is None:
            return None
        if name in _ENUM_FIELDS:
            enum_type = _ENUM_FIELDS[name]
            if isinstance(value, enum_type):
                return value
            try:
                return enum_type(str(value))
            except ValueError:
                choices = ', '.join(e.value for e in enum_type)
                raise ValidationError(f"{name} must be one of {choices}, got {value!r}")
        default = field_types[name].default
        try:
            if isinstance(default, bool):
                return parse_bool(value)
            if isinstance(default, int):
                return int(value)
            if isinstance(default, float) or name == 'codec_psnr_floor':
                return float(value)
            if isinstance(default, tuple):
                return parse_int_tuple(value)
        except (TypeError, ValueError) as e:
            raise ValidationError(f"Invalid value for {name}: {value!r}") from e
        return str(value)

    def with_overrides(self, overrides: Mapping[str, Any]) -> 'TrainConfig':
        values = {k: self.coerce(k, v) for k, v in overrides.items() if v is not None}
        return replace(self, **values)

    @classmethod
    def from_environment(cls, environ: Optional[Mapping[str, str]] = None) -> 'TrainConfig':
        environ = os.environ if environ is None else environ
        overrides = {}
        for f in fields(cls):
            key = ENV_PREFIX + f.name.upper()
            if key in environ:
                overrides[f.name] = environ[key]
        return cls().with_overrides(overrides)

    @classmethod
    def from_dict(cls, values: Mapping[str, Any], base: Optional['TrainConfig'] = None) -> 'TrainConfig':
        return (base or cls()).with_overrides(values)


def read_yaml(path: str) -> dict:
    with open(path, 'r', encoding='utf-8') as config_file:
        data = YAML(typ='safe').load(config_file) or {}
    if not isinstance(data, dict):
        raise ValidationError(f"Config file {path} must be a flat key/value mapping")
    return data


def split_file_values(values: Mapping[str, Any]) -> Tuple[Dict[str, Any], Dict[str, Any]]:
    """
    Splits config file values into (TrainConfig fields, everything else).
    """
    names = {f.name for f in fields(TrainConfig)}
    train_values = {k: v for k, v in values.items() if k in names}
    return train_values, {k: v for k, v in values.items() if k not in names}


def resolve_config(config_path: Optional[str] = None, overrides: Optional[Mapping[str, Any]] = None,
                   environ: Optional[Mapping[str, str]] = None,
                   file_values: Optional[Mapping[str, Any]] = None) -> TrainConfig:
    """
    Resolves the effective configuration from environment, config file and flag overrides.
    :param file_values: Already-read config file values, used instead of reading config_path.
    """
    config = TrainConfig.from_environment(environ)
    if file_values is None and config_path:
        file_values = read_yaml(config_path)
    if file_values:
        config = config.with_overrides(file_values)
    if overrides:
        config = config.with_overrides(overrides)
    return config.validate()


def write_effective_config(out_dir: str, values: Mapping[str, Any], name: str = 'effective-config.yaml') -> str:
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, name)
    with open(path, 'w', encoding='utf-8') as config_file:
        YAML().dump(dict(values), config_file)
    return path
