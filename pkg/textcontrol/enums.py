from enum import Enum


class HintKind(Enum):
    """
    Kind of conditioning image fed to the control branch.
    """
    GLYPH = 'glyph'  # Text rendered in one uniform font.
    CANNY = 'canny'  # Edge map of the text boxes of a reference image.
    FONT = 'font'  # Segmentation mask of the text boxes of a reference image.


class CodecMode(Enum):
    """
    Image <-> latent codec implementation.
    """
    ANALYTIC = 'analytic'  # Average-pool down, bilinear up. No weights.
    LEARNED = 'learned'  # Small convolutional autoencoder, pretrained then frozen.


class LossReduction(Enum):
    """
    Reduction applied to the squared error of the latent diffusion loss.
    """
    MEAN = 'mean'  # Mean over every element of the batch.
    SUM = 'sum'  # Squared norm per sample, then mean over the batch.


class ScheduleKind(Enum):
    LINEAR = 'linear'
    SCALED_LINEAR = 'scaled_linear'  # Linear in sqrt(beta).


class TrainingStage(Enum):
    """
    Which parameter sets a training run optimises.
    """
    BASE = 'base'  # Denoiser and text encoder, control branch disabled.
    CONTROL = 'control'  # Control branch (and the base if freeze_base is off).


class BenchmarkStyle(Enum):
    PLAIN = 'plain'  # Black text on white.
    SCENE = 'scene'  # Dark coloured text on a pale coloured background.


class OcrBackend(Enum):
    BUILTIN = 'builtin'  # The pretrained recognizer.
    EXTERNAL = 'external-cmd'  # A command invoked per patch file.
