"""
Small fixtures shared by the test modules.
"""
import os
import shutil
import tempfile

from textcontrol.config import TrainConfig
from textcontrol.domain import TextRegion
from textcontrol.hints.benchmark import generate_tiny_benchmark
from textcontrol.hints.fonts import FontRegistry
from textcontrol.perception.recognizer import Recognizer

ALPHABET = 'ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789'

TINY = {
    'image_size': 32,
    'latent_channels': 4,
    'latent_size': 4,
    'timesteps': 50,
    'model_widths': (8, 16),
    'text_dim': 16,
    'text_layers': 1,
    'text_heads': 4,
    'text_max_length': 32,
    'batch_size': 2,
    'checkpoint_every': 0,
    'hint_kind': 'glyph',
    'learning_rate': 1e-3,
}


def tiny_config(**overrides) -> TrainConfig:
    values = dict(TINY)
    values.update(overrides)
    return TrainConfig().with_overrides(values).validate()


def tiny_recognizer(alphabet: str = ALPHABET) -> Recognizer:
    return Recognizer(alphabet, channels=(8, 8, 8, 8), hidden=8)


def region(text: str, x: int, y: int, w: int, h: int, font_px: int = 10, font_id: str = 'default') -> TextRegion:
    return TextRegion(text=text, bbox=(x, y, w, h), font_id=font_id, font_px=font_px)


def write_toy_dataset(directory: str, count: int = 6, canvas: int = 32, seed: int = 3) -> str:
    """
    A small plain-style dataset of canvas x canvas images with one or two text lines.
    :return: Manifest path.
    """
    benchmark = generate_tiny_benchmark(count=count, canvas=canvas, max_lines=2, max_char_px=12, seed=seed,
                                        font_registry=FontRegistry())
    return benchmark.write(directory)


class TemporaryDirectoryMixin:
    def setUp(self):
        super().setUp()
        self.tmp = tempfile.mkdtemp(prefix='textcontrol-test-')

    def tearDown(self):
        shutil.rmtree(self.tmp, ignore_errors=True)
        super().tearDown()

    def path(self, *parts: str) -> str:
        return os.path.join(self.tmp, *parts)
