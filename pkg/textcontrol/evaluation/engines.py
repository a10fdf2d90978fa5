import os
import shlex
import subprocess
from typing import List, Optional, Sequence

import numpy as np
import torch
from django.core.exceptions import ValidationError

from textcontrol.domain import TextRegion
from textcontrol.enums import OcrBackend
from textcontrol.evaluation.engine_base import OcrEngine
from textcontrol.exceptions import OcrEngineError
from textcontrol.manifest import write_png
from textcontrol.perception.ocr_loss import PatchBatch, crop_regions
from textcontrol.perception.recognizer import Recognizer, load_recognizer


def crop_patch(crop: np.ndarray, recognizer: Recognizer) -> PatchBatch:
    """
    A whole h x w x 3 uint8 crop as a recognizer patch.
    """
    h, w = crop.shape[:2]
    image = torch.from_numpy(np.ascontiguousarray(crop)).permute(2, 0, 1).float() / 255.0
    return crop_regions(image, [TextRegion('', (0, 0, w, h), '', h)], recognizer.patch_height,
                        recognizer.patch_max_width)


class RecognizerOcrEngine(OcrEngine):
    """
    The pretrained recognizer, batched.
    """
    name = OcrBackend.BUILTIN.value

    def __init__(self, recognizer: Recognizer, batch_size: int = 256):
        self.recognizer = recognizer.freeze()
        self.batch_size = batch_size

    @classmethod
    def from_file(cls, path: str) -> 'RecognizerOcrEngine':
        return cls(load_recognizer(path))

    def recognize_crop(self, crop: np.ndarray) -> str:
        return self.recognizer.recognize(crop_patch(crop, self.recognizer).pixels)[0]

    def recognize_crops(self, crops: Sequence[np.ndarray]) -> List[Optional[str]]:
        if not crops:
            return []
        patches = PatchBatch.concatenate([crop_patch(c, self.recognizer) for c in crops],
                                         self.recognizer.patch_height, self.recognizer.patch_max_width)
        results = []
        for start in range(0, len(patches), self.batch_size):
            results.extend(self.recognizer.recognize(patches.pixels[start:start + self.batch_size]))
        return results

    def describe(self) -> dict:
        return {'name': self.name, 'alphabet': self.recognizer.alphabet,
                'held_out_accuracy': self.recognizer.held_out_accuracy}


class ExternalCommandOcrEngine(OcrEngine):
    """
    Runs a command once per crop with the crop's PNG path appended to its arguments, and reads the first line of
    its standard output as the recognised text.
    """
    name = OcrBackend.EXTERNAL.value

    def __init__(self, command: str, work_dir: str, timeout: float = 60.0):
        self.arguments = shlex.split(command)
        if not self.arguments:
            raise ValidationError("Empty external OCR command")
        self.work_dir = work_dir
        self.timeout = timeout
        self._counter = 0

    def recognize_crop(self, crop: np.ndarray) -> str:
        os.makedirs(self.work_dir, exist_ok=True)
        path = os.path.join(self.work_dir, f"patch-{self._counter:06d}.png")
        self._counter += 1
        write_png(path, crop)
        try:
            completed = subprocess.run(self.arguments + [path], capture_output=True, text=True,
                                       timeout=self.timeout, check=False)
        except (OSError, subprocess.TimeoutExpired) as e:
            raise OcrEngineError(f"{self.arguments[0]} failed on {path}: {e}") from e
        if completed.returncode != 0:
            raise OcrEngineError(f"{self.arguments[0]} exited with {completed.returncode} on {path}: "
                                 f"{completed.stderr.strip()[:200]}")
        lines = completed.stdout.splitlines()
        return lines[0].rstrip('\r') if lines else ''

    def describe(self) -> dict:
        return {'name': self.name, 'command': self.arguments}


def build_engine(backend: OcrBackend, recognizer_path: Optional[str] = None, command: Optional[str] = None,
                 work_dir: Optional[str] = None) -> OcrEngine:
    if backend == OcrBackend.BUILTIN:
        if not recognizer_path:
            raise ValidationError("The builtin OCR engine needs --recognizer")
        return RecognizerOcrEngine.from_file(recognizer_path)
    if not command:
        raise ValidationError("The external OCR engine needs --ocr-command")
    return ExternalCommandOcrEngine(command, work_dir or 'ocr-patches')
