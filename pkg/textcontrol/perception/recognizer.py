"""
Small CRNN text recognizer.

Input patches are ink maps (1 - luminance) of shape (N, 1, patch_height, patch_max_width), zero right-padded, so
padding looks like empty background. Four 3x3 convolutions (stride 2 at the second and fourth) feed a
bidirectional LSTM over columns and a per-column classifier trained with CTC. Only the first three convolutions
provide perceptual features.
"""
import logging
import math
import os
from typing import List, Optional, Sequence, Tuple

import torch
import torch.nn as nn
import torch.nn.functional as F

from textcontrol.diffusion.checkpoint import atomic_save
from textcontrol.exceptions import CheckpointError, RecognizerAccuracyError, ShapeMismatch
from textcontrol.rng import seeded_rng

logger = logging.getLogger(__name__)

FEATURE_LAYERS = 3
BLANK = 0
RECOGNIZER_FORMAT = 'textcontrol-recognizer'
RECOGNIZER_VERSION = 1


class LabelConverter:
    """
    Converts between strings and CTC label indices. Index 0 is the blank; characters outside the alphabet are
    dropped on encoding.
    """

    def __init__(self, alphabet: str):
        if len(set(alphabet)) != len(alphabet):
            raise ValueError("Alphabet characters must be unique")
        self.alphabet = alphabet
        self._index = {c: i + 1 for i, c in enumerate(alphabet)}

    @property
    def classes(self) -> int:
        return len(self.alphabet) + 1

    def encode(self, texts: Sequence[str]) -> Tuple[torch.Tensor, torch.Tensor]:
        """
        :return: (concatenated targets, per-text lengths).
        """
        encoded = [[self._index[c] for c in text if c in self._index] for text in texts]
        targets = torch.tensor([i for row in encoded for i in row], dtype=torch.long)
        lengths = torch.tensor([len(row) for row in encoded], dtype=torch.long)
        return targets, lengths

    def decode(self, indices: Sequence[int]) -> str:
        """
        Greedy CTC decoding: collapse repeats, then drop blanks.
        """
        characters, previous = [], BLANK
        for index in indices:
            index = int(index)
            if index != previous and index != BLANK:
                characters.append(self.alphabet[index - 1])
            previous = index
        return ''.join(characters)


class Recognizer(nn.Module):
    def __init__(self, alphabet: str, patch_height: int = 32, patch_max_width: int = 256,
                 channels: Sequence[int] = (32, 64, 96, 128), hidden: int = 128, first_layer_bias: bool = False):
        super().__init__()
        if patch_height % 4 or patch_max_width % 4:
            raise ShapeMismatch("Patch height and width must be multiples of 4")
        c1, c2, c3, c4 = channels
        self.converter = LabelConverter(alphabet)
        self.patch_height = patch_height
        self.patch_max_width = patch_max_width
        self.channels = tuple(channels)
        self.hidden = hidden
        self.first_layer_bias = first_layer_bias
        self.convs = nn.ModuleList([
            nn.Conv2d(1, c1, 3, stride=1, padding=1, bias=first_layer_bias),
            nn.Conv2d(c1, c2, 3, stride=2, padding=1),
            nn.Conv2d(c2, c3, 3, stride=1, padding=1),
            nn.Conv2d(c3, c4, 3, stride=2, padding=1),
        ])
        self.strides = (1, 2, 1, 2)
        self.rnn = nn.LSTM(c4, hidden, batch_first=True, bidirectional=True)
        self.classifier = nn.Linear(hidden * 2, self.converter.classes)
        self.held_out_accuracy = None

    @property
    def alphabet(self) -> str:
        return self.converter.alphabet

    @property
    def frozen(self) -> bool:
        return not any(p.requires_grad for p in self.parameters())

    def freeze(self) -> 'Recognizer':
        """
        Stops weight updates. Gradients still flow to the inputs.
        """
        self.eval()
        for parameter in self.parameters():
            parameter.requires_grad_(False)
        return self

    def train(self, mode: bool = True):
        # A frozen recognizer stays in evaluation mode.
        return super().train(mode and not self.frozen)

    def feature_shapes(self) -> List[Tuple[int, int, int]]:
        """
        (C_l, H_l, W_l) of each perceptual feature layer for a full-width patch.
        """
        shapes, h, w = [], self.patch_height, self.patch_max_width
        for channels, stride in zip(self.channels[:FEATURE_LAYERS], self.strides):
            h, w = math.ceil(h / stride), math.ceil(w / stride)
            shapes.append((channels, h, w))
        return shapes

    def valid_widths(self, widths: torch.Tensor) -> List[torch.Tensor]:
        """
        Per feature layer, the number of columns computed from unpadded content.
        """
        result = []
        for stride in self.strides[:FEATURE_LAYERS]:
            widths = torch.div(widths + stride - 1, stride, rounding_mode='floor')
            result.append(widths)
        return result

    def check_patches(self, patches: torch.Tensor):
        if patches.dim() != 4 or tuple(patches.shape[1:]) != (1, self.patch_height, self.patch_max_width):
            raise ShapeMismatch(f"Expected patches (N, 1, {self.patch_height}, {self.patch_max_width}), "
                                f"got {tuple(patches.shape)}")

    def extract_features(self, patches: torch.Tensor) -> List[torch.Tensor]:
        """
        Post-activation outputs of the first three convolutions.
        """
        self.check_patches(patches)
        features, h = [], patches
        for conv in self.convs[:FEATURE_LAYERS]:
            h = F.relu(conv(h))
            features.append(h)
        return features

    def forward(self, patches: torch.Tensor) -> torch.Tensor:
        """
        :return: (T, N, classes) log-probabilities, the layout CTC expects.
        """
        h = self.extract_features(patches)[-1]
        for conv in self.convs[FEATURE_LAYERS:]:
            h = F.relu(conv(h))
        sequence = h.mean(dim=2).transpose(1, 2)
        output, _ = self.rnn(sequence)
        return F.log_softmax(self.classifier(output), dim=-1).transpose(0, 1)

    def ctc_loss(self, patches: torch.Tensor, texts: Sequence[str]) -> torch.Tensor:
        log_probs = self(patches)
        targets, target_lengths = self.converter.encode(texts)
        input_lengths = torch.full((log_probs.shape[1],), log_probs.shape[0], dtype=torch.long)
        return F.ctc_loss(log_probs, targets, input_lengths, target_lengths, blank=BLANK, zero_infinity=True)

    @torch.no_grad()
    def recognize(self, patches: torch.Tensor) -> List[str]:
        best = self(patches).argmax(dim=-1).transpose(0, 1)
        return [self.converter.decode(row.tolist()) for row in best]

    def pooled_features(self, patches: torch.Tensor, widths: torch.Tensor) -> torch.Tensor:
        """
        Third-layer features averaged over the valid area of each patch.
        :return: (N, C_3).
        """
        features = self.extract_features(patches)[-1]
        valid = self.valid_widths(widths)[-1]
        columns = torch.arange(features.shape[-1], device=features.device)
        mask = (columns[None, :] < valid[:, None]).to(features.dtype)[:, None, None, :]
        area = (mask.sum(dim=(1, 2, 3)) * features.shape[2]).clamp(min=1.0)
        return (features * mask).sum(dim=(2, 3)) / area[:, None]

    def metadata(self) -> dict:
        return {'alphabet': self.alphabet, 'patch_height': self.patch_height,
                'patch_max_width': self.patch_max_width, 'channels': list(self.channels), 'hidden': self.hidden,
                'first_layer_bias': self.first_layer_bias,
                'layer_shapes': [list(shape) for shape in self.feature_shapes()]}


def exact_match_accuracy(recognizer: Recognizer, patches, batch_size: int = 256) -> float:
    """
    Fraction of patches whose decoded text equals the label exactly.
    """
    if len(patches) == 0:
        return 0.0
    correct = 0
    for start in range(0, len(patches), batch_size):
        decoded = recognizer.recognize(patches.pixels[start:start + batch_size])
        correct += sum(d == t for d, t in zip(decoded, patches.texts[start:start + batch_size]))
    return correct / len(patches)


def pretrain_recognizer(corpus, epochs: int, seed: int, accuracy_floor: float, batch_size: int = 64,
                        learning_rate: float = 1e-3, holdout_fraction: float = 0.1, **architecture) -> Recognizer:
    """
    Trains a recognizer on a labelled patch corpus with CTC, checks held-out exact-match accuracy and freezes it.
    :raises RecognizerAccuracyError: When held-out accuracy is below the floor.
    """
    train_patches, held_out = corpus.split(holdout_fraction)
    stream = seeded_rng(seed)
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(int(stream.substream('init').numpy.integers(0, 2 ** 63 - 1)))
        recognizer = Recognizer(corpus.alphabet, patch_height=train_patches.pixels.shape[2],
                                patch_max_width=train_patches.pixels.shape[3], **architecture)
    optimizer = torch.optim.Adam(recognizer.parameters(), lr=learning_rate)
    for epoch in range(epochs):
        recognizer.train()
        order = torch.randperm(len(train_patches), generator=stream.substream('data', epoch).torch)
        total = 0.0
        for start in range(0, len(order), batch_size):
            index = order[start:start + batch_size]
            loss = recognizer.ctc_loss(train_patches.pixels[index], [train_patches.texts[i] for i in index])
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            total += float(loss) * len(index)
        recognizer.eval()
        logger.info("Recognizer epoch %d/%d: ctc %.4f, held-out accuracy %.3f", epoch + 1, epochs,
                    total / max(len(order), 1), exact_match_accuracy(recognizer, held_out))
    recognizer.eval()
    accuracy = exact_match_accuracy(recognizer, held_out)
    if accuracy < accuracy_floor:
        raise RecognizerAccuracyError(f"Held-out accuracy {accuracy:.3f} is below the floor of "
                                      f"{accuracy_floor:.3f}; use a larger corpus or more epochs")
    recognizer.held_out_accuracy = accuracy
    return recognizer.freeze()


def save_recognizer(path: str, recognizer: Recognizer, extra: Optional[dict] = None) -> str:
    payload = {
        'header': {'format': RECOGNIZER_FORMAT, 'version': RECOGNIZER_VERSION},
        'metadata': recognizer.metadata(),
        'held_out_accuracy': recognizer.held_out_accuracy,
        'extra': extra or {},
        'state_dict': recognizer.state_dict(),
    }
    atomic_save(payload, path)
    return path


def load_recognizer(path: str) -> Recognizer:
    """
    Loads a recognizer checkpoint, frozen.
    :raises CheckpointError: When the file is missing or not a recognizer checkpoint.
    """
    if not os.path.isfile(path):
        raise CheckpointError(f"Recognizer checkpoint {path} does not exist")
    try:
        payload = torch.load(path, map_location='cpu', weights_only=True)
    except Exception as e:
        raise CheckpointError(f"Could not read recognizer checkpoint {path}: {e}") from e
    header = payload.get('header', {}) if isinstance(payload, dict) else {}
    if header.get('format') != RECOGNIZER_FORMAT or header.get('version') != RECOGNIZER_VERSION:
        raise CheckpointError(f"{path} is not a version {RECOGNIZER_VERSION} recognizer checkpoint")
    metadata = payload['metadata']
    recognizer = Recognizer(metadata['alphabet'], metadata['patch_height'], metadata['patch_max_width'],
                            metadata['channels'], metadata['hidden'], metadata['first_layer_bias'])
    recognizer.load_state_dict(payload['state_dict'])
    recognizer.held_out_accuracy = payload.get('held_out_accuracy')
    return recognizer.freeze()
