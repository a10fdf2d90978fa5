"""
Character-level caption encoder: hashed code-point embeddings, learned positions and a small self-attention stack.
"""
from dataclasses import dataclass
from typing import Sequence, Tuple

import torch
import torch.nn as nn

PAD_TOKEN = 0
BOS_TOKEN = 1
_RESERVED = 2


@dataclass
class TextEmbedding:
    values: torch.Tensor  # (B, L, d)
    mask: torch.Tensor  # (B, L) bool, True on real tokens

    @property
    def lengths(self) -> torch.Tensor:
        return self.mask.sum(dim=1)

    @property
    def dim(self) -> int:
        return self.values.shape[-1]

    def repeat(self, count: int) -> 'TextEmbedding':
        return TextEmbedding(self.values.repeat(count, 1, 1), self.mask.repeat(count, 1))

    def cat(self, other: 'TextEmbedding') -> 'TextEmbedding':
        length = max(self.values.shape[1], other.values.shape[1])
        first, second = self.padded(length), other.padded(length)
        return TextEmbedding(torch.cat([first.values, second.values]), torch.cat([first.mask, second.mask]))

    def padded(self, length: int) -> 'TextEmbedding':
        extra = length - self.values.shape[1]
        if extra <= 0:
            return self
        values = nn.functional.pad(self.values, (0, 0, 0, extra))
        mask = nn.functional.pad(self.mask, (0, extra), value=False)
        return TextEmbedding(values, mask)


class CharacterTokenizer:
    """
    Maps each code point into a fixed vocabulary by modulo hashing. Every sequence starts with a BOS token, so empty
    captions still produce one attendable position.
    """

    def __init__(self, vocab_size: int = 4096, max_length: int = 64):
        self.vocab_size = vocab_size
        self.max_length = max_length

    def token(self, character: str) -> int:
        return _RESERVED + ord(character) % (self.vocab_size - _RESERVED)

    def __call__(self, texts: Sequence[str]) -> Tuple[torch.Tensor, torch.Tensor]:
        rows = [[BOS_TOKEN] + [self.token(c) for c in text][:self.max_length - 1] for text in texts]
        length = max(len(row) for row in rows)
        ids = torch.full((len(rows), length), PAD_TOKEN, dtype=torch.long)
        for i, row in enumerate(rows):
            ids[i, :len(row)] = torch.tensor(row, dtype=torch.long)
        return ids, ids != PAD_TOKEN


class TextEncoder(nn.Module):
    def __init__(self, dim: int = 64, layers: int = 1, heads: int = 4, max_length: int = 64, vocab_size: int = 4096):
        super().__init__()
        self.tokenizer = CharacterTokenizer(vocab_size, max_length)
        self.dim = dim
        self.token_embedding = nn.Embedding(vocab_size, dim, padding_idx=PAD_TOKEN)
        self.position_embedding = nn.Embedding(max_length, dim)
        layer = nn.TransformerEncoderLayer(d_model=dim, nhead=heads, dim_feedforward=dim * 2, dropout=0.0,
                                           activation='gelu', batch_first=True, norm_first=True)
        self.transformer = nn.TransformerEncoder(layer, num_layers=layers, enable_nested_tensor=False)
        self.norm = nn.LayerNorm(dim)

    def forward(self, texts: Sequence[str]) -> TextEmbedding:
        ids, mask = self.tokenizer(texts)
        device = self.token_embedding.weight.device
        ids, mask = ids.to(device), mask.to(device)
        positions = torch.arange(ids.shape[1], device=device)
        hidden = self.token_embedding(ids) + self.position_embedding(positions)[None]
        hidden = self.transformer(hidden, src_key_padding_mask=~mask)
        return TextEmbedding(values=self.norm(hidden), mask=mask)
