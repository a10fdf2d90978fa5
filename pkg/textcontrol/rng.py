"""
Deterministic random streams.

A stream is a numpy SeedSequence plus the generators derived from it. Named substreams (``data``, ``noise``,
``init`` ...) are independent of each other and of their parent, and depend only on the seed and the name.
"""
import zlib
from typing import Tuple

import numpy as np
import torch


def _name_key(name: str) -> int:
    return zlib.crc32(name.encode('utf-8'))


class RandomStream:
    def __init__(self, seed: int, path: Tuple[int, ...] = ()):
        self.seed = int(seed)
        self.path = tuple(path)
        self._sequence = np.random.SeedSequence(self.seed, spawn_key=self.path)
        self.numpy = np.random.Generator(np.random.PCG64(self._sequence))
        self.torch = torch.Generator(device='cpu')
        self.torch.manual_seed(int(self._sequence.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1)))

    def substream(self, name: str, *indices: int) -> 'RandomStream':
        """
        Independent child stream, e.g. ``stream.substream('data', epoch)``.
        """
        return RandomStream(self.seed, self.path + (_name_key(name),) + tuple(int(i) for i in indices))

    def state_dict(self) -> dict:
        return {'seed': self.seed, 'path': list(self.path), 'numpy': self.numpy.bit_generator.state,
                'torch': self.torch.get_state()}

    def load_state_dict(self, state: dict):
        if state['seed'] != self.seed or tuple(state['path']) != self.path:
            raise ValueError("Random state belongs to a different stream")
        self.numpy.bit_generator.state = state['numpy']
        self.torch.set_state(state['torch'])

    def __repr__(self):
        return f"<RandomStream seed={self.seed} path={self.path}>"


def seeded_rng(seed: int) -> RandomStream:
    """
    Root random stream for a seed. Identical seeds give bit-identical draws on one platform.
    """
    return RandomStream(seed)
