"""Named, independent random streams derived from one master seed."""

import numpy as np

ARRIVALS = 0
CHANNEL = 1
LPS = 2
FADING = 3

CHUNK = 4096


def stream(seed: int, name: int, *key: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(name, *key))
    return np.random.Generator(np.random.PCG64(ss))


def derive_seed(master: int, replicate: int) -> int:
    ss = np.random.SeedSequence(entropy=int(master), spawn_key=(1000, replicate))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


class BlockDraws:
    """Uniform draws consumed ``width`` at a time, generated in chunks."""

    def __init__(self, gen: np.random.Generator, width: int = 1, chunk: int = CHUNK):
        self._gen = gen
        self._width = width
        self._chunk = chunk
        self._buf = None
        self._pos = chunk

    def next(self):
        if self._pos == self._chunk:
            shape = (self._chunk,) if self._width == 1 else (self._chunk, self._width)
            self._buf = self._gen.random(shape).tolist()
            self._pos = 0
        v = self._buf[self._pos]
        self._pos += 1
        return v
