"""Deterministic, splittable random streams."""

from __future__ import annotations

import zlib

import numpy as np


def _label_key(label: str | int) -> int:
    if isinstance(label, (int, np.integer)):
        if label < 0:
            raise ValueError("stream index must be nonnegative")
        return int(label)
    # crc32 is stable across processes, unlike hash()
    return zlib.crc32(str(label).encode("utf-8")) | (1 << 32)


class RngStream:
    """A named random stream derived from a 64-bit master seed.

    Children are derived by label or index, so the same master seed gives the
    same numbers no matter how work is scheduled across threads.
    """

    def __init__(self, seed: int = 0, path: tuple[int, ...] = ()):
        if seed < 0 or seed >= 2**64:
            raise ValueError("seed must fit in 64 unsigned bits")
        self.seed = int(seed)
        self.path = tuple(path)
        self._gen: np.random.Generator | None = None

    @property
    def generator(self) -> np.random.Generator:
        if self._gen is None:
            ss = np.random.SeedSequence(entropy=self.seed, spawn_key=self.path)
            self._gen = np.random.Generator(np.random.PCG64(ss))
        return self._gen

    def child(self, label: str | int) -> "RngStream":
        return RngStream(self.seed, self.path + (_label_key(label),))

    def children(self, n: int, label: str = "rep") -> list["RngStream"]:
        base = self.child(label)
        return [base.child(i) for i in range(n)]

    # thin conveniences over the generator
    def uniform(self, low=0.0, high=1.0, size=None):
        return self.generator.uniform(low, high, size)

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, path={self.path})"


def as_stream(rng: RngStream | int | None) -> RngStream:
    if isinstance(rng, RngStream):
        return rng
    if rng is None:
        return RngStream(0)
    return RngStream(int(rng))
