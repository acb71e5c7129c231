"""Nakagami-m block fading: per-block power gains ``gamma ~ Gamma(m, 1/m)``.

Random streams are counter based: chunk ``c`` of logical stream ``s`` under
seed ``seed`` always comes from ``SeedSequence(seed, spawn_key=(s, c))``. The
draws therefore depend only on the draw index, never on how chunks are spread
over workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .errors import ValidationError

CHUNK = 1 << 16

# logical stream ids; evaluation and calibration never share draws
STREAM_EVAL = 0
STREAM_CALIB = 1
STREAM_AUX = 2


@dataclass(frozen=True)
class FadingSpec:
    m: float = 1.0
    B: int = 4

    def __post_init__(self):
        if not (self.m >= 0.5) or math.isinf(self.m):
            raise ValidationError(f"Nakagami m must be >= 0.5, got {self.m}")
        if int(self.B) != self.B or self.B < 1:
            raise ValidationError(f"B must be a positive integer, got {self.B}")


def rician_to_m(K: float) -> float:
    if K < 0:
        raise ValidationError(f"Rician K must be >= 0, got {K}")
    return (K + 1.0) ** 2 / (2.0 * K + 1.0)


def stream_rng(seed: int, stream: int, chunk: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(stream), int(chunk)))
    return np.random.Generator(np.random.PCG64(ss))


def sample_gamma(spec: FadingSpec, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """One gain vector (shape ``(B,)``) or ``size`` of them (shape ``(size, B)``)."""
    shape = (spec.B,) if size is None else (int(size), spec.B)
    return rng.gamma(spec.m, 1.0 / spec.m, size=shape)


def chunk_sizes(n: int, chunk: int = CHUNK) -> list[int]:
    full, rest = divmod(int(n), chunk)
    return [chunk] * full + ([rest] if rest else [])


def gamma_chunk(spec: FadingSpec, seed: int, stream: int, index: int, size: int) -> np.ndarray:
    return sample_gamma(spec, stream_rng(seed, stream, index), size)


def gamma_chunks(spec: FadingSpec, n: int, seed: int, stream: int = STREAM_EVAL) -> Iterator[np.ndarray]:
    for i, k in enumerate(chunk_sizes(n)):
        yield gamma_chunk(spec, seed, stream, i, k)
