"""Seeded sampling, the Gaussian tail, moment statistics and checked dense products."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from snnlab.errors import InsufficientDataError, ParameterError, ShapeError

__all__ = [
    "Rng",
    "StatsSummary",
    "sample_gaussian",
    "std_normal_tail",
    "describe",
    "matvec",
    "matmul",
    "hadamard",
]


@dataclass(frozen=True)
class Rng:
    """Counter-based (Philox) generator addressed by a seed plus a key path.

    ``Rng(7).substream(3, 12)`` always yields the same stream regardless of
    which other substreams were drawn first, so per-(seed, layer) draws can
    be taken in any order or in parallel.
    """

    seed: int
    path: tuple[int, ...] = field(default=())

    def __post_init__(self):
        if not 0 <= self.seed < 2**64:
            raise ParameterError(f"seed must be a 64-bit unsigned integer, got {self.seed}")

    def substream(self, *keys: int) -> "Rng":
        return Rng(self.seed, self.path + tuple(int(k) for k in keys))

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence([self.seed, len(self.path), *self.path])
        return np.random.Generator(np.random.Philox(ss))


def sample_gaussian(rng: Rng, mean: float, std: float, count: int | tuple[int, ...]) -> np.ndarray:
    shape = (count,) if isinstance(count, (int, np.integer)) else tuple(count)
    if any(c < 0 for c in shape):
        raise ParameterError(f"count must be non-negative, got {count}")
    if not std >= 0:
        raise ParameterError(f"std must be non-negative, got {std}")
    z = rng.generator().standard_normal(shape)
    return mean + std * z


def std_normal_tail(theta: float) -> float:
    """P(U > theta) for a standard normal U."""
    theta = float(theta)
    if not math.isfinite(theta):
        raise ParameterError(f"theta must be finite, got {theta}")
    return 0.5 * math.erfc(theta / math.sqrt(2.0))


@dataclass(frozen=True)
class StatsSummary:
    """Population moments; skewness/kurtosis are NaN when the variance is zero."""

    mean: float
    variance: float
    skewness: float
    excess_kurtosis: float


def describe(samples) -> StatsSummary:
    x = np.asarray(samples, dtype=np.float64).ravel()
    if x.size < 2:
        raise InsufficientDataError(f"need at least 2 samples, got {x.size}")
    mean = float(x.mean())
    d = x - mean
    d2 = d * d
    m2 = float(d2.mean())
    if m2 == 0.0:
        return StatsSummary(mean, 0.0, math.nan, math.nan)
    m3 = float((d2 * d).mean())
    m4 = float((d2 * d2).mean())
    return StatsSummary(mean, m2, m3 / m2**1.5, m4 / (m2 * m2) - 3.0)


def _as_float(a) -> np.ndarray:
    return np.asarray(a, dtype=np.float64)


def matvec(a, x) -> np.ndarray:
    a, x = _as_float(a), _as_float(x)
    if a.ndim != 2 or x.ndim != 1 or a.shape[1] != x.shape[0]:
        raise ShapeError(f"matvec: cannot apply {a.shape} to {x.shape}")
    return a @ x


def matmul(a, b) -> np.ndarray:
    a, b = _as_float(a), _as_float(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: {a.shape} @ {b.shape} does not conform")
    return a @ b


def hadamard(a, b) -> np.ndarray:
    a, b = _as_float(a), _as_float(b)
    if a.shape != b.shape:
        raise ShapeError(f"elementwise product needs equal shapes, got {a.shape} and {b.shape}")
    return a * b
