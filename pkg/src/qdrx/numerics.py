"""Stable probit kernels and reproducible random streams.

The sign-observation likelihoods used throughout this package are products
of standard normal CDFs, so everything downstream leans on three scalar
kernels: Phi, log Phi, and the inverse Mills ratio phi/Phi.  Direct
evaluation of Phi underflows around t = -38 and log(Phi(t)) degrades much
earlier, so the log/derivative kernels switch to the Mills-ratio asymptotic
series below ``TAIL_SWITCH``.

All kernels accept floats or numpy arrays and are pure functions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

__all__ = [
    "TAIL_SWITCH",
    "RandomStream",
    "as_generator",
    "phi_cdf",
    "log_phi_cdf",
    "dlog_phi_cdf",
    "gaussian_pair",
]

# Below this point the direct erfc-based log CDF loses relative accuracy;
# above it the asymptotic series would be the less accurate branch.
TAIL_SWITCH = -20.0

_SQRT2 = math.sqrt(2.0)
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)

_MASK64 = (1 << 64) - 1


def _as_finite_array(t) -> tuple[np.ndarray, bool]:
    arr = np.asarray(t, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError("probit kernels require finite input")
    return np.atleast_1d(arr), arr.ndim == 0


def _tail_series(x: np.ndarray) -> np.ndarray:
    """Mills-ratio series 1 - 1/x^2 + 3/x^4 - 15/x^6 + 105/x^8 for x >> 1."""
    inv2 = 1.0 / (x * x)
    return 1.0 + inv2 * (-1.0 + inv2 * (3.0 + inv2 * (-15.0 + inv2 * 105.0)))


def phi_cdf(t):
    """Standard normal CDF, accurate over the full double range."""
    arr, scalar = _as_finite_array(t)
    out = 0.5 * special.erfc(-arr / _SQRT2)
    return float(out[0]) if scalar else out


def log_phi_cdf(t):
    """log(Phi(t)) without underflow for t >= -300.

    Uses log1p on the upper tail (where Phi is within eps of 1), the plain
    erfc form in the middle, and the asymptotic expansion
    ``-t^2/2 - log(-t sqrt(2 pi)) + log(1 - 1/t^2 + 3/t^4 - ...)`` below
    the switch-over point.
    """
    arr, scalar = _as_finite_array(t)
    out = np.empty_like(arr)

    tail = arr < TAIL_SWITCH
    pos = arr >= 0.0
    mid = ~(tail | pos)

    if np.any(tail):
        x = -arr[tail]
        out[tail] = -0.5 * x * x - np.log(x) - _LOG_SQRT_2PI + np.log(_tail_series(x))
    if np.any(mid):
        out[mid] = np.log(0.5 * special.erfc(-arr[mid] / _SQRT2))
    if np.any(pos):
        out[pos] = np.log1p(-0.5 * special.erfc(arr[pos] / _SQRT2))

    return float(out[0]) if scalar else out


def dlog_phi_cdf(t):
    """Inverse Mills ratio phi(t)/Phi(t), the derivative of log_phi_cdf.

    Strictly positive; tends to -t as t -> -inf and to 0 as t -> +inf.
    Stable down to t = -300 via the same tail series as log_phi_cdf.
    """
    arr, scalar = _as_finite_array(t)
    out = np.empty_like(arr)

    tail = arr < TAIL_SWITCH
    if np.any(tail):
        x = -arr[tail]
        out[tail] = x / _tail_series(x)
    if np.any(~tail):
        v = arr[~tail]
        pdf = np.exp(-0.5 * v * v - _LOG_SQRT_2PI)
        out[~tail] = pdf / (0.5 * special.erfc(-v / _SQRT2))

    return float(out[0]) if scalar else out


@dataclass(frozen=True)
class RandomStream:
    """Counter-based random stream identified by (seed, stream_id).

    Streams with the same (seed, stream_id) replay bit-exactly; distinct
    stream_ids map to distinct Philox keys and are statistically
    independent, so Monte Carlo trials can be farmed out to any number of
    workers without changing results.
    """

    seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        """Open a fresh generator positioned at the start of the stream."""
        key = (self.seed & _MASK64) | ((self.stream_id & _MASK64) << 64)
        return np.random.Generator(np.random.Philox(key=key))


def as_generator(stream) -> np.random.Generator:
    """Accept a RandomStream or an already-open Generator.

    Passing a RandomStream replays the stream from its start; passing a
    Generator continues consuming it, which is what the per-trial harness
    does to keep successive draws within a trial independent.
    """
    if isinstance(stream, RandomStream):
        return stream.generator()
    if isinstance(stream, np.random.Generator):
        return stream
    raise TypeError(f"expected RandomStream or numpy Generator, got {type(stream)!r}")


def gaussian_pair(stream) -> tuple[float, float]:
    """Two independent N(0,1) variates from the stream.

    One CN(0,1) draw is (a + jb)/sqrt(2) with (a, b) from this function,
    so each real component carries variance 1/2.
    """
    rng = as_generator(stream)
    a, b = rng.standard_normal(2)
    return float(a), float(b)
