"""Fusion-center data detection from sign-quantized observations.

Three receivers operate on the same sign-refined geometry: an exhaustive
discrete ML search over the constellation product set, a relaxed ML
estimator on the transmit-power sphere solved by projected gradient ascent,
and a low-complexity pseudo-inverse (ZF) receiver with per-antenna nearest
symbol decisions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import CapacityError, SingularChannelError
from .model import Constellation, QuantizedBlock, RealLiftedChannel
from .numerics import dlog_phi_cdf, log_phi_cdf

__all__ = [
    "SignRefinedChannels",
    "DetectionResult",
    "RelaxedSolverOptions",
    "sign_refine",
    "ml_receive",
    "ml_estimate_relaxed",
    "zf_receive",
    "zf_equalizer",
    "zf_equalizer_matrix",
    "detect_nearest",
]

ENUMERATION_LIMIT = 1_000_000
_CHUNK = 1 << 14

# Fixed Philox key for the deterministic multi-start points of the relaxed
# ML solver; independent of all experiment streams.
_START_KEY = 0x9E3779B97F4A7C15


@dataclass(frozen=True)
class SignRefinedChannels:
    """Sign-refined lifted channel rows, one per real-domain observation.

    Row k is the first lifted column of node k scaled by that node's real
    sign; row K + k is the second column scaled by the imaginary sign.
    """

    rows: np.ndarray  # (2K, 2Nt) float
    nt: int
    k: int

    def vector(self, node: int, part: int) -> np.ndarray:
        """Refined vector for node ``node`` and part 1 (real) or 2 (imag)."""
        if part not in (1, 2):
            raise ValueError(f"part must be 1 or 2, got {part}")
        return self.rows[node + (part - 1) * self.k]


@dataclass(frozen=True)
class DetectionResult:
    """Output of a receiver: hard symbols and/or a soft estimate."""

    symbols: np.ndarray | None = None   # (Nt,) constellation indices
    soft: np.ndarray | None = None      # (2Nt,) stacked [Re; Im] estimate
    log_likelihood: float | None = None
    iterations: int | None = None

    @property
    def soft_complex(self) -> np.ndarray:
        if self.soft is None:
            raise ValueError("no soft estimate in this result")
        n = self.soft.shape[0] // 2
        return self.soft[:n] + 1j * self.soft[n:]


def sign_refine(channels: list[RealLiftedChannel], obs: QuantizedBlock) -> SignRefinedChannels:
    """Multiply each lifted channel column by its observed sign."""
    k = len(channels)
    if obs.signs_real.shape[0] != 2 * k:
        raise ValueError(
            f"got {obs.signs_real.shape[0] // 2} observations for {k} channels")
    nt = channels[0].nt
    col1 = np.stack([c.col1 for c in channels])
    col2 = np.stack([c.col2 for c in channels])
    rows = np.vstack([obs.signs_real[:k, None] * col1,
                      obs.signs_real[k:, None] * col2])
    return SignRefinedChannels(rows=rows, nt=nt, k=k)


def _stack_candidates(constellation: Constellation, nt: int) -> tuple[np.ndarray, np.ndarray]:
    m = constellation.order
    grids = np.meshgrid(*([np.arange(m)] * nt), indexing="ij")
    idx = np.stack(grids, axis=-1).reshape(-1, nt)  # lexicographic order
    pts = constellation.points[idx]
    return idx, np.hstack([pts.real, pts.imag])


def ml_receive(refined: SignRefinedChannels, constellation: Constellation,
               nt: int, rho: float) -> DetectionResult:
    """Exhaustive ML detection over the constellation product set.

    Maximizes the sum of log Phi(sqrt(2 rho/Nt) h~^T x) over all M^Nt
    candidates; ties resolve to the lexicographically smallest index
    vector because the scan keeps only strict improvements.
    """
    if rho <= 0:
        raise ValueError(f"rho must be positive, got {rho}")
    n_cand = constellation.order ** nt
    if n_cand > ENUMERATION_LIMIT:
        raise CapacityError(
            f"M^Nt = {n_cand} candidates exceeds the enumeration limit {ENUMERATION_LIMIT}")
    idx, cand = _stack_candidates(constellation, nt)
    scale = math.sqrt(2.0 * rho / nt)

    best_val = -np.inf
    best_row = 0
    for lo in range(0, n_cand, _CHUNK):
        block = cand[lo:lo + _CHUNK]
        ll = log_phi_cdf(scale * (block @ refined.rows.T)).sum(axis=1)
        j = int(np.argmax(ll))
        if ll[j] > best_val:
            best_val = float(ll[j])
            best_row = lo + j
    return DetectionResult(symbols=idx[best_row],
                           soft=cand[best_row].astype(float),
                           log_likelihood=best_val)


@dataclass(frozen=True)
class RelaxedSolverOptions:
    max_iter: int = 500
    rel_tol: float = 1e-10
    n_starts: int = 8
    max_backtracks: int = 50


def _sphere_starts(rows: np.ndarray, nt: int, n_starts: int) -> np.ndarray:
    """Deterministic start points on the radius-sqrt(Nt) sphere.

    First start is the matched-filter direction (sum of refined rows);
    the rest come from a fixed Philox key so every call sees the same set.
    """
    dim = rows.shape[1]
    mf = rows.sum(axis=0)
    if np.linalg.norm(mf) < 1e-30:
        mf = np.zeros(dim)
        mf[0] = 1.0
    rng = np.random.Generator(np.random.Philox(key=_START_KEY))
    extra = rng.standard_normal((n_starts - 1, dim))
    starts = np.vstack([mf, extra])
    starts /= np.linalg.norm(starts, axis=1, keepdims=True)
    return math.sqrt(nt) * starts


def ml_estimate_relaxed(refined: SignRefinedChannels, nt: int, rho: float,
                        opts: RelaxedSolverOptions | None = None) -> DetectionResult:
    """Relaxed ML estimate on the sphere ||x||^2 = Nt.

    The norm-constrained problem is non-convex, so projected gradient
    ascent (ascend, renormalize, backtrack) runs from several deterministic
    starts and the best objective wins.  Accepted steps never decrease the
    objective.
    """
    if rho <= 0:
        raise ValueError(f"rho must be positive, got {rho}")
    opts = opts or RelaxedSolverOptions()
    a = refined.rows
    scale = math.sqrt(2.0 * rho / nt)
    radius = math.sqrt(nt)

    def value(x: np.ndarray) -> float:
        return float(log_phi_cdf(scale * (a @ x)).sum())

    best_x: np.ndarray | None = None
    best_f = -np.inf
    total_iters = 0
    for x in _sphere_starts(a, nt, opts.n_starts):
        f = value(x)
        step = 1.0
        for _ in range(opts.max_iter):
            grad = scale * (a.T @ dlog_phi_cdf(scale * (a @ x)))
            t = step
            accepted = False
            for _ in range(opts.max_backtracks):
                cand = x + t * grad
                nrm = np.linalg.norm(cand)
                if nrm > 0:
                    cand *= radius / nrm
                    f_cand = value(cand)
                    if f_cand > f:
                        accepted = True
                        break
                t *= 0.5
            if not accepted:
                break
            total_iters += 1
            gain = (f_cand - f) / max(1.0, abs(f))
            x, f = cand, f_cand
            step = min(t * 2.0, 1e8)
            if gain < opts.rel_tol:
                break
        if f > best_f:
            best_f, best_x = f, x
    return DetectionResult(soft=best_x, log_likelihood=best_f, iterations=total_iters)


def zf_equalizer(channels: list[RealLiftedChannel]) -> np.ndarray:
    """Pseudo-inverse of H^H for a list of per-node channels."""
    return zf_equalizer_matrix(np.stack([c.h for c in channels], axis=1))


def zf_equalizer_matrix(h_mat: np.ndarray) -> np.ndarray:
    """Pseudo-inverse of H^H via the Nt x Nt normal equations.

    ``h_mat`` is H with columns h_k.  Returns P (Nt x K) with
    P y = (H^H)^+ y.  The K x Nt systems here are tiny and
    Rayleigh-conditioned, so normal equations beat a full SVD.
    """
    nt, k = h_mat.shape
    if k < nt:
        raise SingularChannelError(
            f"H^H is rank-deficient: K={k} observations cannot resolve Nt={nt} antennas")
    gram = h_mat @ h_mat.conj().T
    try:
        return np.linalg.solve(gram, h_mat)
    except np.linalg.LinAlgError as exc:
        rank = np.linalg.matrix_rank(h_mat)
        raise SingularChannelError(
            f"channel Gram is singular (rank {rank} < Nt={nt})") from exc


def detect_nearest(constellation: Constellation, soft: np.ndarray) -> np.ndarray:
    """Per-entry nearest constellation point; ties go to the smallest index."""
    soft = np.asarray(soft, dtype=complex).ravel()
    dist = np.abs(soft[:, None] - constellation.points[None, :]) ** 2
    return np.argmin(dist, axis=1)


def zf_receive(channels: list[RealLiftedChannel], obs: QuantizedBlock,
               constellation: Constellation, use_raw: bool = False) -> DetectionResult:
    """ZF soft estimate (H^H)^+ y followed by symbol-by-symbol detection.

    ``use_raw`` swaps the quantized observations for the retained raw
    values (diagnostic unquantized baseline).
    """
    p = zf_equalizer(channels)
    y = obs.raw if use_raw else obs.quantized
    soft = p @ y
    symbols = detect_nearest(constellation, soft)
    return DetectionResult(symbols=symbols,
                           soft=np.concatenate([soft.real, soft.imag]))
