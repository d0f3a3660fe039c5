"""Per-node channel estimation from sign-quantized training observations.

The training phase has the same sign-observation structure as the data
phase with the roles of channel and signal swapped, so the ML channel
estimator maximizes a concave probit log-likelihood built from
sign-refined training columns, and the ZF-type estimator applies the
training pseudo-inverse directly to the quantized signs.

Sign observations carry no norm information, so accuracy is always
reported through the scale-blind normalized MSE.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import SingularChannelError
from .model import QuantizedBlock, RealLiftedChannel, TrainingBlock, stack_complex
from .numerics import dlog_phi_cdf, log_phi_cdf

__all__ = [
    "SignRefinedTraining",
    "ChannelEstimate",
    "SolverInfo",
    "MlSolverOptions",
    "sign_refine_training",
    "ml_channel_estimate",
    "zf_channel_estimate",
    "normalized_mse",
    "corollary1_mse",
    "lemma2_mse",
    "norm_cap",
]


@dataclass(frozen=True)
class SignRefinedTraining:
    """Training columns multiplied by the observed real-domain signs."""

    rows: np.ndarray  # (2T, 2Nt) float
    nt: int
    t_len: int

    def vector(self, i: int) -> np.ndarray:
        return self.rows[i]


def sign_refine_training(block: TrainingBlock, obs: QuantizedBlock) -> SignRefinedTraining:
    if obs.signs_real.shape[0] != 2 * block.t_len:
        raise ValueError(
            f"{obs.signs_real.shape[0]} signs do not match 2T = {2 * block.t_len}")
    rows = obs.signs_real[:, None] * block.x_real.T
    return SignRefinedTraining(rows=rows, nt=block.nt, t_len=block.t_len)


@dataclass(frozen=True)
class SolverInfo:
    iterations: int
    grad_norm: float
    boundary_active: bool


@dataclass(frozen=True)
class ChannelEstimate:
    h_r: np.ndarray         # (2Nt,) estimate in the lifted domain
    normalized: np.ndarray  # (2Nt,) unit vector, zeros if the estimate is zero
    method: str             # "ml" or "zf"
    solver_info: SolverInfo | None = None

    @property
    def h_complex(self) -> np.ndarray:
        n = self.h_r.shape[0] // 2
        return self.h_r[:n] + 1j * self.h_r[n:]


def _normalize(v: np.ndarray) -> np.ndarray:
    nrm = np.linalg.norm(v)
    return v / nrm if nrm > 0 else np.zeros_like(v)


def norm_cap(nt: int) -> float:
    """Search-ball radius for the ML estimate.

    With few training signs the data is often linearly separable and the
    likelihood supremum escapes to infinity; the cap makes the solver
    terminate, and normalized-MSE reporting makes the cap value
    immaterial.
    """
    return 4.0 * math.sqrt(nt)


@dataclass(frozen=True)
class MlSolverOptions:
    max_iter: int = 200
    grad_tol: float = 1e-8   # scaled by the number of sign observations
    step_tol: float = 1e-12
    max_backtracks: int = 60


def ml_channel_estimate(refined: SignRefinedTraining, nt: int, rho: float,
                        opts: MlSolverOptions | None = None) -> ChannelEstimate:
    """Maximize the sign-observation log-likelihood over a norm ball.

    The objective sum(log Phi(sqrt(2 rho/Nt) x~_i^T h)) is concave, so a
    damped Newton iteration with a gradient-ascent fallback finds the
    global maximum of the capped problem; steps leaving the ball are
    projected back onto it.  When the cap is active (separable sign data)
    the Newton direction comes from the KKT system of the sphere-
    restricted problem, which keeps convergence quadratic along the
    boundary.  Starts from the ZF direction (the sum of the refined
    columns) scaled to sqrt(Nt).
    """
    if rho <= 0:
        raise ValueError(f"rho must be positive, got {rho}")
    opts = opts or MlSolverOptions()
    a = refined.rows
    n_obs, dim = a.shape
    scale = math.sqrt(2.0 * rho / nt)
    radius = norm_cap(nt)
    grad_tol = opts.grad_tol * n_obs
    boundary_edge = radius * (1.0 - 1e-9)

    h = _normalize(a.sum(axis=0))
    if not h.any():
        h = np.zeros(dim)
        h[0] = 1.0
    h = math.sqrt(nt) * h

    def value(x: np.ndarray) -> float:
        return float(log_phi_cdf(scale * (a @ x)).sum())

    def project(x: np.ndarray) -> np.ndarray:
        nrm = np.linalg.norm(x)
        return x * (radius / nrm) if nrm > radius else x

    f = value(h)
    iterations = 0
    grad_norm = np.inf
    for iterations in range(1, opts.max_iter + 1):
        z = scale * (a @ h)
        lam = dlog_phi_cdf(z)
        grad = scale * (a.T @ lam)
        grad_norm = float(np.linalg.norm(grad))

        h_norm = np.linalg.norm(h)
        unit = h / h_norm if h_norm > 0 else h
        radial = float(grad @ unit)
        constrained = h_norm >= boundary_edge and radial > 0

        saturated = bool(np.all(z >= 0))  # separable signs: F flat near 0

        if constrained:
            tangential = grad - radial * unit
            if np.linalg.norm(tangential) < grad_tol:
                break
        elif grad_norm < grad_tol:
            # a true interior stationary point needs mixed-sign projections;
            # all-positive ones mean saturation, where the supremum sits on
            # the cap along the current ray
            if saturated and h_norm > 0:
                h = h * (radius / h_norm)
            break

        curv = lam * (z + lam)  # -(d/dz) lambda(z), >= 0, so neg_hess is PSD
        neg_hess = scale * scale * (a.T * curv) @ a
        neg_hess[np.diag_indices(dim)] += 1e-12 * (1.0 + np.trace(neg_hess) / dim)

        direction = None
        if constrained:
            # Newton-KKT step for max F(h) s.t. ||h|| = radius: solve
            # [[-(H - mu I), u], [u^T, 0]] [d; nu] = [g_t; 0].
            mu = radial / h_norm
            kkt = np.zeros((dim + 1, dim + 1))
            kkt[:dim, :dim] = neg_hess + mu * np.eye(dim)
            kkt[:dim, dim] = unit
            kkt[dim, :dim] = unit
            try:
                sol = np.linalg.solve(kkt, np.append(tangential, 0.0))
                direction = sol[:dim]
            except np.linalg.LinAlgError:
                direction = None
            fallback = tangential
        else:
            try:
                direction = np.linalg.solve(neg_hess, grad)
            except np.linalg.LinAlgError:
                direction = None
            fallback = grad
        if (direction is None or not np.isfinite(direction).all()
                or float(direction @ fallback) <= 0):
            direction = fallback

        stepped = False
        for candidate_dir in (direction, fallback):
            t = 1.0
            for _ in range(opts.max_backtracks):
                cand = project(h + t * candidate_dir)
                if np.linalg.norm(cand - h) < opts.step_tol:
                    break
                f_cand = value(cand)
                if f_cand > f:
                    h, f = cand, f_cand
                    stepped = True
                    break
                t *= 0.5
            if stepped:
                break
        if not stepped:
            if saturated and 0 < np.linalg.norm(h) < boundary_edge:
                h = h * (radius / np.linalg.norm(h))
            break

    h_norm = np.linalg.norm(h)
    grad_norm = float(np.linalg.norm(
        scale * (a.T @ dlog_phi_cdf(scale * (a @ h)))))
    info = SolverInfo(iterations=iterations, grad_norm=grad_norm,
                      boundary_active=h_norm >= boundary_edge)
    return ChannelEstimate(h_r=h, normalized=_normalize(h), method="ml",
                           solver_info=info)


def zf_channel_estimate(block: TrainingBlock, obs: QuantizedBlock,
                        use_raw: bool = False, form: str = "auto") -> ChannelEstimate:
    """Pseudo-inverse of the lifted training matrix applied to the signs.

    For Nt < T the unitary Gram condition collapses the pseudo-inverse to
    the closed form (Nt/T) X_R y_R.  The estimate is left unscaled: signs
    carry no norm information, so only its direction is meaningful.

    ``form`` selects "auto" (closed form when Nt < T), "closed", or "pinv".
    """
    if form not in ("auto", "closed", "pinv"):
        raise ValueError(f"unknown form {form!r}")
    y_real = stack_complex(obs.raw) if use_raw else obs.signs_real
    if y_real.shape[0] != 2 * block.t_len:
        raise ValueError(
            f"{y_real.shape[0]} observations do not match 2T = {2 * block.t_len}")
    if form == "closed" and block.nt >= block.t_len:
        raise ValueError("closed form requires Nt < T")

    if form == "closed" or (form == "auto" and block.nt < block.t_len):
        h_r = (block.nt / block.t_len) * (block.x_real @ y_real)
    else:
        h_r, _, rank, _ = np.linalg.lstsq(block.x_real.T, y_real, rcond=None)
        full = 2 * min(block.nt, block.t_len)
        if rank < full:
            raise SingularChannelError(
                f"lifted training matrix (2T={2 * block.t_len} x 2Nt={2 * block.nt}) "
                f"has rank {rank} < {full}")
    return ChannelEstimate(h_r=h_r, normalized=_normalize(h_r), method="zf")


def normalized_mse(true: RealLiftedChannel, est: ChannelEstimate, nt: int) -> float:
    """Squared distance of unit directions, scaled by 1/Nt; range [0, 4/Nt]."""
    u = true.stacked
    v = est.h_r
    if u.shape[0] != 2 * nt or v.shape[0] != 2 * nt:
        raise ValueError(f"dimension mismatch for nt={nt}")
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        raise ValueError("normalized MSE is undefined for zero-norm vectors")
    return float(np.sum((u / nu - v / nv) ** 2)) / nt


def _require_positive(**kwargs) -> None:
    for name, val in kwargs.items():
        if val <= 0:
            raise ValueError(f"{name} must be positive, got {val}")


def corollary1_mse(nt: int, rho: float, sigma_q_train_sq: float, t_len: int) -> float:
    """Gaussian-approximation MSE of the ZF training estimator, valid for Nt < T."""
    _require_positive(nt=nt, rho=rho, t_len=t_len)
    if sigma_q_train_sq < 0:
        raise ValueError(f"sigma_q_train_sq must be >= 0, got {sigma_q_train_sq}")
    if nt >= t_len:
        raise ValueError(f"formula requires Nt < T, got Nt={nt}, T={t_len}")
    return (nt ** 3 / rho + nt ** 2 * sigma_q_train_sq) / t_len


def lemma2_mse(nt: int, rho: float, sigma_q_sq: float, k: int) -> float:
    """Gaussian-approximation MSE of the data-phase ZF soft estimator."""
    _require_positive(nt=nt, rho=rho, k=k)
    if sigma_q_sq < 0:
        raise ValueError(f"sigma_q_sq must be >= 0, got {sigma_q_sq}")
    return (nt / rho + sigma_q_sq) / k
