"""Seeded Monte Carlo harness for the channel-estimation and SER studies.

Every trial owns the counter-based stream (seed, trial_index), so results
are bit-identical for any worker count and any scheduling: workers compute
disjoint trial ranges and the reduction runs in trial order.  Training
draws live on a separate substream so that perfect-CSI and estimated-CSI
runs of the same seed see identical channels, data symbols, and noise.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .chanest import (
    corollary1_mse,
    ml_channel_estimate,
    normalized_mse,
    sign_refine_training,
    zf_channel_estimate,
)
from .detection import ml_estimate_relaxed, sign_refine, zf_equalizer_matrix
from .errors import SpecValidationError
from .model import (
    complex_normal,
    draw_channel,
    make_psk,
    make_random_training,
    make_training,
    sign,
    stack_complex,
    transmit_data,
    transmit_training,
)
from .numerics import RandomStream

__all__ = [
    "KINDS",
    "ExperimentSpec",
    "MetricRecord",
    "run_mse_sweep",
    "run_ser_sweep",
    "run_lemma1_convergence",
    "calibrate_sigma_q",
    "sigma_q_from_raw",
    "compare_theory",
    "run_experiment",
]

KINDS = ("mse_sweep", "ser_sweep", "sigma_q", "lemma1_convergence")

# Offset separating the training substream from the per-trial data stream.
_TRAIN_SUBSTREAM = 1 << 48


@dataclass(frozen=True)
class ExperimentSpec:
    """Full configuration of one seeded experiment."""

    kind: str
    nt: int = 4
    k: int = 32
    m: int = 8
    l: int | None = None
    t_list: tuple[int, ...] = ()
    snr_db_list: tuple[float, ...] = (10.0,)
    k_list: tuple[int, ...] = ()
    trials: int = 10000
    seed: int = 1
    receiver: str = "zf"
    estimator: str = "both"
    workers: int = 1

    def resolved_l(self) -> int:
        if self.l is not None:
            return self.l
        if not self.t_list:
            raise SpecValidationError("cannot derive l without t_list")
        return 2 * max(self.t_list) + 256

    def validate(self) -> None:
        bad: list[str] = []
        if self.kind not in KINDS:
            bad.append(f"kind={self.kind!r} not in {KINDS}")
        if self.nt < 1:
            bad.append(f"nt={self.nt} must be >= 1")
        if self.k < 1:
            bad.append(f"k={self.k} must be >= 1")
        if self.m < 2:
            bad.append(f"m={self.m} must be >= 2")
        if self.trials < 1:
            bad.append(f"trials={self.trials} must be >= 1")
        if self.workers < 1:
            bad.append(f"workers={self.workers} must be >= 1")
        if any(t < 1 for t in self.t_list):
            bad.append(f"t_list={self.t_list} entries must be positive")
        if self.kind == "mse_sweep":
            if not self.t_list:
                bad.append("t_list must be non-empty for mse_sweep")
            if self.estimator not in ("ml", "zf", "both"):
                bad.append(f"estimator={self.estimator!r} not in (ml, zf, both)")
        if self.kind == "ser_sweep":
            if not self.t_list:
                bad.append("t_list must be non-empty for ser_sweep")
            if self.receiver != "zf":
                bad.append(f"receiver={self.receiver!r}: only the zf receiver is supported")
            if self.estimator not in ("ml", "zf", "perfect"):
                bad.append(f"estimator={self.estimator!r} not in (ml, zf, perfect)")
            if self.t_list and not bad:
                l = self.resolved_l()
                for t in self.t_list:
                    if t >= l:
                        bad.append(f"t={t} must be < l={l}")
        if self.kind == "lemma1_convergence":
            if not self.k_list:
                bad.append("k_list must be non-empty for lemma1_convergence")
            if any(kk < 1 for kk in self.k_list):
                bad.append(f"k_list={self.k_list} entries must be positive")
        if bad:
            raise SpecValidationError("; ".join(bad))


@dataclass(frozen=True)
class MetricRecord:
    """One output row: experiment coordinates plus a metric estimate."""

    experiment: str
    nt: int
    k: int | None
    t: int | None
    l: int | None
    snr_db: float | None
    modulation: int | None
    method: str
    metric: str
    value: float
    stderr: float
    trials_used: int
    seed: int


def _mean_record(samples: np.ndarray, **coords) -> MetricRecord:
    n = samples.shape[0]
    stderr = float(samples.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return MetricRecord(value=float(samples.mean()), stderr=stderr,
                        trials_used=n, **coords)


def _trial_ranges(trials: int, workers: int) -> list[tuple[int, int]]:
    n_chunks = 1 if workers <= 1 else min(trials, workers * 4)
    bounds = np.linspace(0, trials, n_chunks + 1).astype(int)
    return [(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


def _map_trials(fn, payload, trials: int, workers: int) -> np.ndarray:
    """Run fn(payload, lo, hi) over disjoint trial ranges, in trial order."""
    ranges = _trial_ranges(trials, workers)
    if workers <= 1 or len(ranges) == 1:
        parts = [fn(payload, lo, hi) for lo, hi in ranges]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(fn, payload, lo, hi) for lo, hi in ranges]
            parts = [f.result() for f in futures]
    return np.concatenate(parts, axis=0)


# --------------------------------------------------------------------------
# normalized-MSE sweep over training lengths (single receive node)
# --------------------------------------------------------------------------

def _mse_chunk(payload, lo: int, hi: int) -> np.ndarray:
    nt, t_len, rho, seed, want_ml, want_zf = payload
    out = np.full((hi - lo, 2), np.nan)
    for i, trial in enumerate(range(lo, hi)):
        rng = RandomStream(seed, trial).generator()
        block = make_random_training(nt, t_len, rng)
        channel = draw_channel(nt, 1, rng)[0]
        obs = transmit_training(channel, block, rho, rng)
        if want_ml:
            refined = sign_refine_training(block, obs)
            est = ml_channel_estimate(refined, nt, rho)
            out[i, 0] = normalized_mse(channel, est, nt)
        if want_zf:
            out[i, 1] = normalized_mse(channel, zf_channel_estimate(block, obs), nt)
    return out


def run_mse_sweep(spec: ExperimentSpec) -> list[MetricRecord]:
    """Normalized MSE of the ML and ZF channel estimators vs T and SNR.

    One receive node per trial with a fresh Haar training rotation; trials
    share streams across (T, snr) cells, so the two estimators and all
    cells are compared on common random numbers.
    """
    spec.validate()
    if spec.kind != "mse_sweep":
        raise SpecValidationError(f"kind={spec.kind!r}, expected mse_sweep")
    want_ml = spec.estimator in ("ml", "both")
    want_zf = spec.estimator in ("zf", "both")
    records = []
    for snr_db in spec.snr_db_list:
        rho = 10.0 ** (snr_db / 10.0)
        for t_len in spec.t_list:
            payload = (spec.nt, t_len, rho, spec.seed, want_ml, want_zf)
            samples = _map_trials(_mse_chunk, payload, spec.trials, spec.workers)
            for col, method in ((0, "ml"), (1, "zf")):
                if (method == "ml" and not want_ml) or (method == "zf" and not want_zf):
                    continue
                records.append(_mean_record(
                    samples[:, col], experiment="mse_sweep", nt=spec.nt, k=1,
                    t=t_len, l=None, snr_db=snr_db, modulation=spec.m,
                    method=method, metric="mse_normalized", seed=spec.seed))
    return records


# --------------------------------------------------------------------------
# SER sweep for the ZF receiver under perfect or estimated CSI
# --------------------------------------------------------------------------

def _estimate_fusion_matrix(channels, block, nt, rho, estimator, rng) -> np.ndarray:
    """Per-node channel estimates, normalized, as fusion-center columns."""
    cols = []
    for channel in channels:
        obs = transmit_training(channel, block, rho, rng)
        if estimator == "zf":
            est = zf_channel_estimate(block, obs)
        else:
            est = ml_channel_estimate(sign_refine_training(block, obs), nt, rho)
        v = est.normalized
        cols.append(v[:nt] + 1j * v[nt:])
    return np.stack(cols, axis=1)


def _ser_chunk(payload, lo: int, hi: int) -> np.ndarray:
    nt, k, m, t_len, l, rho, seed, estimator = payload
    constellation = make_psk(m)
    uses = l - t_len
    amp = math.sqrt(rho / nt)
    out = np.empty(hi - lo)
    for i, trial in enumerate(range(lo, hi)):
        rng = RandomStream(seed, trial).generator()
        channels = draw_channel(nt, k, rng)
        h_true = np.stack([c.h for c in channels], axis=1)  # (Nt, K)
        if estimator == "perfect":
            h_fc = h_true
        else:
            train_rng = RandomStream(seed, trial + _TRAIN_SUBSTREAM).generator()
            block = make_random_training(nt, t_len, train_rng)
            h_fc = _estimate_fusion_matrix(channels, block, nt, rho, estimator, train_rng)
        equalizer = zf_equalizer_matrix(h_fc)  # (Nt, K)

        idx = rng.integers(0, m, size=(uses, nt))
        x = constellation.points[idx]
        y = amp * (x @ h_true.conj()) + complex_normal(rng, (uses, k))
        y_q = sign(y.real) + 1j * sign(y.imag)
        soft = y_q @ equalizer.T  # (uses, Nt)
        decided = np.argmin(
            np.abs(soft[:, :, None] - constellation.points[None, None, :]) ** 2, axis=2)
        out[i] = np.mean(decided != idx)
    return out


def run_ser_sweep(spec: ExperimentSpec) -> list[MetricRecord]:
    """Symbol error rate of the ZF receiver vs SNR, per training length.

    Estimated-CSI runs build the fusion-center matrix from normalized
    per-node estimates; the data phase spans the L - T non-training uses.
    """
    spec.validate()
    if spec.kind != "ser_sweep":
        raise SpecValidationError(f"kind={spec.kind!r}, expected ser_sweep")
    l = spec.resolved_l()
    records = []
    for snr_db in spec.snr_db_list:
        rho = 10.0 ** (snr_db / 10.0)
        for t_len in spec.t_list:
            payload = (spec.nt, spec.k, spec.m, t_len, l, rho, spec.seed, spec.estimator)
            samples = _map_trials(_ser_chunk, payload, spec.trials, spec.workers)
            records.append(_mean_record(
                samples, experiment="ser_sweep", nt=spec.nt, k=spec.k, t=t_len,
                l=l, snr_db=snr_db, modulation=spec.m, method=spec.estimator,
                metric="ser", seed=spec.seed))
    return records


# --------------------------------------------------------------------------
# relaxed-ML convergence in the number of receive nodes
# --------------------------------------------------------------------------

def _lemma1_chunk(payload, lo: int, hi: int) -> np.ndarray:
    nt, k, m, rho, seed = payload
    constellation = make_psk(m)
    x = constellation.points[np.arange(nt) % m]
    x_real = stack_complex(x)
    out = np.empty(hi - lo)
    for i, trial in enumerate(range(lo, hi)):
        rng = RandomStream(seed, trial).generator()
        channels = draw_channel(nt, k, rng)
        obs = transmit_data(channels, x, rho, rng)
        result = ml_estimate_relaxed(sign_refine(channels, obs), nt, rho)
        out[i] = np.linalg.norm(result.soft - x_real)
    return out


def run_lemma1_convergence(spec: ExperimentSpec) -> list[MetricRecord]:
    """Median distance of the relaxed ML estimate to the sent vector vs K."""
    spec.validate()
    if spec.kind != "lemma1_convergence":
        raise SpecValidationError(f"kind={spec.kind!r}, expected lemma1_convergence")
    records = []
    for snr_db in spec.snr_db_list:
        rho = 10.0 ** (snr_db / 10.0)
        for k in spec.k_list:
            payload = (spec.nt, k, spec.m, rho, spec.seed)
            samples = _map_trials(_lemma1_chunk, payload, spec.trials, spec.workers)
            n = samples.shape[0]
            stderr = float(samples.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
            records.append(MetricRecord(
                experiment="lemma1_convergence", nt=spec.nt, k=k, t=None, l=None,
                snr_db=snr_db, modulation=spec.m, method="ml", metric="median_error",
                value=float(np.median(samples)), stderr=stderr, trials_used=n,
                seed=spec.seed))
    return records


# --------------------------------------------------------------------------
# quantization-noise variance calibration
# --------------------------------------------------------------------------

def sigma_q_from_raw(y: np.ndarray, nt: int, rho: float) -> tuple[float, float]:
    """Estimate sigma_q^2 from raw observations: (Nt/rho) E|quantize(y) - y|^2."""
    y = np.asarray(y, dtype=complex).ravel()
    w = (sign(y.real) + 1j * sign(y.imag)) - y
    per_sample = (nt / rho) * np.abs(w) ** 2
    n = per_sample.shape[0]
    stderr = float(per_sample.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return float(per_sample.mean()), stderr


def calibrate_sigma_q(nt: int, rho: float, samples: int, seed: int,
                      mode: str = "data") -> MetricRecord:
    """Monte Carlo estimate of the Gaussian quantization-noise variance.

    mode "data": observations follow the data phase, signal h^H x with
    ||x||^2 = Nt.  mode "train": per-entry training statistics, signal
    x_l^H h with a unit-norm training column.  The scalar observation
    distribution is the same for every unit-modulus symbol choice, so a
    fixed signal vector is used.
    """
    if samples < 10 ** 4:
        raise SpecValidationError(f"samples={samples} must be >= 1e4")
    if mode not in ("data", "train"):
        raise SpecValidationError(f"mode={mode!r} not in (data, train)")
    if rho <= 0 or nt < 1:
        raise SpecValidationError(f"need rho > 0 and nt >= 1, got rho={rho}, nt={nt}")
    rng = RandomStream(seed, 0).generator()
    h = complex_normal(rng, (samples, nt))
    if mode == "data":
        signal = h.conj().sum(axis=1)  # h^H x with x = (1, ..., 1)
    else:
        column = make_training(nt, max(2 * nt, 16)).x[:, 0]
        signal = h @ column.conj()
    y = math.sqrt(rho / nt) * signal + complex_normal(rng, samples)
    value, stderr = sigma_q_from_raw(y, nt, rho)
    return MetricRecord(
        experiment="sigma_q", nt=nt, k=None, t=None, l=None,
        snr_db=10.0 * math.log10(rho), modulation=None, method=mode,
        metric="sigma_q_sq", value=value, stderr=stderr, trials_used=samples,
        seed=seed)


# --------------------------------------------------------------------------
# theory overlay
# --------------------------------------------------------------------------

def compare_theory(records: list[MetricRecord], sigma_q_sq: float) -> list[MetricRecord]:
    """Corollary-style 1/T theory values next to empirical ZF sweep rows.

    The closed form models the unnormalized estimator under a Gaussian
    quantization-error approximation, so the useful comparison is the
    decay exponent, surfaced here as empirical/theory ratio rows.
    Rows with Nt >= T get a skip marker instead of a theory value.
    """
    out: list[MetricRecord] = []
    for rec in records:
        if rec.method != "zf" or rec.metric != "mse_normalized" or rec.t is None:
            continue
        base = dict(experiment=rec.experiment, nt=rec.nt, k=rec.k, t=rec.t,
                    l=rec.l, snr_db=rec.snr_db, modulation=rec.modulation,
                    method="zf", trials_used=rec.trials_used, seed=rec.seed)
        if rec.nt >= rec.t:
            out.append(MetricRecord(metric="theory_skipped", value=math.nan,
                                    stderr=math.nan, **base))
            continue
        rho = 10.0 ** (rec.snr_db / 10.0)
        theory = corollary1_mse(rec.nt, rho, sigma_q_sq, rec.t)
        out.append(MetricRecord(metric="mse_theory", value=theory, stderr=0.0, **base))
        out.append(MetricRecord(metric="mse_ratio", value=rec.value / theory,
                                stderr=rec.stderr / theory, **base))
    return out


def run_experiment(spec: ExperimentSpec) -> list[MetricRecord]:
    """Dispatch a spec to its runner (sigma_q is driven via the CLI)."""
    if spec.kind == "mse_sweep":
        return run_mse_sweep(spec)
    if spec.kind == "ser_sweep":
        return run_ser_sweep(spec)
    if spec.kind == "lemma1_convergence":
        return run_lemma1_convergence(spec)
    raise SpecValidationError(f"no runner for kind={spec.kind!r}")
