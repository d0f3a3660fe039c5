"""System model: PSK constellations, Rayleigh channels, the two-bit sign
quantizer, real-domain lifting, and unitary training matrices.

Complex quantities are systematically mirrored into the real domain with the
standard [[Re, -Im], [Im, Re]] block lifting.  The stacking convention is
fixed everywhere: for a length-n complex vector, real-domain component
``i`` (0-based, i < n) is Re(y[i]) and component ``n + i`` is Im(y[i]).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .numerics import as_generator

__all__ = [
    "Constellation",
    "RealLiftedChannel",
    "TrainingBlock",
    "QuantizedBlock",
    "make_psk",
    "draw_channel",
    "lift_channel",
    "quantize",
    "make_training",
    "make_random_training",
    "transmit_data",
    "transmit_training",
    "draw_symbols",
    "sign",
    "stack_complex",
    "complex_normal",
]


def sign(x) -> np.ndarray:
    """Hard sign with sign(0) = +1: the quantizer's elementwise decision."""
    x = np.asarray(x, dtype=float)
    return np.where(x >= 0.0, 1.0, -1.0)


def stack_complex(z) -> np.ndarray:
    """[Re(z); Im(z)] for a complex vector z, the real-domain stacking."""
    z = np.asarray(z, dtype=complex)
    return np.concatenate([z.real, z.imag])


def complex_normal(rng: np.random.Generator, shape) -> np.ndarray:
    """CN(0,1) draws: independent N(0, 1/2) real and imaginary parts."""
    parts = rng.standard_normal((2,) + tuple(np.atleast_1d(shape)))
    return (parts[0] + 1j * parts[1]) / math.sqrt(2.0)


def lift_matrix(x) -> np.ndarray:
    """Real 2m x 2n block lifting [[Re, -Im], [Im, Re]] of an m x n matrix."""
    x = np.atleast_2d(np.asarray(x, dtype=complex))
    return np.block([[x.real, -x.imag], [x.imag, x.real]])


@dataclass(frozen=True)
class Constellation:
    """M-ary unit-modulus PSK symbol set with its real-domain pairs."""

    order: int
    points: np.ndarray      # (M,) complex, |s| = 1
    real_pairs: np.ndarray  # (M, 2) float, rows [Re(s), Im(s)]


def make_psk(order: int) -> Constellation:
    """PSK points exp(j 2 pi m / M), m = 0..M-1 (zero phase offset)."""
    if order < 2:
        raise ValueError(f"PSK order must be >= 2, got {order}")
    phases = 2.0 * np.pi * np.arange(order) / order
    points = np.exp(1j * phases)
    return Constellation(order=order, points=points,
                         real_pairs=np.column_stack([points.real, points.imag]))


@dataclass(frozen=True)
class RealLiftedChannel:
    """One node's complex channel with its precomputed real lifting.

    ``lifted`` is the 2Nt x 2 matrix whose columns are the liftings of h
    and j*h; ``col1`` equals the [Re; Im] stack of h.
    """

    h: np.ndarray       # (Nt,) complex
    lifted: np.ndarray  # (2Nt, 2) float

    @property
    def col1(self) -> np.ndarray:
        return self.lifted[:, 0]

    @property
    def col2(self) -> np.ndarray:
        return self.lifted[:, 1]

    @property
    def stacked(self) -> np.ndarray:
        """[Re(h); Im(h)], identical to col1."""
        return self.lifted[:, 0]

    @property
    def nt(self) -> int:
        return self.h.shape[0]


def lift_channel(h) -> RealLiftedChannel:
    h = np.asarray(h, dtype=complex).ravel()
    lifted = np.column_stack([
        np.concatenate([h.real, h.imag]),
        np.concatenate([-h.imag, h.real]),
    ])
    return RealLiftedChannel(h=h, lifted=lifted)


def draw_channel(nt: int, k: int, stream) -> list[RealLiftedChannel]:
    """K iid Rayleigh channels h ~ CN(0, I_Nt), with liftings populated."""
    if nt < 1 or k < 1:
        raise ValueError(f"need nt >= 1 and k >= 1, got nt={nt}, k={k}")
    rng = as_generator(stream)
    h = complex_normal(rng, (k, nt))
    return [lift_channel(h[i]) for i in range(k)]


@dataclass(frozen=True)
class QuantizedBlock:
    """Sign-quantized observations plus the raw values they came from.

    ``raw`` is retained for diagnostics (sigma_q calibration, unquantized
    baselines); production receivers must only look at ``quantized`` /
    ``signs_real``.  ``signs_real`` follows the [Re; Im] stacking.
    """

    raw: np.ndarray         # (n,) complex
    quantized: np.ndarray   # (n,) complex, entries in {+-1 +- j}
    signs_real: np.ndarray  # (2n,) float, entries in {-1, +1}


def quantize(y) -> QuantizedBlock:
    """Two-bit quantization: one sign bit per real dimension, sign(0) = +1."""
    y = np.asarray(y, dtype=complex).ravel()
    if not np.all(np.isfinite(y)):
        raise ValueError("quantizer input must be finite")
    re = sign(y.real)
    im = sign(y.imag)
    return QuantizedBlock(raw=y, quantized=re + 1j * im,
                          signs_real=np.concatenate([re, im]))


@dataclass(frozen=True)
class TrainingBlock:
    """Nt x T unitary training matrix and its real lifting.

    Gram conditions: X^H X = I_T when Nt >= T, and X X^H = (T/Nt) I_Nt
    when Nt < T.  Column i of ``x_real`` is the lifted training vector for
    real-domain use i (i < T real parts, then imaginary parts).
    """

    nt: int
    t_len: int
    x: np.ndarray       # (Nt, T) complex
    x_real: np.ndarray  # (2Nt, 2T) float

    def real_column(self, i: int) -> np.ndarray:
        return self.x_real[:, i]


def make_training(nt: int, t_len: int) -> TrainingBlock:
    """Deterministic unitary training from the DFT matrix.

    Nt >= T: first T columns of the unitary Nt-point DFT.
    Nt <  T: first Nt rows of the unitary T-point DFT, scaled by
    sqrt(T/Nt) so that X X^H = (T/Nt) I_Nt.
    """
    if nt < 1 or t_len < 1:
        raise ValueError(f"need nt >= 1 and t_len >= 1, got nt={nt}, t_len={t_len}")
    if nt >= t_len:
        n = nt
        dft = np.exp(-2j * np.pi * np.outer(np.arange(n), np.arange(n)) / n) / math.sqrt(n)
        x = dft[:, :t_len]
    else:
        n = t_len
        dft = np.exp(-2j * np.pi * np.outer(np.arange(nt), np.arange(n)) / n) / math.sqrt(n)
        x = math.sqrt(t_len / nt) * dft
    return TrainingBlock(nt=nt, t_len=t_len, x=x, x_real=lift_matrix(x))


def make_random_training(nt: int, t_len: int, stream) -> TrainingBlock:
    """Haar-random unitary training with the same Gram conditions.

    The fixed DFT rows of make_training leave the one-bit quantizer's
    deterministic distortion pointing in a fixed direction per channel, so
    the ZF direction estimate floors instead of improving with T.  Drawing
    an isotropic training rotation per fading block removes that floor;
    the Monte Carlo harness therefore uses this constructor.
    """
    if nt < 1 or t_len < 1:
        raise ValueError(f"need nt >= 1 and t_len >= 1, got nt={nt}, t_len={t_len}")
    rng = as_generator(stream)
    rows, cols = (nt, t_len) if nt >= t_len else (t_len, nt)
    g = complex_normal(rng, (rows, cols))
    q, r = np.linalg.qr(g)
    q = q * (np.diagonal(r) / np.abs(np.diagonal(r)))  # Haar phase correction
    if nt >= t_len:
        x = q
    else:
        x = math.sqrt(t_len / nt) * q.conj().T
    return TrainingBlock(nt=nt, t_len=t_len, x=x, x_real=lift_matrix(x))


def draw_symbols(constellation: Constellation, nt: int,
                 stream) -> tuple[np.ndarray, np.ndarray]:
    """Uniform iid data symbols for one channel use.

    Returns (indices, x) with x the complex Nt-vector; ||x||^2 = Nt holds
    by unit modulus.
    """
    rng = as_generator(stream)
    idx = rng.integers(0, constellation.order, size=nt)
    return idx, constellation.points[idx]


def transmit_data(channels: list[RealLiftedChannel], x, rho: float, stream,
                  noiseless: bool = False) -> QuantizedBlock:
    """One data-phase channel use across all K nodes.

    y_k = sqrt(rho/Nt) h_k^H x + n_k with n_k ~ CN(0,1); ``noiseless``
    suppresses the noise for diagnostic sign-pattern checks.
    """
    x = np.asarray(x, dtype=complex).ravel()
    nt = channels[0].nt
    if x.shape[0] != nt:
        raise ValueError(f"symbol vector has length {x.shape[0]}, channels have nt={nt}")
    if rho <= 0:
        raise ValueError(f"rho must be positive, got {rho}")
    h_mat = np.stack([c.h for c in channels])  # (K, Nt)
    y = math.sqrt(rho / nt) * (h_mat.conj() @ x)
    if not noiseless:
        y = y + complex_normal(as_generator(stream), h_mat.shape[0])
    return quantize(y)


def transmit_training(channel: RealLiftedChannel, block: TrainingBlock,
                      rho: float, stream, noiseless: bool = False) -> QuantizedBlock:
    """The T training uses seen by one node, sign-quantized.

    y_train = sqrt(rho/Nt) X^H h + n; the returned block's ``signs_real``
    holds the 2T real-domain training signs.
    """
    if channel.nt != block.nt:
        raise ValueError(f"channel nt={channel.nt} does not match training nt={block.nt}")
    if rho <= 0:
        raise ValueError(f"rho must be positive, got {rho}")
    y = math.sqrt(rho / block.nt) * (block.x.conj().T @ channel.h)
    if not noiseless:
        y = y + complex_normal(as_generator(stream), block.t_len)
    return quantize(y)
