"""System-model tests: constellations, channels, quantizer, training."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qdrx.model import (
    complex_normal,
    draw_channel,
    draw_symbols,
    lift_channel,
    make_psk,
    make_random_training,
    make_training,
    quantize,
    sign,
    stack_complex,
    transmit_data,
    transmit_training,
)
from qdrx.numerics import RandomStream

finite_complex = st.complex_numbers(min_magnitude=0, max_magnitude=1e6,
                                    allow_nan=False, allow_infinity=False)


class TestMakePsk:
    def test_bpsk(self):
        c = make_psk(2)
        assert np.allclose(c.points, [1.0, -1.0])

    def test_qpsk(self):
        c = make_psk(4)
        assert np.allclose(c.points, [1.0, 1j, -1.0, -1j], atol=1e-15)

    def test_8psk_geometry(self):
        c = make_psk(8)
        assert np.allclose(np.abs(c.points), 1.0)
        d = np.abs(c.points[:, None] - c.points[None, :])
        min_dist = d[~np.eye(8, dtype=bool)].min()
        assert min_dist == pytest.approx(2.0 * math.sin(math.pi / 8), rel=1e-12)

    def test_real_pairs_consistent(self):
        c = make_psk(8)
        assert np.allclose(c.real_pairs[:, 0], c.points.real)
        assert np.allclose(c.real_pairs[:, 1], c.points.imag)

    @pytest.mark.parametrize("m", [0, 1, -3])
    def test_rejects_small_order(self, m):
        with pytest.raises(ValueError):
            make_psk(m)

    @given(st.integers(min_value=2, max_value=64))
    def test_points_distinct_unit_modulus(self, m):
        c = make_psk(m)
        assert np.allclose(np.abs(c.points), 1.0, atol=1e-12)
        assert len(np.unique(np.round(c.points, 9))) == m


class TestLifting:
    def test_block_structure(self):
        h = np.array([1 + 2j, -3 + 0.5j])
        ch = lift_channel(h)
        assert np.allclose(ch.col1, [1, -3, 2, 0.5])
        assert np.allclose(ch.col2, [-2, -0.5, 1, -3])
        assert np.allclose(ch.stacked, ch.col1)
        assert ch.col1 @ ch.col2 == pytest.approx(0.0, abs=1e-15)
        assert np.linalg.norm(ch.col1) == pytest.approx(np.linalg.norm(h))
        assert np.linalg.norm(ch.col2) == pytest.approx(np.linalg.norm(h))

    def test_isometry_identity(self):
        # H_R^T x_R reproduces [Re(h^H x); Im(h^H x)] for random draws
        rng = np.random.default_rng(42)
        for _ in range(1000):
            nt = rng.integers(1, 6)
            h = rng.standard_normal(nt) + 1j * rng.standard_normal(nt)
            x = rng.standard_normal(nt) + 1j * rng.standard_normal(nt)
            inner = h.conj() @ x
            got = lift_channel(h).lifted.T @ stack_complex(x)
            assert np.max(np.abs(got - [inner.real, inner.imag])) < 1e-12


class TestDrawChannel:
    def test_replay(self):
        a = draw_channel(4, 3, RandomStream(9, 2))
        b = draw_channel(4, 3, RandomStream(9, 2))
        for ca, cb in zip(a, b):
            assert np.array_equal(ca.h, cb.h)

    def test_second_moment(self):
        rng = RandomStream(11, 0).generator()
        h = complex_normal(rng, (100_000, 4))
        mean_sq = np.mean(np.sum(np.abs(h) ** 2, axis=1))
        assert mean_sq == pytest.approx(4.0, abs=0.04)
        assert mean_sq / 4.0 == pytest.approx(1.0, abs=0.01)

    def test_rejects_bad_sizes(self):
        with pytest.raises(ValueError):
            draw_channel(0, 1, RandomStream(1))
        with pytest.raises(ValueError):
            draw_channel(1, 0, RandomStream(1))


class TestQuantize:
    def test_example(self):
        q = quantize(np.array([0.3 - 0.2j]))
        assert q.quantized[0] == 1 - 1j

    def test_zero_maps_to_plus(self):
        q = quantize(np.array([0j]))
        assert q.quantized[0] == 1 + 1j
        assert sign(0.0) == 1.0

    def test_idempotent(self):
        rng = np.random.default_rng(3)
        y = rng.standard_normal(64) + 1j * rng.standard_normal(64)
        once = quantize(y).quantized
        assert np.array_equal(quantize(once).quantized, once)

    def test_signs_real_stacking(self):
        y = np.array([0.5 - 1.0j, -2.0 + 3.0j])
        q = quantize(y)
        assert np.array_equal(q.signs_real, [1.0, -1.0, -1.0, 1.0])

    @given(st.lists(finite_complex, min_size=1, max_size=32))
    def test_output_alphabet(self, ys):
        q = quantize(np.array(ys, dtype=complex))
        assert np.all(np.isin(q.quantized.real, (-1.0, 1.0)))
        assert np.all(np.isin(q.quantized.imag, (-1.0, 1.0)))
        assert np.all(np.isin(q.signs_real, (-1.0, 1.0)))

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            quantize(np.array([np.nan + 0j]))


class TestTraining:
    def test_forced_construction_nt1_t2(self):
        b = make_training(1, 2)
        assert np.allclose(b.x, [[1.0, 1.0]])
        assert (b.x @ b.x.conj().T)[0, 0] == pytest.approx(2.0)

    def test_unitary_square(self):
        b = make_training(2, 2)
        assert np.max(np.abs(b.x.conj().T @ b.x - np.eye(2))) < 1e-12

    def test_wide_gram(self):
        b = make_training(4, 64)
        assert np.max(np.abs(b.x @ b.x.conj().T - 16.0 * np.eye(4))) < 1e-12

    @pytest.mark.parametrize("nt", [1, 2, 4, 8])
    @pytest.mark.parametrize("t_len", [1, 2, 4, 8, 16, 32, 64, 128, 256, 512])
    def test_gram_conditions_grid(self, nt, t_len):
        b = make_training(nt, t_len)
        if nt >= t_len:
            gap = np.abs(b.x.conj().T @ b.x - np.eye(t_len)).max()
        else:
            gap = np.abs(b.x @ b.x.conj().T - (t_len / nt) * np.eye(nt)).max()
        assert gap < 1e-12

    @pytest.mark.parametrize("nt,t_len", [(1, 4), (4, 2), (4, 128), (8, 8)])
    def test_random_training_same_gram(self, nt, t_len):
        b = make_random_training(nt, t_len, RandomStream(5, 1))
        if nt >= t_len:
            gap = np.abs(b.x.conj().T @ b.x - np.eye(t_len)).max()
        else:
            gap = np.abs(b.x @ b.x.conj().T - (t_len / nt) * np.eye(nt)).max()
        assert gap < 1e-12

    def test_random_training_replay(self):
        a = make_random_training(4, 32, RandomStream(2, 7))
        b = make_random_training(4, 32, RandomStream(2, 7))
        assert np.array_equal(a.x, b.x)

    def test_lifting_matches_complex(self):
        b = make_training(2, 8)
        assert np.allclose(b.x_real[:2, :8], b.x.real)
        assert np.allclose(b.x_real[2:, :8], b.x.imag)
        assert np.allclose(b.x_real[:2, 8:], -b.x.imag)


class TestTransmitData:
    def test_noiseless_sign_pattern(self):
        channels = draw_channel(4, 8, RandomStream(1, 0))
        x = make_psk(8).points[[0, 3, 5, 1]]
        q = transmit_data(channels, x, 7.0, RandomStream(1, 1), noiseless=True)
        h_mat = np.stack([c.h for c in channels])
        expected = h_mat.conj() @ x
        assert np.array_equal(q.quantized.real, sign(expected.real))
        assert np.array_equal(q.quantized.imag, sign(expected.imag))

    def test_high_snr_positive_real_part(self):
        # signal is purely real here, so only the real sign converges
        channel = [lift_channel(np.array([1.0 + 0j]))]
        hits = 0
        for t in range(200):
            q = transmit_data(channel, np.array([1.0 + 0j]), 1e6, RandomStream(3, t))
            hits += q.quantized[0].real == 1.0
        assert hits == 200

    def test_replay(self):
        channels = draw_channel(2, 4, RandomStream(8, 0))
        x = make_psk(4).points[[0, 1]]
        a = transmit_data(channels, x, 2.0, RandomStream(8, 1))
        b = transmit_data(channels, x, 2.0, RandomStream(8, 1))
        assert np.array_equal(a.quantized, b.quantized)
        assert np.array_equal(a.raw, b.raw)

    def test_psk_vector_power(self):
        const = make_psk(8)
        for t in range(50):
            _, x = draw_symbols(const, 4, RandomStream(0, t))
            assert np.sum(np.abs(x) ** 2) == pytest.approx(4.0, rel=1e-12)

    def test_dimension_check(self):
        channels = draw_channel(2, 4, RandomStream(8, 0))
        with pytest.raises(ValueError):
            transmit_data(channels, np.ones(3), 1.0, RandomStream(0, 0))


class TestTransmitTraining:
    def test_noiseless_diagnostic(self):
        # Nt=1, h=1, X=[1,1]: real-domain y = (c, c, 0, 0), signs all +1
        block = make_training(1, 2)
        channel = lift_channel(np.array([1.0 + 0j]))
        q = transmit_training(channel, block, 4.0, RandomStream(0, 0), noiseless=True)
        assert np.allclose(stack_complex(q.raw), [2.0, 2.0, 0.0, 0.0])
        assert np.array_equal(q.signs_real, [1.0, 1.0, 1.0, 1.0])

    def test_replay(self):
        block = make_training(4, 16)
        channel = draw_channel(4, 1, RandomStream(4, 0))[0]
        a = transmit_training(channel, block, 10.0, RandomStream(4, 1))
        b = transmit_training(channel, block, 10.0, RandomStream(4, 1))
        assert np.array_equal(a.signs_real, b.signs_real)

    def test_dimension_mismatch(self):
        block = make_training(4, 16)
        channel = draw_channel(2, 1, RandomStream(4, 0))[0]
        with pytest.raises(ValueError):
            transmit_training(channel, block, 10.0, RandomStream(4, 1))


@settings(max_examples=200, deadline=None)
@given(st.integers(min_value=1, max_value=5), st.integers(min_value=0, max_value=10 ** 6))
def test_lifting_isometry_property(nt, seed):
    rng = np.random.default_rng(seed)
    h = rng.standard_normal(nt) + 1j * rng.standard_normal(nt)
    x = rng.standard_normal(nt) + 1j * rng.standard_normal(nt)
    inner = h.conj() @ x
    got = lift_channel(h).lifted.T @ stack_complex(x)
    assert np.max(np.abs(got - [inner.real, inner.imag])) < 1e-12
