import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pfdemod.ofdm_core import (PilotLayout, PskConstellation, detect_ml, detect_ratio,
                               differential_decode, differential_encode, make_block, ml_indices)
from pfdemod.transform import dft_unitary

ORDERS = [2, 4, 8, 16]


class TestConstellation:
    @pytest.mark.parametrize("Q", ORDERS)
    def test_points_unit_modulus_and_distinct(self, Q):
        c = PskConstellation(Q)
        np.testing.assert_allclose(np.abs(c.points), 1.0, atol=1e-15)
        gaps = np.abs(c.points[:, None] - c.points[None, :]) + np.eye(Q)
        assert gaps.min() > 1e-3

    def test_qpsk_points(self):
        c = PskConstellation(4)
        np.testing.assert_allclose(c.points, [1, 1j, -1, -1j], atol=1e-15)

    @pytest.mark.parametrize("Q", ORDERS)
    def test_gray_neighbours_differ_in_one_bit(self, Q):
        c = PskConstellation(Q)
        m = c.bits_per_symbol
        bits = c.indices_to_bits(np.arange(Q)).reshape(Q, m)
        for q in range(Q):
            nxt = (q + 1) % Q
            assert np.sum(bits[q] != bits[nxt]) == 1

    @pytest.mark.parametrize("Q", ORDERS)
    def test_labels_are_a_permutation(self, Q):
        c = PskConstellation(Q)
        assert sorted(c.labels.tolist()) == list(range(Q))

    @pytest.mark.parametrize("Q", [0, 1, 3, 6])
    def test_rejects_bad_order(self, Q):
        with pytest.raises(ValueError):
            PskConstellation(Q)

    def test_bits_roundtrip(self):
        rng = np.random.default_rng(1)
        for Q in ORDERS:
            c = PskConstellation(Q)
            bits = rng.integers(0, 2, size=c.bits_per_symbol * 2500)
            back = c.symbols_to_bits(c.bits_to_symbols(bits))
            np.testing.assert_array_equal(back, bits)

    def test_bits_validation(self):
        c = PskConstellation(4)
        with pytest.raises(ValueError):
            c.bits_to_indices([1, 0, 1])
        with pytest.raises(ValueError):
            c.bits_to_indices([1, 2])

    def test_index_of_rejects_off_grid(self):
        c = PskConstellation(4)
        with pytest.raises(ValueError):
            c.index_of([1 + 1e-6])
        assert c.index_of([1j * (1 + 1e-12)])[0] == 1

    def test_nearest_index(self):
        c = PskConstellation(4)
        assert list(c.nearest_index([2.0, 0.3j, -5, -1j + 0.1])) == [0, 1, 2, 3]


class TestDifferentialCoding:
    @given(st.lists(st.integers(0, 7), min_size=1, max_size=64))
    def test_encode_recursion(self, idx):
        c = PskConstellation(8)
        b = c.points[idx]
        d = differential_encode(b, c)
        assert d[0] == 1
        np.testing.assert_allclose(d[1:], b * d[:-1], atol=1e-12)
        # exact table points, no drift
        c.index_of(d)

    @given(st.lists(st.integers(0, 3), min_size=1, max_size=64), st.integers(0, 3))
    def test_noiseless_roundtrip(self, idx, d0):
        c = PskConstellation(4)
        b = c.points[idx]
        d = differential_encode(b, c, d0=c.points[d0])
        for det in ("ml", "ratio"):
            np.testing.assert_allclose(differential_decode(d, c, det), b, atol=1e-12)

    def test_roundtrip_through_channel_gain(self):
        c = PskConstellation(4)
        rng = np.random.default_rng(2)
        idx = rng.integers(4, size=255)
        d = differential_encode(c.points[idx], c)
        x = (0.3 - 2.1j) * d
        np.testing.assert_array_equal(c.index_of(differential_decode(x, c)), idx)

    def test_make_block(self):
        c = PskConstellation(4)
        idx = np.arange(15) % 4
        blk = make_block(idx, c)
        assert blk.K == 16
        np.testing.assert_allclose(dft_unitary(blk.time_samples), blk.coded_symbols, atol=1e-12)
        np.testing.assert_allclose(blk.info_symbols, c.points[idx])

    def test_encode_rejects_non_points(self):
        with pytest.raises(ValueError):
            differential_encode([0.5], PskConstellation(4))

    def test_unknown_detector(self):
        with pytest.raises(ValueError):
            differential_decode(np.ones(4), PskConstellation(4), "coherent")


class TestDetectors:
    def test_ml_matches_brute_force(self):
        rng = np.random.default_rng(3)
        n = 100_000
        for Q in (2, 4, 8):
            c = PskConstellation(Q)
            xp = rng.standard_normal(n) + 1j * rng.standard_normal(n)
            xc = rng.standard_normal(n) + 1j * rng.standard_normal(n)
            cost = np.abs(xc[:, None] - xp[:, None] * c.points[None, :]) ** 2
            np.testing.assert_array_equal(ml_indices(xp, xc, c), np.argmin(cost, axis=1))

    @settings(max_examples=200)
    @given(st.complex_numbers(max_magnitude=1e3, allow_nan=False, allow_infinity=False),
           st.complex_numbers(max_magnitude=1e3, allow_nan=False, allow_infinity=False),
           st.floats(0.01, 100), st.floats(-np.pi, np.pi))
    def test_ml_invariant_to_common_gain(self, xp, xc, g, phi):
        c = PskConstellation(4)
        s = g * np.exp(1j * phi)
        corr = np.real(xc * np.conj(xp) * np.conj(c.points))
        top = np.sort(corr)[-2:]
        if top[1] - top[0] < 1e-6 * (1 + abs(xc * xp)):
            return  # near-tie, scaling may flip it
        assert ml_indices(xp, xc, c) == ml_indices(s * xp, s * xc, c)

    def test_ml_equals_ratio_detector(self):
        # for unit-modulus PSK both reduce to the phase of x_curr*conj(x_prev)
        rng = np.random.default_rng(4)
        c = PskConstellation(8)
        xp = rng.standard_normal(10_000) + 1j * rng.standard_normal(10_000)
        xc = rng.standard_normal(10_000) + 1j * rng.standard_normal(10_000)
        np.testing.assert_array_equal(detect_ml(xp, xc, c), detect_ratio(xp, xc, c))

    def test_zero_reference(self):
        c = PskConstellation(4)
        assert ml_indices(0j, 1 + 1j, c) == 0
        with pytest.raises(ZeroDivisionError):
            detect_ratio(0j, 1.0, c)


class TestPilotLayout:
    def test_equispaced(self):
        lay = PilotLayout.equispaced(1024, 32)
        np.testing.assert_array_equal(lay.indices, 1 + 32 * np.arange(32))
        assert lay.count == 32
        assert lay.data_indices().size == 1023 - 32

    def test_contiguous(self):
        lay = PilotLayout.contiguous(64, 8)
        np.testing.assert_array_equal(lay.indices, np.arange(1, 9))

    def test_per_subband(self):
        lay = PilotLayout.per_subband(1024, 4, 32)
        assert lay.count == 128
        counts = np.bincount(lay.subband_of(lay.indices), minlength=4)
        np.testing.assert_array_equal(counts, [32] * 4)
        assert lay.indices[32] == 257

    @pytest.mark.parametrize("K,I", [(64, 1), (64, 7), (64, 63)])
    def test_data_and_pilots_partition(self, K, I):
        lay = PilotLayout.equispaced(K, I)
        both = np.concatenate([lay.indices, lay.data_indices()])
        np.testing.assert_array_equal(np.sort(both), np.arange(1, K))

    @pytest.mark.parametrize("idx", [[0, 3], [3, 2], [5, 5], [70]])
    def test_invalid_indices(self, idx):
        with pytest.raises(ValueError):
            PilotLayout(np.array(idx), 64)

    def test_invalid_counts(self):
        with pytest.raises(ValueError):
            PilotLayout.equispaced(64, 64)
        with pytest.raises(ValueError):
            PilotLayout.per_subband(64, 8, 8)
        with pytest.raises(ValueError):
            PilotLayout.per_subband(64, 3, 2)
