import numpy as np
import pytest
from hypothesis import given, strategies as st

from qregress.markov import spin_boson
from qregress.nonmarkov import flat_bath, single_mode
from qregress.operators import SM, SP, SX, SZ, dag, density, max_abs_diff
from qregress.oracle import (
    MAX_DIM, ExactSystem, TruncatedBath, build_hamiltonian, cutoff_convergence_check, exact_correlator,
    exact_reduced_operator, excitation_number,
)

MODEL = spin_boson(1.0, 0.05)


def small_bath(cutoff=2, g=0.1):
    return TruncatedBath.from_modes([(0.8, g), (1.0, g), (1.25, 0.5 * g)], cutoff)


def decay_gap(width, n_modes=8):
    gamma = 0.05
    tb = TruncatedBath.from_correlation(flat_bath(1.0, width, n_modes, gamma), 1)
    es = ExactSystem(MODEL, tb)
    worst = 0.0
    for t in np.linspace(0.0, 0.5 / gamma, 11):
        exact = es.reduced_operator([SP, SM], [t, t])[0, 0].real
        worst = max(worst, abs(exact - np.exp(-gamma * t)) / np.exp(-gamma * t))
    return worst


class TestTruncatedBath:
    def test_dimension(self):
        tb = small_bath()
        assert tb.dim == 2 * 27 and tb.bath_dim == 27

    def test_dimension_bound(self):
        with pytest.raises(ValueError):
            TruncatedBath.from_modes([(1.0, 0.1)] * 12, 1)
        assert TruncatedBath.from_modes([(1.0, 0.1)] * 11, 1).dim <= MAX_DIM

    def test_invalid_cutoff(self):
        with pytest.raises(ValueError):
            TruncatedBath.from_modes([(1.0, 0.1)], 0)

    def test_ladder_commutator_below_edge(self):
        tb = small_bath(3)
        b = tb.lowering(1)
        comm = b @ dag(b) - dag(b) @ b
        n1 = np.diag(dag(b) @ b).real
        keep = n1 < 2.5
        assert np.allclose(np.diag(comm)[keep], 1.0)
        assert max_abs_diff(comm - np.diag(np.diag(comm)), 0 * comm) == 0


class TestHamiltonian:
    def test_no_modes(self):
        h = build_hamiltonian(MODEL, TruncatedBath((), (), 1))
        assert max_abs_diff(h, 0.5 * SZ) == 0

    def test_jaynes_cummings_block(self):
        g = 0.1
        h = build_hamiltonian(MODEL, TruncatedBath.from_modes([(0.9, g)], 1))
        # basis |e0>, |e1>, |g0>, |g1>
        expected = np.diag([0.5, 1.4, -0.5, 0.4]).astype(complex)
        expected[3, 0] = expected[0, 3] = g
        assert max_abs_diff(h, expected) == 0

    def test_hermitian(self):
        h = build_hamiltonian(MODEL, TruncatedBath.from_modes([(0.9, 0.1 + 0.05j), (1.1, 0.2)], 2))
        assert max_abs_diff(h, dag(h)) == 0

    def test_excitation_number_conserved(self):
        tb = TruncatedBath.from_modes([(0.9, 0.1 + 0.05j), (1.1, 0.2)], 2)
        h = build_hamiltonian(MODEL, tb)
        n = excitation_number(tb)
        assert max_abs_diff(h @ n, n @ h) <= 1e-12


class TestExactSystem:
    @given(st.floats(0, 50), st.integers(0, 2**31 - 1))
    def test_norm_conservation(self, t, seed):
        es = ExactSystem(MODEL, small_bath(1))
        v = np.random.default_rng(seed).normal(size=es.bath.dim) + 0j
        v /= np.linalg.norm(v)
        assert abs(np.linalg.norm(es.propagate(v, t)) - 1) <= 1e-12

    def test_heisenberg_matches_schroedinger(self):
        es = ExactSystem(MODEL, small_bath(2))
        psi0 = es.vacuum_states()[:, 0]
        for t in (0.7, 5.0):
            psi = es.propagate(psi0, t)
            schro = np.vdot(psi, es.bath.embed(SX) @ psi)
            assert abs(exact_correlator(MODEL, es.bath, [SX], [t], density("excited")) - schro) <= 1e-12

    def test_unitary(self):
        es = ExactSystem(MODEL, small_bath(1))
        u = es.unitary(2.0)
        assert max_abs_diff(u @ dag(u), np.eye(es.bath.dim)) <= 1e-12

    def test_free_qubit(self):
        tb = TruncatedBath.from_modes([(1.0, 0.0)], 1)
        for t1, t2 in [(0.3, 1.9), (2.0, 0.5)]:
            val = exact_correlator(MODEL, tb, [SX, SX], [t1, t2], density("excited"))
            assert val == pytest.approx(np.exp(-1j * (t2 - t1)), abs=1e-12)

    def test_vacuum_rabi(self):
        g = 0.05
        tb = TruncatedBath.from_correlation(single_mode(1.0, g), 1)
        for t in (1.0, 10.0, 31.4):
            val = exact_correlator(MODEL, tb, [SZ], [t], density("excited"))
            assert val.real == pytest.approx(np.cos(2 * g * t), abs=1e-12)

    def test_input_validation(self):
        tb = small_bath(1)
        with pytest.raises(ValueError):
            exact_reduced_operator(MODEL, tb, [SX], [-1.0])
        with pytest.raises(ValueError):
            exact_reduced_operator(MODEL, tb, [SX, SX], [1.0])
        with pytest.raises(ValueError):
            exact_correlator(MODEL, tb, [SX], [1.0], np.diag([2.0, -1.0]))


class TestDecay:
    def test_wide_band_tracks_exponential(self):
        assert decay_gap(3.0) <= 0.10

    def test_narrow_band_memory(self):
        # an 8 gamma wide band keeps memory on the 1/gamma scale; gap measured once
        assert decay_gap(0.4) == pytest.approx(0.2266179, abs=1e-6)

    def test_gap_shrinks_with_bandwidth(self):
        gaps = [decay_gap(w) for w in (0.4, 1.0, 2.0, 3.0)]
        assert all(a > b for a, b in zip(gaps, gaps[1:]))


class TestCutoff:
    def bath(self, g=0.1):
        return TruncatedBath.from_correlation(flat_bath(1.0, 3.0, 4, 0.05), 3) if g else \
            TruncatedBath.from_modes([(0.9, 0.0), (1.1, 0.0)], 3)

    @pytest.mark.parametrize("ops,times", [([SX, SX], [0.5, 2.0]), ([SP, SM], [3.0, 3.0])])
    def test_two_insertions(self, ops, times):
        r = cutoff_convergence_check(MODEL, self.bath(), ops, times, density("plus"))
        assert r.deviation <= 1e-10 and r.cutoff == 3

    def test_uncoupled_exact(self):
        r = cutoff_convergence_check(MODEL, self.bath(0), [SX, SX], [0.5, 2.0], density("plus"))
        assert r.deviation == 0

    def test_otoc(self):
        r = cutoff_convergence_check(MODEL, self.bath(), [SX, SZ, SX, SZ], [0.5, 1.5, 0.5, 1.5], density("plus"))
        assert r.deviation <= 1e-6

    def test_needs_cutoff_two(self):
        with pytest.raises(ValueError):
            cutoff_convergence_check(MODEL, small_bath(1), [SX], [1.0], density("plus"))
