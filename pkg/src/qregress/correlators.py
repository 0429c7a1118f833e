"""Reduced multi-time operators at second order in the system-bath coupling.

An N-point reduced operator is the bath trace of a product of Heisenberg
operators.  At order lambda^2 and in the Markov/secular limit it is the product
of one-point reduced operators plus one irreducible term for every pair of
slots.  For a coupling ``H_SR = sum_i S^i (x) R^i`` with eigenoperators
``S^i = sum_w S^i_w`` the pair (j, k) contributes

    t_min * sum_{i,j,w} [ -beta1(-w) S^i_w O_j S^j_-w O_k  + beta1(-w) S^i_w O_j O_k S^j_-w
                          +beta3(w)  O_j S^i_w S^j_-w O_k  - beta3(w)  O_j S^i_w O_k S^j_-w ]

where ``beta1(w') = Gamma^{ij}(-w')``, ``beta3(w') = Gamma^{ij}(w')`` and
``Gamma^{ij}(w) = int du e^{iwu} Tr[R^i(u) R^j rho_R]``.  Slots between O_j
and O_k keep their textual position (W-ordering).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Callable, Sequence

import numpy as np

from .markov import SystemModel, evolve_one_point
from .operators import SM, SP, as_operator, dag, is_hermitian, validate_density_matrix


@dataclass(frozen=True)
class ReducedOperator:
    value: np.ndarray
    times: tuple
    order_lambda: int = 2


def eigenoperator_decomposition(hs, s, rel_tol: float = 1e-9) -> list:
    """Split ``s`` into components S_w with exp(iHt) S_w exp(-iHt) = e^{iwt} S_w.

    Returns (w, S_w) pairs sorted by frequency.  Frequencies closer than
    ``rel_tol * max|E|`` are merged.
    """
    hs = as_operator(hs, "hs")
    s = as_operator(s, "s")
    if not is_hermitian(hs, 1e-12):
        raise ValueError("system Hamiltonian must be Hermitian")
    if s.shape != hs.shape:
        raise ValueError("dimension mismatch")
    evals, evecs = np.linalg.eigh(hs)
    tol = rel_tol * max(np.max(np.abs(evals)), 1.0)
    # group degenerate eigenvalues into projectors
    levels, projs = [], []
    for e, v in zip(evals, evecs.T):
        p = np.outer(v, v.conj())
        for n, lev in enumerate(levels):
            if abs(lev - e) <= tol:
                projs[n] = projs[n] + p
                break
        else:
            levels.append(e)
            projs.append(p)
    parts: list[list] = []
    for ea, pa in zip(levels, projs):
        for eb, pb in zip(levels, projs):
            comp = pa @ s @ pb
            if np.max(np.abs(comp)) < 1e-14:
                continue
            w = ea - eb
            for entry in parts:
                if abs(entry[0] - w) <= tol:
                    entry[1] = entry[1] + comp
                    break
            else:
                parts.append([w, comp])
    parts.sort(key=lambda x: x[0])
    return [(float(w), c) for w, c in parts]


class _FrequencyTable:
    """Complex values keyed by a Bohr frequency, looked up with a tolerance."""

    def __init__(self, items, tol: float):
        self.items = tuple((float(w), complex(v)) for w, v in items)
        self.tol = tol

    def __call__(self, w: float) -> complex:
        for key, val in self.items:
            if abs(key - w) <= self.tol:
                return val
        raise KeyError(f"no beta value stored for Bohr frequency {w:.12g}")

    def scaled(self, c: float) -> "_FrequencyTable":
        return _FrequencyTable([(w, c * v) for w, v in self.items], self.tol)


@dataclass(frozen=True, eq=False)
class CouplingSpec:
    """Eigenoperator decomposition of the coupling plus Markovian bath data.

    ``channels`` holds the system operators S^i.  ``eigenops[i]`` is the list
    of (w, S^i_w).  ``beta1[(i, j)]`` and ``beta3[(i, j)]`` map a Bohr
    frequency to the full-line bath transform described in the module doc.
    ``decay`` and ``lamb_shift`` mirror the model's gamma and delta.
    """

    model: SystemModel
    channels: tuple
    eigenops: tuple
    beta1: dict
    beta3: dict
    decay: float
    lamb_shift: float
    lambda_sq: float = 1.0
    freq_tol: float = 1e-9

    def beta2(self, i: int, j: int, w: float) -> complex:
        return self.beta1[(i, j)](w)

    def beta4(self, i: int, j: int, w: float) -> complex:
        return self.beta3[(i, j)](w)

    def scaled(self, c: float) -> "CouplingSpec":
        """Same spec with every beta value multiplied by ``c``."""
        return CouplingSpec(
            model=self.model, channels=self.channels, eigenops=self.eigenops,
            beta1={k: v.scaled(c) for k, v in self.beta1.items()},
            beta3={k: v.scaled(c) for k, v in self.beta3.items()},
            decay=self.decay, lamb_shift=self.lamb_shift,
            lambda_sq=self.lambda_sq, freq_tol=self.freq_tol,
        )

    def pair_terms(self) -> list:
        """Flattened (S^i_w, S^j_-w, beta1(-w), beta3(w)) tuples with nonzero weight."""
        out = []
        tol = self.freq_tol
        for i, comps_i in enumerate(self.eigenops):
            for j, comps_j in enumerate(self.eigenops):
                for w, s_iw in comps_i:
                    for wj, s_jw in comps_j:
                        if abs(wj + w) > tol:
                            continue
                        b1 = self.beta1[(i, j)](-w)
                        b3 = self.beta3[(i, j)](w)
                        if b1 == 0 and b3 == 0:
                            continue
                        out.append((s_iw, s_jw, b1, b3))
        return out


def coupling_from_spectrum(model: SystemModel, channels: Sequence, gamma_fn: Callable) -> CouplingSpec:
    """Build a CouplingSpec from ``gamma_fn(i, j, w) -> Gamma^{ij}(w)``.

    Tables are filled for every frequency that can be requested, zeros
    included, so lookups never miss for a consistent model.
    """
    channels = tuple(as_operator(c) for c in channels)
    h = model.h_eff
    eig = tuple(tuple(eigenoperator_decomposition(h, c)) for c in channels)
    tol = 1e-9 * max(abs(model.omega0_prime()), 1.0)
    beta1, beta3 = {}, {}
    for i, ci in enumerate(eig):
        for j, cj in enumerate(eig):
            freqs = sorted({w for w, _ in ci} | {-w for w, _ in cj})
            beta1[(i, j)] = _FrequencyTable([(-w, gamma_fn(i, j, w)) for w in freqs], tol)
            beta3[(i, j)] = _FrequencyTable([(w, gamma_fn(i, j, w)) for w in freqs], tol)
    return CouplingSpec(model, channels, eig, beta1, beta3, model.gamma, model.delta, freq_tol=tol)


def spin_boson_coupling(model: SystemModel) -> CouplingSpec:
    """RWA coupling sigma_- (x) sum g b^+ + sigma_+ (x) sum g b at zero temperature.

    Only Tr[R^1(u) R^0 rho_R] = sum g^2 e^{-i w_k u} survives, whose full-line
    transform at the qubit frequency is the decay rate gamma.
    """
    w0 = model.omega0_prime()
    tol = 1e-9 * max(abs(w0), 1.0)

    def gamma_fn(i, j, w):
        if (i, j) == (1, 0) and abs(w - w0) <= tol:
            return model.gamma
        return 0.0

    return coupling_from_spectrum(model, (SM, SP), gamma_fn)


def _one_point(spec: CouplingSpec, o, t: float) -> np.ndarray:
    o = as_operator(o)
    if o.shape != spec.model.hs.shape:
        raise ValueError("operator dimension does not match the model")
    return evolve_one_point(spec.model, o, t)


def _irreducible_parts(spec: CouplingSpec, a, b, t_min: float) -> tuple:
    i1 = np.zeros_like(a)
    i2 = np.zeros_like(a)
    i3 = np.zeros_like(a)
    i4 = np.zeros_like(a)
    for s_w, s_mw, b1, b3 in spec.pair_terms():
        if b1 != 0:
            i1 = i1 - t_min * b1 * (s_w @ a @ s_mw @ b)
            i2 = i2 + t_min * b1 * (s_w @ a @ b @ s_mw)
        if b3 != 0:
            i3 = i3 + t_min * b3 * (a @ s_w @ s_mw @ b)
            i4 = i4 - t_min * b3 * (a @ s_w @ b @ s_mw)
    return i1, i2, i3, i4


def irreducible_parts(spec: CouplingSpec, o1, o2, t1: float, t2: float) -> tuple:
    """The four irreducible contributions (I1, I2, I3, I4) for O1(t1) O2(t2)."""
    if t1 < 0 or t2 < 0:
        raise ValueError("times must be non-negative")
    a = _one_point(spec, o1, t1)
    b = _one_point(spec, o2, t2)
    return _irreducible_parts(spec, a, b, min(t1, t2))


def irreducible_two_point(spec: CouplingSpec, o1, o2, t1: float, t2: float) -> np.ndarray:
    """Irreducible part I[O1_S(t1), O2_S(t2)].

    Any time order is accepted; the secular weight always carries the smaller
    of the two times.
    """
    return sum(irreducible_parts(spec, o1, o2, t1, t2))


def _pair_w_term(spec, evolved: list, j: int, k: int, weight: float) -> np.ndarray:
    """W-ordered pair term for slots j < k with scalar prefactor ``weight``."""
    d = evolved[0].shape[0]
    head = np.eye(d, dtype=complex)
    for m in range(j):
        head = head @ evolved[m]
    middle = np.eye(d, dtype=complex)
    for m in range(j + 1, k):
        middle = middle @ evolved[m]
    tail = np.eye(d, dtype=complex)
    for m in range(k + 1, len(evolved)):
        tail = tail @ evolved[m]
    oj, ok = evolved[j], evolved[k]
    acc = np.zeros((d, d), dtype=complex)
    for s_w, s_mw, b1, b3 in spec.pair_terms():
        if b1 != 0:
            acc = acc + b1 * (-(s_w @ oj @ middle @ s_mw @ ok) + s_w @ oj @ middle @ ok @ s_mw)
        if b3 != 0:
            acc = acc + b3 * ((oj @ s_w @ middle @ s_mw @ ok) - oj @ s_w @ middle @ ok @ s_mw)
    return weight * (head @ acc @ tail)


def _check_lists(ops, times):
    if len(ops) == 0:
        raise ValueError("at least one operator is required")
    if len(ops) != len(times):
        raise ValueError(f"{len(ops)} operators but {len(times)} times")
    for t in times:
        if not np.isfinite(t) or t < 0:
            raise ValueError("times must be finite and non-negative")


def w_term(spec: CouplingSpec, ops: Sequence, times: Sequence, j: int, k: int) -> np.ndarray:
    """W{I[O_j, O_k] (other slots)} for 0-based slots j != k."""
    _check_lists(ops, times)
    j, k = sorted((j, k))
    evolved = [_one_point(spec, o, t) for o, t in zip(ops, times)]
    return _pair_w_term(spec, evolved, j, k, min(times[j], times[k]))


def reduced_n_point(spec: CouplingSpec, ops: Sequence, times: Sequence) -> ReducedOperator:
    _check_lists(ops, times)
    evolved = [_one_point(spec, o, t) for o, t in zip(ops, times)]
    value = evolved[0].copy()
    for e in evolved[1:]:
        value = value @ e
    for j, k in combinations(range(len(evolved)), 2):
        value = value + _pair_w_term(spec, evolved, j, k, min(times[j], times[k]))
    return ReducedOperator(value, tuple(float(t) for t in times))


def reduced_two_point(spec, o1, o2, t1, t2) -> ReducedOperator:
    return reduced_n_point(spec, [o1, o2], [t1, t2])


def reduced_three_point(spec, o1, o2, o3, t1, t2, t3) -> ReducedOperator:
    return reduced_n_point(spec, [o1, o2, o3], [t1, t2, t3])


def reduced_four_point(spec, o1, o2, o3, o4, t1, t2, t3, t4) -> ReducedOperator:
    return reduced_n_point(spec, [o1, o2, o3, o4], [t1, t2, t3, t4])


def otoc_reduced(spec: CouplingSpec, o1, a_mu, o3, a_nu, t1: float, t2: float) -> ReducedOperator:
    """(O1(t1) A_mu(t2) O3(t1) A_nu(t2))_S including both equal-time pairs."""
    if not t2 > t1:
        raise ValueError("OTOC requires t2 > t1")
    return reduced_n_point(spec, [o1, a_mu, o3, a_nu], [t1, t2, t1, t2])


def f_term(spec: CouplingSpec, o1, a_mu, o3, a_nu, t1: float, t2: float) -> np.ndarray:
    """Extra term in the OTOC regression identity.

    It is the t2-derivative of the secular weight of the equal-time pair
    (A_mu(t2), A_nu(t2)), i.e. the W-ordered pair template with unit weight.
    """
    if not t2 > t1:
        raise ValueError("OTOC requires t2 > t1")
    ops = [o1, a_mu, o3, a_nu]
    times = [t1, t2, t1, t2]
    evolved = [_one_point(spec, o, t) for o, t in zip(ops, times)]
    return _pair_w_term(spec, evolved, 1, 3, 1.0)


def correlator(reduced, rho_s) -> complex:
    value = reduced.value if isinstance(reduced, ReducedOperator) else as_operator(reduced)
    rho = validate_density_matrix(rho_s)
    if rho.shape != value.shape:
        raise ValueError("density matrix dimension mismatch")
    return complex(np.trace(value @ rho))


def first_order_in_gamma(fn: Callable[[float], np.ndarray], gamma: float, h0: float = 1e-3, levels: int = 4):
    """f(0) + gamma * f'(0) for a smooth matrix-valued ``fn``.

    f'(0) comes from forward quotients (f(h) - f(0)) / h at h0, h0/2, ...
    combined by Richardson extrapolation, which cancels the O(h), ..., O(h^{levels-1})
    errors.
    """
    f0 = np.asarray(fn(0.0), dtype=complex)
    table = [[(np.asarray(fn(h0 / 2**n), dtype=complex) - f0) / (h0 / 2**n)] for n in range(levels)]
    for col in range(1, levels):
        fac = 2.0**col
        for n in range(col, levels):
            table[n].append((fac * table[n][col - 1] - table[n - 1][col - 1]) / (fac - 1.0))
    return f0 + gamma * table[-1][-1]


__all__ = [
    "ReducedOperator", "CouplingSpec", "eigenoperator_decomposition", "coupling_from_spectrum",
    "spin_boson_coupling", "irreducible_parts", "irreducible_two_point", "w_term",
    "reduced_two_point", "reduced_three_point", "reduced_four_point", "reduced_n_point",
    "otoc_reduced", "f_term", "correlator", "first_order_in_gamma",
]
