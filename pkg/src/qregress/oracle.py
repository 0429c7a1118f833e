"""Exact reference: qubit plus a few truncated bosonic modes, evolved unitarily.

H = (w0/2) sz (x) I + sum_k w_k b_k^+ b_k + sum_k (g_k b_k^+ s- + g_k^* b_k s+)

The bath starts in the vacuum.  Multi-time correlators are evaluated by
applying Heisenberg operators U^+(t) O U(t) to state vectors, right to left,
so no time ordering is assumed (OTOC orderings work the same way).
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from .markov import SystemModel
from .operators import SM, SP, SZ, as_operator, dag, validate_density_matrix

MAX_DIM = 4096


@dataclass(frozen=True, eq=False)
class TruncatedBath:
    omegas: tuple
    couplings: tuple
    fock_cutoff: int = 2

    def __post_init__(self):
        w = tuple(float(x) for x in self.omegas)
        g = tuple(complex(x) for x in self.couplings)
        if len(w) != len(g):
            raise ValueError("omegas and couplings differ in length")
        if int(self.fock_cutoff) < 1:
            raise ValueError("fock_cutoff must be at least 1")
        object.__setattr__(self, "omegas", w)
        object.__setattr__(self, "couplings", g)
        object.__setattr__(self, "fock_cutoff", int(self.fock_cutoff))
        if self.dim > MAX_DIM:
            raise ValueError(f"Hilbert dimension {self.dim} exceeds the limit {MAX_DIM}")

    @classmethod
    def from_modes(cls, modes: Sequence, fock_cutoff: int = 2) -> "TruncatedBath":
        modes = list(modes)
        w = [m[0] for m in modes]
        g = [m[1] for m in modes]
        return cls(tuple(w), tuple(g), fock_cutoff)

    @classmethod
    def from_correlation(cls, bath, fock_cutoff: int = 2) -> "TruncatedBath":
        """Build from any object with ``omegas`` and ``couplings`` arrays."""
        return cls(tuple(np.asarray(bath.omegas)), tuple(np.asarray(bath.couplings)), fock_cutoff)

    @property
    def n_modes(self) -> int:
        return len(self.omegas)

    @property
    def bath_dim(self) -> int:
        return (self.fock_cutoff + 1) ** self.n_modes

    @property
    def dim(self) -> int:
        return 2 * self.bath_dim

    def with_cutoff(self, cutoff: int) -> "TruncatedBath":
        return TruncatedBath(self.omegas, self.couplings, cutoff)

    def lowering(self, k: int) -> np.ndarray:
        """b_k on the full (system (x) modes) space."""
        n = self.fock_cutoff + 1
        a = np.diag(np.sqrt(np.arange(1, n, dtype=float)), 1).astype(complex)
        left = 2 * n**k
        right = n ** (self.n_modes - k - 1)
        return np.kron(np.kron(np.eye(left), a), np.eye(right))

    def embed(self, o) -> np.ndarray:
        """System operator O (x) I_bath."""
        return np.kron(as_operator(o), np.eye(self.bath_dim))


def build_hamiltonian(model: SystemModel, bath: TruncatedBath) -> np.ndarray:
    if bath.dim > MAX_DIM:
        raise ValueError(f"Hilbert dimension {bath.dim} exceeds the limit {MAX_DIM}")
    h = bath.embed(0.5 * model.omega0 * SZ)
    sm = bath.embed(SM)
    sp = bath.embed(SP)
    for k, (w, g) in enumerate(zip(bath.omegas, bath.couplings)):
        b = bath.lowering(k)
        bd = dag(b)
        h = h + w * (bd @ b) + g * (bd @ sm) + np.conj(g) * (b @ sp)
    return h


def excitation_number(bath: TruncatedBath) -> np.ndarray:
    n = bath.embed(SP @ SM)
    for k in range(bath.n_modes):
        b = bath.lowering(k)
        n = n + dag(b) @ b
    return n


class ExactSystem:
    """Eigen-decomposed total Hamiltonian for repeated propagation."""

    def __init__(self, model: SystemModel, bath: TruncatedBath):
        self.model = model
        self.bath = bath
        self.h = build_hamiltonian(model, bath)
        self.evals, self.vecs = np.linalg.eigh(self.h)
        self.vecs_dag = dag(self.vecs)

    def propagate(self, v: np.ndarray, t: float) -> np.ndarray:
        """U(t) v with U(t) = exp(-i H t)."""
        phase = np.exp(-1j * self.evals * t).reshape((-1,) + (1,) * (v.ndim - 1))
        return self.vecs @ (phase * (self.vecs_dag @ v))

    def unitary(self, t: float) -> np.ndarray:
        return (self.vecs * np.exp(-1j * self.evals * t)) @ self.vecs_dag

    def heisenberg_apply(self, o_full: np.ndarray, t: float, v: np.ndarray) -> np.ndarray:
        """U^+(t) O U(t) v."""
        return self.propagate(o_full @ self.propagate(v, t), -t)

    def vacuum_states(self) -> np.ndarray:
        """Columns |s, vac> for s = e, g."""
        out = np.zeros((self.bath.dim, 2), dtype=complex)
        out[0, 0] = 1.0
        out[self.bath.bath_dim, 1] = 1.0
        return out

    def reduced_operator(self, ops: Sequence, times: Sequence) -> np.ndarray:
        """<a, vac| O1(t1) ... ON(tN) |b, vac> as a 2x2 matrix."""
        if len(ops) != len(times) or not ops:
            raise ValueError("ops and times must be non-empty and of equal length")
        if any(t < 0 for t in times):
            raise ValueError("times must be non-negative")
        v = self.vacuum_states()
        for o, t in zip(reversed(list(ops)), reversed(list(times))):
            v = self.heisenberg_apply(self.bath.embed(o), t, v)
        return dag(self.vacuum_states()) @ v


def exact_reduced_operator(model: SystemModel, bath: TruncatedBath, ops: Sequence, times: Sequence) -> np.ndarray:
    return ExactSystem(model, bath).reduced_operator(ops, times)


def exact_correlator(model: SystemModel, bath: TruncatedBath, ops: Sequence, times: Sequence, rho_s) -> complex:
    rho = validate_density_matrix(rho_s)
    red = exact_reduced_operator(model, bath, ops, times)
    return complex(np.trace(red @ rho))


@dataclass(frozen=True)
class CutoffReport:
    value: complex
    value_lower: complex
    deviation: float
    cutoff: int


def cutoff_convergence_check(model: SystemModel, bath: TruncatedBath, ops: Sequence, times: Sequence,
                             rho_s) -> CutoffReport:
    """Compare the correlator at the bath's cutoff with cutoff - 1."""
    if bath.fock_cutoff < 2:
        raise ValueError("cutoff convergence check needs fock_cutoff >= 2")
    hi = exact_correlator(model, bath, ops, times, rho_s)
    lo = exact_correlator(model, bath.with_cutoff(bath.fock_cutoff - 1), ops, times, rho_s)
    return CutoffReport(hi, lo, abs(hi - lo), bath.fock_cutoff)


__all__ = [
    "MAX_DIM", "TruncatedBath", "build_hamiltonian", "excitation_number", "ExactSystem",
    "exact_reduced_operator", "exact_correlator", "CutoffReport", "cutoff_convergence_check",
]
