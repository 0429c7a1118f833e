"""Markovian adjoint (Heisenberg-picture) master equation.

The generator acts on system operators:

    dO/dt = i[H_S + H_shift, O] + sum_k r_k (L_k^+ O L_k - {L_k^+ L_k, O}/2)

For the dissipative spin-boson model at zero temperature the single channel is
``L = sigma_minus`` with rate ``gamma``, which gives

    dO/dt = i w0'/2 [sz, O] + gamma/2 (2 s+ O s- - s+ s- O - O s+ s-)
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .operators import (
    I2, SM, SP, SX, SY, SZ, as_operator, commutator, dag, expm, identity,
    is_hermitian, max_abs_diff,
)


@dataclass(frozen=True, eq=False)
class SystemModel:
    """System Hamiltonian plus Markovian dissipator channels.

    ``hs`` is the bare system Hamiltonian.  ``lamb_shift`` is an optional
    Hermitian correction added to ``hs`` inside the Markovian generator only;
    the non-Markovian generator works with the bare ``hs`` and produces the
    shift itself.  ``coupling`` is the system operator ``L`` entering the
    bath interaction ``sum_k g_k (L b_k^+ + L^+ b_k)``.
    """

    omega0: float
    delta: float
    gamma: float
    hs: np.ndarray
    lindblad_ops: tuple = ()
    lamb_shift: np.ndarray | None = None
    coupling: np.ndarray | None = None

    def __post_init__(self):
        hs = as_operator(self.hs, "hs")
        if not is_hermitian(hs, 1e-12):
            raise ValueError("system Hamiltonian must be Hermitian")
        if self.gamma < 0:
            raise ValueError("gamma must be non-negative")
        ops = []
        for L, rate in self.lindblad_ops:
            L = as_operator(L, "Lindblad operator")
            if L.shape != hs.shape:
                raise ValueError("Lindblad operator dimension mismatch")
            if rate < 0:
                raise ValueError("dissipator rates must be non-negative")
            ops.append((L, float(rate)))
        object.__setattr__(self, "hs", hs)
        object.__setattr__(self, "lindblad_ops", tuple(ops))
        if self.lamb_shift is not None:
            object.__setattr__(self, "lamb_shift", as_operator(self.lamb_shift))
        if self.coupling is not None:
            object.__setattr__(self, "coupling", as_operator(self.coupling))

    @property
    def dim(self) -> int:
        return self.hs.shape[0]

    def omega0_prime(self) -> float:
        return self.omega0 + self.delta

    @property
    def h_eff(self) -> np.ndarray:
        if self.lamb_shift is None:
            return self.hs
        return self.hs + self.lamb_shift

    @cached_property
    def superoperator(self) -> np.ndarray:
        """Matrix of the adjoint generator acting on row-major vec(O)."""
        d = self.dim
        eye = np.eye(d)
        h = self.h_eff
        # vec(A X B) = (A kron B^T) vec(X) for row-major vec
        g = 1j * (np.kron(h, eye) - np.kron(eye, h.T))
        for L, rate in self.lindblad_ops:
            Ld = dag(L)
            LdL = Ld @ L
            g = g + rate * (np.kron(Ld, L.T) - 0.5 * np.kron(LdL, eye) - 0.5 * np.kron(eye, LdL.T))
        return g

    def with_params(self, **changes) -> "SystemModel":
        """Spin-boson convenience: rebuild with new omega0/delta/gamma."""
        params = dict(omega0=self.omega0, delta=self.delta, gamma=self.gamma)
        params.update(changes)
        return spin_boson(**params)


def spin_boson(omega0: float = 1.0, gamma: float = 0.01, delta: float = 0.0) -> SystemModel:
    """Zero-temperature dissipative qubit, H_S = (omega0/2) sigma_z."""
    return SystemModel(
        omega0=float(omega0),
        delta=float(delta),
        gamma=float(gamma),
        hs=0.5 * omega0 * SZ,
        lindblad_ops=((SM, gamma),),
        lamb_shift=0.5 * delta * SZ,
        coupling=SM,
    )


@dataclass(frozen=True, eq=False)
class ClosedSet:
    """Operators A_mu with dA_mu/dt = sum_lambda M[mu, lambda] A_lambda."""

    ops: tuple
    m: np.ndarray
    names: tuple = field(default=())

    def __post_init__(self):
        ops = tuple(as_operator(o) for o in self.ops)
        m = np.asarray(self.m, dtype=complex)
        if m.ndim != 2 or m.shape != (len(ops), len(ops)):
            raise ValueError(f"M has shape {m.shape} but the set has {len(ops)} operators")
        object.__setattr__(self, "ops", ops)
        object.__setattr__(self, "m", m)

    def __len__(self) -> int:
        return len(self.ops)

    def index(self, mu) -> int:
        if isinstance(mu, str):
            if mu not in self.names:
                raise IndexError(f"{mu!r} is not in closed set {self.names}")
            return self.names.index(mu)
        if not 0 <= mu < len(self.ops):
            raise IndexError(f"mu={mu} out of range for a set of {len(self.ops)}")
        return int(mu)


def closed_set_zi(model: SystemModel) -> ClosedSet:
    g = model.gamma
    return ClosedSet((SZ, I2), [[-g, -g], [0.0, 0.0]], names=("sz", "id"))


def closed_set_xy(model: SystemModel) -> ClosedSet:
    g, w = model.gamma, model.omega0_prime()
    return ClosedSet((SX, SY), [[-g / 2, -w], [w, -g / 2]], names=("sx", "sy"))


def adjoint_generator(model: SystemModel, o) -> np.ndarray:
    o = as_operator(o)
    if o.shape != model.hs.shape:
        raise ValueError(f"dimension mismatch: operator {o.shape} vs model {model.hs.shape}")
    out = 1j * commutator(model.h_eff, o)
    for L, rate in model.lindblad_ops:
        Ld = dag(L)
        LdL = Ld @ L
        out = out + rate * (Ld @ o @ L - 0.5 * (LdL @ o + o @ LdL))
    return out


def evolve_one_point(model: SystemModel, o, t: float) -> np.ndarray:
    """Heisenberg-picture reduced operator O_S(t) by exponentiating the generator."""
    if t < 0:
        raise ValueError("t must be non-negative")
    o = as_operator(o)
    if o.shape != model.hs.shape:
        raise ValueError("dimension mismatch")
    if t == 0:
        return o.copy()
    d = model.dim
    prop = expm(model.superoperator, t)
    return (prop @ o.reshape(d * d)).reshape(d, d)


def evolve_rk4(model: SystemModel, o, t: float, h: float | None = None) -> np.ndarray:
    """Classical RK4 integration of the adjoint equation; used as a cross-check."""
    if t < 0:
        raise ValueError("t must be non-negative")
    o = as_operator(o).copy()
    if t == 0:
        return o
    if h is None:
        h = 1e-3 / max(abs(model.omega0_prime()), 1.0)
    n = max(1, int(np.ceil(t / h)))
    dt = t / n
    f = lambda x: adjoint_generator(model, x)
    for _ in range(n):
        k1 = f(o)
        k2 = f(o + 0.5 * dt * k1)
        k3 = f(o + 0.5 * dt * k2)
        k4 = f(o + dt * k3)
        o = o + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return o


def verify_closed_set(model: SystemModel, cset: ClosedSet) -> float:
    """Largest entrywise mismatch between L^+(A_mu) and sum_lambda M A_lambda."""
    for a in cset.ops:
        if a.shape != model.hs.shape:
            raise ValueError("closed-set operator dimension mismatch")
    worst = 0.0
    for mu, a in enumerate(cset.ops):
        rhs = sum(cset.m[mu, lam] * b for lam, b in enumerate(cset.ops))
        worst = max(worst, max_abs_diff(adjoint_generator(model, a), rhs))
    return worst


def evolve_closed_set(cset: ClosedSet, t: float) -> tuple:
    """A_mu,S(t) = sum_lambda exp(M t)[mu, lambda] A_lambda for a verified closed set."""
    prop = expm(cset.m, t)
    return tuple(sum(prop[mu, lam] * b for lam, b in enumerate(cset.ops)) for mu in range(len(cset)))


def unitary_heisenberg(model: SystemModel, o, t: float) -> np.ndarray:
    """exp(i H t) O exp(-i H t) with the effective Hamiltonian (gamma = 0 reference)."""
    u = expm(model.h_eff, -1j * t)
    return dag(u) @ as_operator(o) @ u


__all__ = [
    "SystemModel", "ClosedSet", "spin_boson", "closed_set_zi", "closed_set_xy",
    "adjoint_generator", "evolve_one_point", "evolve_rk4", "verify_closed_set",
    "evolve_closed_set", "unitary_heisenberg", "identity",
]
