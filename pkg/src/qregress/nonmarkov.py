"""Second-order non-Markovian Heisenberg dynamics for a bosonic bath at T = 0.

Coupling ``sum_k g_k (L b_k^+ + L^+ b_k)``; bath correlation
``alpha(tau) = sum_k |g_k|^2 exp(-i w_k tau)``.  Operators are evolved with

    dO/dt = i[H_S, O] + [L^+, O] K(t) + K(t)^+ [O, L],   K(t) = int_0^t alpha(tau) L(-tau) dtau

where ``L(s) = exp(i H_S s) L exp(-i H_S s)`` is the free Heisenberg-picture
coupling operator.  With this convention the Markov limit gives the decay rate
``2 Re K`` and the frequency shift ``Im K``, i.e. w0' = w0 + sum g^2 / (w0 - w_k).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from .markov import SystemModel
from .operators import as_operator, dag, max_abs_diff
from .qrt import QrtReport
from .quadrature import QuadratureError, gl_nodes, integrate, integrate_2d


@dataclass(frozen=True, eq=False)
class BathCorrelation:
    """Discrete bosonic modes (w_k, g_k)."""

    omegas: np.ndarray
    couplings: np.ndarray

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.omegas, dtype=float))
        g = np.atleast_1d(np.asarray(self.couplings, dtype=complex))
        if w.ndim != 1 or w.shape != g.shape:
            raise ValueError("omegas and couplings must be 1-D arrays of equal length")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(g))):
            raise ValueError("bath parameters must be finite")
        object.__setattr__(self, "omegas", w)
        object.__setattr__(self, "couplings", g)

    @classmethod
    def from_modes(cls, modes: Sequence) -> "BathCorrelation":
        modes = list(modes)
        if not modes:
            return cls(np.zeros(0), np.zeros(0))
        w, g = zip(*modes)
        return cls(np.array(w, dtype=float), np.array(g, dtype=complex))

    @property
    def modes(self) -> list:
        return list(zip(self.omegas.tolist(), self.couplings.tolist()))

    @property
    def weights(self) -> np.ndarray:
        return np.abs(self.couplings) ** 2

    def alpha(self, tau):
        """sum_k |g_k|^2 exp(-i w_k tau); scalar or array ``tau``."""
        tau = np.asarray(tau, dtype=float)
        out = np.exp(-1j * np.multiply.outer(tau, self.omegas)) @ self.weights
        return complex(out) if out.ndim == 0 else out

    def alpha_matrix(self, tau1: np.ndarray, tau2: np.ndarray) -> np.ndarray:
        """alpha(tau2[j] - tau1[i]) evaluated through the mode sum (no N1 x N2 x K tensor)."""
        e1 = np.exp(1j * np.multiply.outer(tau1, self.omegas)) * self.weights
        e2 = np.exp(-1j * np.multiply.outer(self.omegas, tau2))
        return e1 @ e2

    def lamb_shift(self, omega0: float) -> float:
        """Discrete principal value sum_{w_k != w0} |g_k|^2 / (w0 - w_k)."""
        det = omega0 - self.omegas
        keep = np.abs(det) > 1e-12 * max(abs(omega0), 1.0)
        return float(np.sum(self.weights[keep] / det[keep]))

    def tau_b(self, t_max: float | None = None, points: int = 20001) -> float:
        """Smallest tau with |alpha(tau)| <= 0.01 alpha(0); inf if none on the grid."""
        a0 = float(np.sum(self.weights))
        if a0 == 0:
            return 0.0
        if t_max is None:
            spread = float(np.ptp(self.omegas)) if len(self.omegas) > 1 else 0.0
            t_max = 200.0 / spread if spread > 0 else 1e3
        tau = np.linspace(0.0, t_max, points)
        small = np.nonzero(np.abs(self.alpha(tau)) <= 0.01 * a0)[0]
        return float(tau[small[0]]) if small.size else float("inf")

    def freq_scale(self, model: SystemModel | None = None) -> float:
        s = float(np.max(np.abs(self.omegas), initial=0.0))
        if model is not None:
            s = max(s, abs(model.omega0))
        return max(s, 1.0)


def single_mode(omega: float, g: float) -> BathCorrelation:
    return BathCorrelation(np.array([omega]), np.array([g]))


def flat_bath(center: float, bandwidth: float, n_modes: int, gamma: float) -> BathCorrelation:
    """Equally spaced modes filling [center - W/2, center + W/2] with a flat density.

    Mode spacing dw = W / n, coupling g = sqrt(gamma dw / 2 pi) so that
    2 pi (density) g^2 = gamma.
    """
    if n_modes < 1 or bandwidth <= 0 or gamma < 0:
        raise ValueError("need n_modes >= 1, bandwidth > 0, gamma >= 0")
    dw = bandwidth / n_modes
    omegas = center + (np.arange(n_modes) - (n_modes - 1) / 2.0) * dw
    g = np.sqrt(gamma * dw / (2 * np.pi))
    return BathCorrelation(omegas, np.full(n_modes, g))


class NonMarkovDynamics:
    """Precomputed pieces for one (model, bath) pair."""

    def __init__(self, model: SystemModel, bath: BathCorrelation, tol: float = 1e-12):
        if model.coupling is None:
            raise ValueError("model has no coupling operator L")
        self.model = model
        self.bath = bath
        self.tol = tol
        self.h = model.hs
        self.L = model.coupling
        self.Ld = dag(self.L)
        evals, vecs = np.linalg.eigh(self.h)
        self._vecs = vecs
        self._bohr = evals[:, None] - evals[None, :]
        self._l_eig = dag(vecs) @ self.L @ vecs
        self.freq_scale = max(bath.freq_scale(model), float(np.max(np.abs(self._bohr))))

    # free coupling operator
    def l_heis(self, s) -> np.ndarray:
        """L(s) = exp(i H_S s) L exp(-i H_S s); shape (..., d, d) for array ``s``."""
        s = np.asarray(s, dtype=float)
        phase = np.exp(1j * np.multiply.outer(s, self._bohr))
        return self._vecs @ (phase * self._l_eig) @ dag(self._vecs)

    def l_heis_dag(self, s) -> np.ndarray:
        return np.conj(np.swapaxes(self.l_heis(s), -1, -2))

    def kernel(self, t: float) -> np.ndarray:
        """K(t) = int_0^t alpha(tau) L(-tau) dtau."""
        if t == 0:
            return np.zeros_like(self.L)
        res = integrate(lambda x: self.bath.alpha(x)[:, None, None] * self.l_heis(-x),
                        0.0, t, tol=self.tol, freq_scale=self.freq_scale)
        return res.value

    def _kernel_increment(self, a: float, b: float, order: int = 12) -> np.ndarray:
        x, w = gl_nodes(a, b, 1, order)
        vals = self.bath.alpha(x)[:, None, None] * self.l_heis(-x)
        return np.tensordot(w, vals, axes=(0, 0))

    def generator(self, o: np.ndarray, t: float, k: np.ndarray | None = None) -> np.ndarray:
        if k is None:
            k = self.kernel(t)
        return 1j * (self.h @ o - o @ self.h) + (self.Ld @ o - o @ self.Ld) @ k + dag(k) @ (o @ self.L - self.L @ o)

    def rk4_step(self, o: np.ndarray, t: float, h: float, k0=None) -> np.ndarray:
        """One RK4 step from (t, o) to t + h; ``h`` may be negative."""
        k0 = self.kernel(t) if k0 is None else k0
        kh = self.kernel(t + h / 2)
        k1 = self.kernel(t + h)
        return self._rk4(o, h, k0, kh, k1)

    def _rk4(self, o, h, k0, kh, k1):
        f = self.generator
        a = f(o, 0.0, k0)
        b = f(o + 0.5 * h * a, 0.0, kh)
        c = f(o + 0.5 * h * b, 0.0, kh)
        d = f(o + h * c, 0.0, k1)
        return o + h / 6.0 * (a + 2 * b + 2 * c + d)

    def evolve(self, ops: Sequence, t: float, dt: float) -> list:
        """Fixed-step RK4 evolution of several operators to time ``t``."""
        ops = [as_operator(o) for o in ops]
        if t < 0:
            raise ValueError("t must be non-negative")
        if t == 0:
            return [o.copy() for o in ops]
        if not dt > 0:
            raise ValueError("dt must be positive")
        if dt > t / 10:
            raise ValueError("dt must not exceed t / 10")
        n = int(np.ceil(t / dt - 1e-9))
        step = t / n
        k_now = np.zeros_like(self.L)
        s = 0.0
        for _ in range(n):
            k_half = k_now + self._kernel_increment(s, s + step / 2)
            k_next = k_half + self._kernel_increment(s + step / 2, s + step)
            ops = [self._rk4(o, step, k_now, k_half, k_next) for o in ops]
            k_now = k_next
            s += step
        return ops

    # irreducible two-point part
    def pair_tensor(self, t1: float, t2: float, tol: float = 1e-12) -> np.ndarray:
        """T[ab, cd] = int_0^t1 ds1 int_0^t2 ds2 alpha(s1 - s2) L^+(s1)_ab L(s2)_cd."""
        d = self.L.shape[0]
        res = integrate_2d(
            lambda x1, x2: np.conj(self.bath.alpha_matrix(x1, x2)),
            lambda x: self.l_heis_dag(x).reshape(len(x), d * d),
            lambda x: self.l_heis(x).reshape(len(x), d * d),
            0.0, t1, 0.0, t2, tol=tol, freq_scale=self.freq_scale,
        )
        return res.value

    def irreducible(self, a: np.ndarray, b: np.ndarray, t1: float, t2: float) -> np.ndarray:
        """-int int alpha(s1 - s2) [L^+(s1), A][L(s2), B] for evolved A = O1_S(t1), B = O2_S(t2).

        The four expanded products are the I1..I4 contributions.
        """
        d = a.shape[0]
        tens = self.pair_tensor(t1, t2).reshape(d, d, d, d)
        out = np.zeros((d, d), dtype=complex)
        for p in range(d):
            for q in range(d):
                x = np.zeros((d, d), dtype=complex)
                x[p, q] = 1.0
                for r in range(d):
                    for s in range(d):
                        c = tens[p, q, r, s]
                        if c == 0:
                            continue
                        y = np.zeros((d, d), dtype=complex)
                        y[r, s] = 1.0
                        out += c * (-(x @ a @ y @ b) + x @ a @ b @ y + a @ x @ y @ b - a @ x @ b @ y)
        return out

    def boundary_integral(self, t1: float, t2: float) -> np.ndarray:
        """J = int_0^t2 alpha(t1 - s) L(s) ds."""
        if t2 == 0:
            return np.zeros_like(self.L)
        res = integrate(lambda x: self.bath.alpha(t1 - x)[:, None, None] * self.l_heis(x),
                        0.0, t2, tol=self.tol, freq_scale=self.freq_scale)
        return res.value

    def corrections(self, a: np.ndarray, o: np.ndarray, t1: float, t2: float) -> np.ndarray:
        """Boundary terms of d/dt1 of the irreducible part: -[L^+(t1), A][J, O]."""
        j = self.boundary_integral(t1, t2)
        ld1 = self.l_heis_dag(t1)
        return -(a @ ld1 @ o @ j) - ld1 @ a @ j @ o + ld1 @ a @ o @ j + a @ ld1 @ j @ o


def alpha(bath: BathCorrelation, tau) -> complex:
    return bath.alpha(tau)


def nonmarkov_generator(model: SystemModel, bath: BathCorrelation, o_s, t: float) -> np.ndarray:
    if t < 0:
        raise ValueError("t must be non-negative")
    o = as_operator(o_s)
    if o.shape != model.hs.shape:
        raise ValueError("dimension mismatch")
    return NonMarkovDynamics(model, bath).generator(o, t)


def evolve_one_point_nm(model: SystemModel, bath: BathCorrelation, o, t: float, dt: float) -> np.ndarray:
    return NonMarkovDynamics(model, bath).evolve([o], t, dt)[0]


def nonmarkov_irreducible_two_point(bath: BathCorrelation, model: SystemModel, o1, o2,
                                    t1: float, t2: float, dt: float = 5e-3) -> np.ndarray:
    """Irreducible part of (O1(t1) O2(t2))_S for t1 >= t2, built on evolved one-point operators."""
    if not t1 >= t2 >= 0:
        raise ValueError("requires t1 >= t2 >= 0")
    dyn = NonMarkovDynamics(model, bath)
    a = _evolve_or_copy(dyn, o1, t1, dt)
    b = _evolve_or_copy(dyn, o2, t2, dt)
    return dyn.irreducible(a, b, t1, t2)


def _evolve_or_copy(dyn, o, t, dt):
    if t == 0:
        return as_operator(o).copy()
    return dyn.evolve([o], t, min(dt, t / 10))[0]


def reduced_two_point_nm(model: SystemModel, bath: BathCorrelation, o1, o2, t1: float, t2: float,
                         dt: float = 5e-3) -> np.ndarray:
    """O1_S(t1) O2_S(t2) + I[O1_S(t1), O2_S(t2)] with t1 >= t2."""
    if not t1 >= t2 >= 0:
        raise ValueError("requires t1 >= t2 >= 0")
    dyn = NonMarkovDynamics(model, bath)
    a = _evolve_or_copy(dyn, o1, t1, dt)
    b = _evolve_or_copy(dyn, o2, t2, dt)
    return a @ b + dyn.irreducible(a, b, t1, t2)


def fit_m(generated: Sequence, basis: Sequence) -> tuple:
    """Least-squares M with generated[mu] ~ sum_lambda M[mu, lambda] basis[lambda].

    Returns (M, residual) where residual is the largest entrywise mismatch.
    """
    b = np.array([np.asarray(x).reshape(-1) for x in basis]).T
    m_rows = []
    worst = 0.0
    for g in generated:
        g = np.asarray(g).reshape(-1)
        coef, *_ = np.linalg.lstsq(b, g, rcond=None)
        m_rows.append(coef)
        worst = max(worst, float(np.max(np.abs(b @ coef - g))))
    return np.array(m_rows), worst


@dataclass(eq=False)
class TimeDependentClosedSet:
    """A_mu with dA_mu,S/dt = sum_lambda M(t)[mu, lambda] A_lambda,S(t).

    ``m_of_t`` may be supplied; when it is None, M(t) is fitted by least
    squares from the generator at the evolved operators (see ``fit_m``).
    """

    ops: tuple
    m_of_t: Callable[[float], np.ndarray] | None = None
    names: tuple = ()
    fit_residuals: dict = field(default_factory=dict)

    def index(self, mu) -> int:
        if isinstance(mu, str):
            if mu not in self.names:
                raise IndexError(f"{mu!r} is not in the set {self.names}")
            return self.names.index(mu)
        if not 0 <= mu < len(self.ops):
            raise IndexError("mu out of range")
        return int(mu)


def fit_closed_set(model: SystemModel, bath: BathCorrelation, ops: Sequence, dt: float = 5e-3,
                   names: tuple = ()) -> TimeDependentClosedSet:
    dyn = NonMarkovDynamics(model, bath)
    ops = tuple(as_operator(o) for o in ops)
    cset = TimeDependentClosedSet(ops, None, names)

    def m_of_t(t: float) -> np.ndarray:
        evolved = dyn.evolve(ops, t, min(dt, t / 10)) if t > 0 else [o.copy() for o in ops]
        k = dyn.kernel(t)
        m, res = fit_m([dyn.generator(a, t, k) for a in evolved], evolved)
        cset.fit_residuals[float(t)] = res
        return m

    cset.m_of_t = m_of_t
    return cset


def verify_time_dependent_set(model: SystemModel, bath: BathCorrelation, cset: TimeDependentClosedSet,
                              t: float, dt: float = 5e-3) -> float:
    dyn = NonMarkovDynamics(model, bath)
    evolved = dyn.evolve(cset.ops, t, min(dt, t / 10)) if t > 0 else list(cset.ops)
    m = cset.m_of_t(t)
    k = dyn.kernel(t)
    worst = 0.0
    for mu, a in enumerate(evolved):
        rhs = sum(m[mu, lam] * b for lam, b in enumerate(evolved))
        worst = max(worst, max_abs_diff(dyn.generator(a, t, k), rhs))
    return worst


@dataclass(frozen=True)
class NonMarkovQrtParts:
    main: np.ndarray
    corrections: np.ndarray
    m: np.ndarray
    fit_residual: float


def _qrt_parts(dyn: NonMarkovDynamics, cset: TimeDependentClosedSet, o, mu: int, t1: float, t2: float,
               dt: float):
    evolved = dyn.evolve(cset.ops, t1, min(dt, t1 / 10))
    o_s = _evolve_or_copy(dyn, o, t2, dt)
    k = dyn.kernel(t1)
    generated = [dyn.generator(a, t1, k) for a in evolved]
    if cset.m_of_t is None:
        m, fit_res = fit_m(generated, evolved)
    else:
        m = np.asarray(cset.m_of_t(t1), dtype=complex)
        if m.shape != (len(evolved), len(evolved)):
            raise ValueError("M(t) has the wrong shape for this set")
        fit_res = max(max_abs_diff(g, sum(m[mu_, lam] * b for lam, b in enumerate(evolved)))
                      for mu_, g in enumerate(generated))
    reduced = [a @ o_s + dyn.irreducible(a, o_s, t1, t2) for a in evolved]
    main = sum(m[mu, lam] * r for lam, r in enumerate(reduced))
    corr = dyn.corrections(evolved[mu], o_s, t1, t2)
    return evolved, o_s, k, NonMarkovQrtParts(main, corr, m, fit_res)


def nonmarkov_qrt_rhs(bath: BathCorrelation, model: SystemModel, cset: TimeDependentClosedSet, o, mu,
                      t1: float, t2: float, dt: float = 5e-3, include_corrections: bool = True) -> np.ndarray:
    if not t1 > t2 >= 0:
        raise ValueError("requires t1 > t2 >= 0")
    dyn = NonMarkovDynamics(model, bath)
    *_, parts = _qrt_parts(dyn, cset, o, cset.index(mu), t1, t2, dt)
    return parts.main + parts.corrections if include_corrections else parts.main


def nonmarkov_qrt_report(bath: BathCorrelation, model: SystemModel, cset: TimeDependentClosedSet, o, mu,
                         t1: float, t2: float, h: float = 1e-4, dt: float = 5e-3,
                         include_corrections: bool = True) -> QrtReport:
    """Central difference in t1 of (A_mu(t1) O(t2))_S against the regression right-hand side."""
    if not t1 > t2 >= 0:
        raise ValueError("requires t1 > t2 >= 0")
    if not 0 < h <= (t1 - t2) / 10:
        raise ValueError("step must satisfy 0 < h <= (t1 - t2) / 10")
    m_idx = cset.index(mu)
    dyn = NonMarkovDynamics(model, bath)
    evolved, o_s, k, parts = _qrt_parts(dyn, cset, o, m_idx, t1, t2, dt)
    a = evolved[m_idx]

    def reduced_at(s, a_s):
        return a_s @ o_s + dyn.irreducible(a_s, o_s, s, t2)

    a_plus = dyn.rk4_step(a, t1, h, k)
    a_minus = dyn.rk4_step(a, t1, -h, k)
    lhs = (reduced_at(t1 + h, a_plus) - reduced_at(t1 - h, a_minus)) / (2 * h)
    rhs = parts.main + parts.corrections if include_corrections else parts.main
    return QrtReport.build(
        lhs, rhs, h, [t1, t2], 0, "nonmarkov-2pt",
        include_corrections=include_corrections,
        main_norm=float(np.max(np.abs(parts.main))),
        correction_norm=float(np.max(np.abs(parts.corrections))),
        fit_residual=parts.fit_residual,
    )


__all__ = [
    "BathCorrelation", "single_mode", "flat_bath", "NonMarkovDynamics", "alpha",
    "nonmarkov_generator", "evolve_one_point_nm", "nonmarkov_irreducible_two_point",
    "reduced_two_point_nm", "fit_m", "TimeDependentClosedSet", "fit_closed_set",
    "verify_time_dependent_set", "nonmarkov_qrt_rhs", "nonmarkov_qrt_report", "QuadratureError",
]
