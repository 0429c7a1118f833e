"""Finite-difference checks of the quantum regression identities.

Each check puts a member A_mu of a closed set in one operator slot,
differentiates the reduced operator with respect to that slot's time and
compares with sum_lambda M[mu, lambda] * (same reduced operator with A_lambda
in the slot).  The identity is exact when the slot time is the largest one, so
the matched-case residual is pure differencing error (O(h^2) for central
differences).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .correlators import CouplingSpec, f_term, otoc_reduced, reduced_n_point
from .markov import ClosedSet
from .operators import max_abs_diff

DEFAULT_STEP = 1e-4


@dataclass(frozen=True)
class QrtReport:
    lhs: np.ndarray
    rhs: np.ndarray
    residual: float
    step: float
    times: tuple
    diff_index: int
    kind: str = "n-point"
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError("step must be positive")

    @classmethod
    def build(cls, lhs, rhs, step, times, diff_index, kind, **extra) -> "QrtReport":
        return cls(lhs, rhs, max_abs_diff(lhs, rhs), float(step), tuple(float(t) for t in times),
                   int(diff_index), kind, dict(extra))

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "residual": self.residual,
            "step": self.step,
            "times": list(self.times),
            "diff_index": self.diff_index,
            "lhs_norm": float(np.linalg.norm(self.lhs, 2)),
            "rhs_norm": float(np.linalg.norm(self.rhs, 2)),
            **{k: v for k, v in self.extra.items() if isinstance(v, (int, float, str, bool))},
        }


def derivative(fn: Callable[[float], np.ndarray], t: float, h: float, method: str = "central") -> np.ndarray:
    """Numerical d/dt of a matrix-valued function of one time."""
    if not h > 0:
        raise ValueError("step must be positive")
    central = lambda s: (fn(t + s) - fn(t - s)) / (2 * s)
    if method == "central":
        return central(h)
    if method == "richardson":
        return (4 * central(h / 2) - central(h)) / 3
    raise ValueError(f"unknown derivative method {method!r}")


def _mu_index(cset: ClosedSet, mu) -> int:
    return cset.index(mu)


def _check_step(times: Sequence, slot: int, h: float):
    if not h > 0:
        raise ValueError("step must be positive")
    t = times[slot]
    if h > t:
        raise ValueError("step larger than the differentiated time")


def qrt_n_point(spec: CouplingSpec, cset: ClosedSet, ops: Sequence, mu, times: Sequence,
                diff_index: int, h: float = DEFAULT_STEP, method: str = "central",
                require_max_time: bool = True) -> QrtReport:
    """QRT check with A_mu placed in slot ``diff_index``; ``ops[diff_index]`` is ignored.

    With ``require_max_time=False`` the slot time need not be the largest,
    which is how regression violations are exhibited.
    """
    times = [float(t) for t in times]
    ops = list(ops)
    if len(ops) != len(times) or not ops:
        raise ValueError("ops and times must be non-empty and of equal length")
    if not 0 <= diff_index < len(ops):
        raise IndexError("diff_index out of range")
    m = _mu_index(cset, mu)
    if require_max_time:
        others = [t for n, t in enumerate(times) if n != diff_index]
        if others and not times[diff_index] > max(others):
            raise ValueError("differentiated time must be strictly larger than all other times")
    _check_step(times, diff_index, h)

    def with_slot(op, t):
        o = list(ops)
        o[diff_index] = op
        tt = list(times)
        tt[diff_index] = t
        return reduced_n_point(spec, o, tt).value

    a_mu = cset.ops[m]
    lhs = derivative(lambda t: with_slot(a_mu, t), times[diff_index], h, method)
    rhs = sum(cset.m[m, lam] * with_slot(a, times[diff_index]) for lam, a in enumerate(cset.ops))
    return QrtReport.build(lhs, rhs, h, times, diff_index, f"{len(ops)}-point", mu=m)


def qrt_two_point(spec: CouplingSpec, cset: ClosedSet, o, mu, t1: float, t2: float,
                  h: float = DEFAULT_STEP, swapped: bool = False, method: str = "central") -> QrtReport:
    """d/dt2 (O(t1) A_mu(t2))_S, or (A_mu(t2) O(t1))_S when ``swapped``."""
    if not t2 > t1:
        raise ValueError("two-point QRT requires t2 > t1")
    if h > (t2 - t1) / 10:
        raise ValueError("step must not exceed (t2 - t1) / 10")
    if swapped:
        return qrt_n_point(spec, cset, [None, o], mu, [t2, t1], 0, h, method)
    return qrt_n_point(spec, cset, [o, None], mu, [t1, t2], 1, h, method)


def qrt_three_point(spec: CouplingSpec, cset: ClosedSet, o1, o2, mu, t1: float, t2: float, t3: float,
                    h: float = DEFAULT_STEP, slot: int = 2, method: str = "central") -> QrtReport:
    """Three-point identity with A_mu at time t3 in ``slot`` (default last).

    The other two operators fill the remaining slots in order at t1 and t2;
    the order of t1 and t2 is unconstrained.
    """
    if not t3 > max(t1, t2):
        raise ValueError("three-point QRT requires t3 > max(t1, t2)")
    ops, times = _place([o1, o2], [t1, t2], slot, t3)
    return qrt_n_point(spec, cset, ops, mu, times, slot, h, method)


def qrt_four_point(spec: CouplingSpec, cset: ClosedSet, o1, o2, o3, mu, t1, t2, t3, t4,
                   h: float = DEFAULT_STEP, slot: int = 3, method: str = "central") -> QrtReport:
    if not t4 > max(t1, t2, t3):
        raise ValueError("four-point QRT requires t4 > max(t1, t2, t3)")
    ops, times = _place([o1, o2, o3], [t1, t2, t3], slot, t4)
    return qrt_n_point(spec, cset, ops, mu, times, slot, h, method)


def _place(ops, times, slot, t_max):
    if not 0 <= slot <= len(ops):
        raise IndexError("slot out of range")
    ops = list(ops)
    times = list(times)
    ops.insert(slot, None)
    times.insert(slot, t_max)
    return ops, times


def qrt_otoc(spec: CouplingSpec, set_mu: ClosedSet, set_nu: ClosedSet, o1, o3, mu, nu,
             t1: float, t2: float, h: float = DEFAULT_STEP, include_f: bool = True,
             method: str = "central") -> QrtReport:
    """d/dt2 (O1(t1) A_mu(t2) O3(t1) A_nu(t2))_S against both closed-set sums plus F."""
    if not t2 > t1:
        raise ValueError("OTOC QRT requires t2 > t1")
    if h > (t2 - t1) / 10:
        raise ValueError("step must not exceed (t2 - t1) / 10")
    m = set_mu.index(mu)
    n = set_nu.index(nu)
    a_mu, a_nu = set_mu.ops[m], set_nu.ops[n]
    lhs = derivative(lambda t: otoc_reduced(spec, o1, a_mu, o3, a_nu, t1, t).value, t2, h, method)
    rhs = sum(set_mu.m[m, lam] * otoc_reduced(spec, o1, a, o3, a_nu, t1, t2).value
              for lam, a in enumerate(set_mu.ops))
    rhs = rhs + sum(set_nu.m[n, lam] * otoc_reduced(spec, o1, a_mu, o3, a, t1, t2).value
                    for lam, a in enumerate(set_nu.ops))
    f = f_term(spec, o1, a_mu, o3, a_nu, t1, t2)
    if include_f:
        rhs = rhs + f
    return QrtReport.build(lhs, rhs, h, [t1, t2, t1, t2], 3, "otoc",
                           f_norm=float(np.max(np.abs(f))), include_f=include_f)


__all__ = [
    "QrtReport", "derivative", "qrt_two_point", "qrt_three_point", "qrt_four_point",
    "qrt_n_point", "qrt_otoc", "DEFAULT_STEP",
]
