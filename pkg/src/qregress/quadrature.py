"""Composite Gauss-Legendre rules with deterministic panel doubling.

The integrands met here are smooth sums of complex exponentials, so a fixed
high-order rule on equal panels converges very fast; the panel count is
doubled until two successive estimates agree.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np


class QuadratureError(RuntimeError):
    def __init__(self, achieved: float, tol: float):
        super().__init__(f"quadrature did not converge: achieved {achieved:.3e}, requested {tol:.3e}")
        self.achieved = achieved
        self.tol = tol


@lru_cache(maxsize=None)
def _gl(order: int):
    x, w = np.polynomial.legendre.leggauss(order)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def gl_nodes(a: float, b: float, panels: int, order: int = 16):
    """Nodes and weights of the composite rule on [a, b]."""
    x, w = _gl(order)
    edges = np.linspace(a, b, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).reshape(-1)
    weights = (half[:, None] * w[None, :]).reshape(-1)
    return nodes, weights


def _initial_panels(a: float, b: float, freq_scale: float) -> int:
    # roughly one panel per radian of the fastest oscillation
    return max(1, int(np.ceil(abs(b - a) * max(freq_scale, 1e-12) / 4.0)))


@dataclass(frozen=True)
class QuadResult:
    value: np.ndarray
    error: float
    panels: int


def integrate(fn: Callable[[np.ndarray], np.ndarray], a: float, b: float, tol: float = 1e-10,
              freq_scale: float = 1.0, order: int = 16, max_panels: int = 4096) -> QuadResult:
    """Integrate a vectorised ``fn(nodes) -> array (n_nodes, ...)`` over [a, b]."""
    if b == a:
        probe = np.asarray(fn(np.array([a])))
        return QuadResult(np.zeros(probe.shape[1:], dtype=complex), 0.0, 0)
    panels = _initial_panels(a, b, freq_scale)
    prev = None
    err = np.inf
    while panels <= max_panels:
        x, w = gl_nodes(a, b, panels, order)
        val = np.tensordot(w, np.asarray(fn(x)), axes=(0, 0))
        if prev is not None:
            err = float(np.max(np.abs(val - prev), initial=0.0))
            if err <= tol:
                return QuadResult(val, err, panels)
        prev = val
        panels *= 2
    raise QuadratureError(err, tol)


def integrate_2d(kernel: Callable[[np.ndarray, np.ndarray], np.ndarray],
                 f1: Callable[[np.ndarray], np.ndarray], f2: Callable[[np.ndarray], np.ndarray],
                 a1: float, b1: float, a2: float, b2: float, tol: float = 1e-10,
                 freq_scale: float = 1.0, order: int = 16, max_panels: int = 2048) -> QuadResult:
    """Tensor-product rule for  int int kernel(x1, x2) f1(x1)_i f2(x2)_j  dx1 dx2.

    ``kernel(x1, x2)`` returns the (n1, n2) matrix of kernel values, ``f1`` and
    ``f2`` return (n, m1) and (n, m2) arrays.  The result has shape (m1, m2).
    """
    if b1 == a1 or b2 == a2:
        m1 = np.asarray(f1(np.array([a1]))).shape[1]
        m2 = np.asarray(f2(np.array([a2]))).shape[1]
        return QuadResult(np.zeros((m1, m2), dtype=complex), 0.0, 0)
    p1 = _initial_panels(a1, b1, freq_scale)
    p2 = _initial_panels(a2, b2, freq_scale)
    prev = None
    err = np.inf
    while max(p1, p2) <= max_panels:
        x1, w1 = gl_nodes(a1, b1, p1, order)
        x2, w2 = gl_nodes(a2, b2, p2, order)
        k = kernel(x1, x2)
        g1 = np.asarray(f1(x1)) * w1[:, None]
        g2 = np.asarray(f2(x2)) * w2[:, None]
        val = g1.T @ k @ g2
        if prev is not None:
            err = float(np.max(np.abs(val - prev), initial=0.0))
            if err <= tol:
                return QuadResult(val, err, max(p1, p2))
        prev = val
        p1 *= 2
        p2 *= 2
    raise QuadratureError(err, tol)


__all__ = ["QuadratureError", "QuadResult", "gl_nodes", "integrate", "integrate_2d"]
