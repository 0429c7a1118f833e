"""Dense complex matrix helpers shared by every other module.

Operators are plain ``numpy.ndarray`` objects of dtype complex128 and shape
(d, d).  The qubit basis is ``|e> = (1, 0)``, ``|g> = (0, 1)`` so that
``sigma_z = diag(1, -1)`` and ``sigma_minus |e> = |g>``.
"""
from __future__ import annotations

from enum import Enum

import numpy as np
import scipy.linalg


class Pauli(str, Enum):
    X = "X"
    Y = "Y"
    Z = "Z"
    PLUS = "PLUS"
    MINUS = "MINUS"
    ID = "ID"


_PAULI = {
    Pauli.X: np.array([[0, 1], [1, 0]], dtype=complex),
    Pauli.Y: np.array([[0, -1j], [1j, 0]], dtype=complex),
    Pauli.Z: np.array([[1, 0], [0, -1]], dtype=complex),
    Pauli.PLUS: np.array([[0, 1], [0, 0]], dtype=complex),
    Pauli.MINUS: np.array([[0, 0], [1, 0]], dtype=complex),
    Pauli.ID: np.eye(2, dtype=complex),
}


def pauli(which: Pauli | str) -> np.ndarray:
    """Return a fresh copy of a 2x2 Pauli-type matrix.

    ``which`` is one of X, Y, Z, PLUS, MINUS, ID (case-insensitive).
    PLUS and MINUS are the raising/lowering operators (sigma_x +/- i sigma_y)/2.
    """
    key = Pauli(which.upper()) if isinstance(which, str) else Pauli(which)
    return _PAULI[key].copy()


SX = pauli(Pauli.X)
SY = pauli(Pauli.Y)
SZ = pauli(Pauli.Z)
SP = pauli(Pauli.PLUS)
SM = pauli(Pauli.MINUS)
I2 = pauli(Pauli.ID)
for _m in (SX, SY, SZ, SP, SM, I2):
    _m.setflags(write=False)


def as_operator(a, name: str = "operator") -> np.ndarray:
    """Coerce ``a`` to a square complex matrix, raising ValueError otherwise."""
    arr = np.asarray(a, dtype=complex)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] < 1:
        raise ValueError(f"{name} must be a non-empty square matrix, got shape {arr.shape}")
    return arr


def dag(a: np.ndarray) -> np.ndarray:
    return np.conj(np.transpose(a))


def commutator(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a @ b - b @ a


def identity(dim: int) -> np.ndarray:
    return np.eye(dim, dtype=complex)


def _check_same_dim(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")


def expm(a, scale: complex = 1.0) -> np.ndarray:
    """Matrix exponential ``exp(scale * a)``.

    Backed by scipy's scaling-and-squaring Pade algorithm, which meets a
    relative accuracy of about 1e-13 for ``||scale * a|| <= 50``.
    """
    a = as_operator(a)
    m = complex(scale) * a
    if not np.all(np.isfinite(m)):
        raise ValueError("expm: non-finite entries")
    if scale == 0:
        return identity(a.shape[0])
    return scipy.linalg.expm(m)


def kron(a, b) -> np.ndarray:
    """Kronecker product with ``a`` as the left (system) factor."""
    return np.kron(as_operator(a), as_operator(b))


def kron_all(*ops) -> np.ndarray:
    out = np.ones((1, 1), dtype=complex)
    for op in ops:
        out = np.kron(out, as_operator(op))
    return out


def max_abs_diff(a, b) -> float:
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    _check_same_dim(a, b)
    return float(np.max(np.abs(a - b)))


def is_hermitian(a: np.ndarray, atol: float = 1e-12) -> bool:
    return bool(np.max(np.abs(a - dag(a)), initial=0.0) <= atol)


def validate_density_matrix(rho, atol: float = 1e-10) -> np.ndarray:
    """Return ``rho`` as an operator after checking it is a valid density matrix."""
    rho = as_operator(rho, "rho")
    if not is_hermitian(rho, atol):
        raise ValueError("density matrix is not Hermitian")
    if abs(np.trace(rho) - 1.0) > atol:
        raise ValueError(f"density matrix trace is {np.trace(rho).real:.6g}, expected 1")
    if np.min(np.linalg.eigvalsh(0.5 * (rho + dag(rho)))) < -atol:
        raise ValueError("density matrix is not positive semidefinite")
    return rho


def projector(vec) -> np.ndarray:
    v = np.asarray(vec, dtype=complex).reshape(-1)
    v = v / np.linalg.norm(v)
    return np.outer(v, v.conj())


# Named single-qubit states used by the CLI and tests.
def density(name: str) -> np.ndarray:
    name = name.lower()
    if name == "excited":
        return projector([1, 0])
    if name == "ground":
        return projector([0, 1])
    if name == "mixed":
        return 0.5 * I2.copy()
    if name == "plus":
        return projector([1, 1])
    raise KeyError(f"unknown density matrix preset {name!r}")
