"""Fixed-size complex matrix kernel (2x2 and 4x4).

Composite-space convention: the joint space of system and field qubits uses
the product basis ordered (s0 f0, s1 f0, s0 f1, s1 f1) -- the system index is
the fast one. Consequently ``tensor(a, b)`` with ``a`` acting on the system
and ``b`` on the field is ``kron(b, a)``, and the 2x2 blocks of a 4x4
operator are field-sector blocks whose entries act on the system.

All functions are pure; matrices are plain complex ndarrays.
"""

from __future__ import annotations

import numpy as np

HERMITICITY_TOL = 1e-10

_EXP_TERM_TOL = 1e-13


class NotHermitian(ValueError):
    """Input fails the Hermiticity tolerance."""


def max_abs(m: np.ndarray) -> float:
    """Max-entry norm."""
    return float(np.max(np.abs(m)))


def adjoint(m: np.ndarray) -> np.ndarray:
    """Conjugate transpose (of the trailing two axes, so stacks work too)."""
    return np.conjugate(np.swapaxes(m, -1, -2))


def tensor(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Product operator a (system) tensor b (field) in the basis above."""
    return np.kron(b, a)


def partial_trace_system(m: np.ndarray) -> np.ndarray:
    """Trace the field qubit out of a 4x4 operator, keeping the system.

    In the block layout above this is the sum of the diagonal field blocks;
    it is the unique linear map with Tr[out @ x] = Tr[m @ tensor(x, I)] for
    every system operator x.
    """
    return m[:2, :2] + m[2:, 2:]


def herm_eigen2(m: np.ndarray, tol: float = HERMITICITY_TOL) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a 2x2 Hermitian matrix, closed form.

    Returns (eigenvalues sorted descending, eigenvectors as columns). The
    input is symmetrized before decomposing; raises NotHermitian if it is
    farther than ``tol`` from its adjoint in max-entry norm.
    """
    m = np.asarray(m, dtype=complex)
    if max_abs(m - adjoint(m)) > tol:
        raise NotHermitian("matrix exceeds Hermiticity tolerance "
                           f"{tol:g}: deviation {max_abs(m - adjoint(m)):.3e}")
    m = 0.5 * (m + adjoint(m))
    a = m[0, 0].real
    d = m[1, 1].real
    b = m[0, 1]
    mid = 0.5 * (a + d)
    rad = np.sqrt(0.25 * (a - d) ** 2 + abs(b) ** 2)
    lo, hi = mid - rad, mid + rad
    if rad < 1e-15 * max(1.0, abs(mid)):
        return np.array([hi, lo]), np.eye(2, dtype=complex)
    # columns of (m - lo*I) span the hi-eigenspace; pick the better conditioned one
    shifted = m - lo * np.eye(2)
    col0 = shifted[:, 0]
    col1 = shifted[:, 1]
    v_hi = col0 if np.linalg.norm(col0) >= np.linalg.norm(col1) else col1
    v_hi = v_hi / np.linalg.norm(v_hi)
    v_lo = np.array([-np.conj(v_hi[1]), np.conj(v_hi[0])])
    vecs = np.column_stack([v_hi, v_lo])
    return np.array([hi, lo]), vecs


def expm4(m: np.ndarray) -> np.ndarray:
    """Matrix exponential by scaling-and-squaring on a truncated series.

    Terms are accumulated until they drop below 1e-13 in max-entry norm;
    accurate to ~1e-12 relative error for inputs of norm up to ~10.
    """
    m = np.asarray(m, dtype=complex)
    dim = m.shape[0]
    norm = float(np.linalg.norm(m, 1))
    squarings = 0
    if norm > 0.5:
        squarings = int(np.ceil(np.log2(norm / 0.5)))
        m = m / (2.0 ** squarings)
    result = np.eye(dim, dtype=complex)
    term = np.eye(dim, dtype=complex)
    for k in range(1, 60):
        term = term @ m / k
        result = result + term
        if max_abs(term) < _EXP_TERM_TOL:
            break
    for _ in range(squarings):
        result = result @ result
    return result
