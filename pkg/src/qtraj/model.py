"""Domain types for the monitored two-level system.

States are 2x2 density matrices on the system qubit; measurements act on a
fresh field qubit after each interaction. The measured observable has two
outcomes with rank-one eigenprojectors; its eigenbasis is rotated from the
field basis by a mixing angle, and the rotation is what turns the measurement
record into a diffusive signal.

Scaling convention for the per-interaction unitary: with n interactions per
unit time (h = 1/n) the exponent carries the free Hamiltonians at order h and
the exchange coupling at order 1/sqrt(n),

    U(n) = exp(-i h (h0 (x) I + I (x) h_field) + (c (x) raise - c+ (x) lower)/sqrt(n)),

the unique normalization with a nontrivial continuum limit. The field phase
is fixed so the emission block of U is +c/sqrt(n) to leading order:

    L10(n) = c/sqrt(n) + O(n^-3/2),
    L00(n) = phase * (I + (-i h0 - c+c/2)/n) + O(n^-2),

where phase = exp(-i h E0) and E0 is the field ground-level energy (0 for the
default "excited_energy" choice of field Hamiltonian, 1 for "ground_energy").
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import (
    HERMITICITY_TOL,
    adjoint,
    expm4,
    herm_eigen2,
    max_abs,
    tensor,
)

STATE_TOL = 1e-10
UNITARITY_TOL = 1e-12

ID2 = np.eye(2, dtype=complex)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)

FIELD_GROUND = np.array([[1, 0], [0, 0]], dtype=complex)   # |f0><f0|
_FIELD_RAISE = np.array([[0, 0], [1, 0]], dtype=complex)   # |f1><f0|
_FIELD_LOWER = np.array([[0, 1], [0, 0]], dtype=complex)   # |f0><f1|

FIELD_HAMILTONIANS = {
    "ground_energy": np.diag([1.0, 0.0]).astype(complex),
    "excited_energy": np.diag([0.0, 1.0]).astype(complex),
}


class NotAState(ValueError):
    """Matrix is not a density matrix within tolerance."""


class DegenerateSpectrum(ValueError):
    """Observable eigenvalues coincide."""


@dataclass(frozen=True)
class DensityMatrix:
    """System state: 2x2 Hermitian, positive, trace one."""

    m: np.ndarray


@dataclass(frozen=True)
class WaveFunction:
    """Pure-state representative: norm-one vector in C^2."""

    v: np.ndarray


@dataclass(frozen=True)
class Observable:
    """Two-outcome field observable lam0*p0 + lam1*p1 with rank-one projectors."""

    lam0: float
    lam1: float
    p0: np.ndarray
    p1: np.ndarray
    mixing_angle: float


@dataclass(frozen=True)
class InteractionUnitary:
    """Joint unitary of one interaction, with its field-sector blocks."""

    matrix: np.ndarray
    l00: np.ndarray
    l01: np.ndarray
    l10: np.ndarray
    l11: np.ndarray

    @classmethod
    def from_matrix(cls, u: np.ndarray) -> "InteractionUnitary":
        u = np.asarray(u, dtype=complex)
        if max_abs(u @ adjoint(u) - np.eye(4)) > UNITARITY_TOL:
            raise ValueError("matrix is not unitary to tolerance "
                             f"{UNITARITY_TOL:g}")
        return cls(matrix=u, l00=u[:2, :2], l01=u[:2, 2:],
                   l10=u[2:, :2], l11=u[2:, 2:])


@dataclass(frozen=True)
class ModelConfig:
    """Everything that determines the dynamics.

    theta is a phase folded into the coupling (c -> exp(i theta) c) before
    anything else uses it; every routine reads the coupling through
    ``coupling()``.
    """

    h0: np.ndarray
    c: np.ndarray
    observable: Observable
    n: int
    t_horizon: float
    theta: float = 0.0
    field_hamiltonian: str = "excited_energy"

    def __post_init__(self):
        h0 = np.asarray(self.h0, dtype=complex)
        c = np.asarray(self.c, dtype=complex)
        object.__setattr__(self, "h0", h0)
        object.__setattr__(self, "c", c)
        if self.n < 1:
            raise ValueError("n must be a positive integer")
        if self.t_horizon <= 0:
            raise ValueError("t_horizon must be positive")
        if max_abs(h0 - adjoint(h0)) > HERMITICITY_TOL:
            raise ValueError("h0 must be Hermitian to tolerance "
                             f"{HERMITICITY_TOL:g}")
        if self.field_hamiltonian not in FIELD_HAMILTONIANS:
            raise ValueError("field_hamiltonian must be one of "
                             f"{sorted(FIELD_HAMILTONIANS)}")

    def coupling(self) -> np.ndarray:
        """Effective coupling exp(i theta) * c."""
        return np.exp(1j * self.theta) * self.c

    @property
    def steps(self) -> int:
        return int(np.floor(self.n * self.t_horizon))


def check_state(m: np.ndarray, tol: float = STATE_TOL) -> None:
    """Raise NotAState unless m is Hermitian, trace-one, positive to tol."""
    m = np.asarray(m, dtype=complex)
    herm_dev = max_abs(m - adjoint(m))
    if herm_dev > tol:
        raise NotAState(f"Hermiticity violated by {herm_dev:.3e}")
    tr = m.trace()
    if abs(tr - 1.0) > tol:
        raise NotAState(f"trace deviates from 1 by {abs(tr - 1.0):.3e}")
    eigs, _ = herm_eigen2(m, tol=max(tol, HERMITICITY_TOL))
    if eigs[-1] < -tol:
        raise NotAState(f"negative eigenvalue {eigs[-1]:.3e}")


def make_density(m: np.ndarray) -> DensityMatrix:
    """Validated state constructor: symmetrizes, renormalizes the trace, and
    clips eigenvalues inside the tolerance band; rejects anything farther out.
    """
    m = np.asarray(m, dtype=complex)
    check_state(m)
    m = 0.5 * (m + adjoint(m))
    m = m / m.trace().real
    eigs, vecs = herm_eigen2(m)
    if eigs[-1] < 0.0:
        eigs = np.clip(eigs, 0.0, None)
        m = (vecs * eigs) @ adjoint(vecs)
        m = m / m.trace().real
    return DensityMatrix(m)


def make_wave(v: np.ndarray) -> WaveFunction:
    """Validated wave-function constructor (norm within STATE_TOL of 1)."""
    v = np.asarray(v, dtype=complex)
    nrm = float(np.linalg.norm(v))
    if abs(nrm - 1.0) > STATE_TOL:
        raise ValueError(f"norm deviates from 1 by {abs(nrm - 1.0):.3e}")
    return WaveFunction(v / nrm)


def purity(rho: DensityMatrix) -> float:
    """Tr(rho^2), in [1/2, 1]; equals 1 exactly on pure states."""
    return float((rho.m @ rho.m).trace().real)


def make_observable(phi: float, lam0: float, lam1: float) -> Observable:
    """Two-outcome observable whose first eigenvector is
    cos(phi/2)*f0 + sin(phi/2)*f1; phi in (0, pi) makes it nondiagonal."""
    if lam0 == lam1:
        raise DegenerateSpectrum("observable eigenvalues must differ")
    u = np.array([np.cos(phi / 2.0), np.sin(phi / 2.0)], dtype=complex)
    p0 = np.outer(u, u.conj())
    p1 = ID2 - p0
    return Observable(lam0=float(lam0), lam1=float(lam1),
                      p0=p0, p1=p1, mixing_angle=float(phi))


def build_total_hamiltonian(cfg: ModelConfig) -> np.ndarray:
    """Joint Hamiltonian with the 1/sqrt(n)-weighted exchange coupling."""
    c = cfg.coupling()
    h_field = FIELD_HAMILTONIANS[cfg.field_hamiltonian]
    coupling = (tensor(c, _FIELD_RAISE) + tensor(adjoint(c), _FIELD_LOWER))
    return (tensor(cfg.h0, ID2) + tensor(ID2, h_field)
            + coupling / np.sqrt(cfg.n))


def build_unitary(cfg: ModelConfig) -> InteractionUnitary:
    """Per-interaction unitary with the scaling stated in the module docstring.

    The exponent is anti-Hermitian by construction: free Hamiltonians enter
    at order h = 1/n, the exchange coupling at order 1/sqrt(n) in the
    combination (c (x) raise - c+ (x) lower) whose phase makes the leading
    emission block +c/sqrt(n).
    """
    h = 1.0 / cfg.n
    c = cfg.coupling()
    h_field = FIELD_HAMILTONIANS[cfg.field_hamiltonian]
    free = tensor(cfg.h0, ID2) + tensor(ID2, h_field)
    exchange = tensor(c, _FIELD_RAISE) - tensor(adjoint(c), _FIELD_LOWER)
    exponent = -1j * h * free + exchange / np.sqrt(cfg.n)
    return InteractionUnitary.from_matrix(expm4(exponent))


def field_ground_energy(cfg: ModelConfig) -> float:
    """Energy of the field ground level; sets the global phase of L00."""
    return float(FIELD_HAMILTONIANS[cfg.field_hamiltonian][0, 0].real)
