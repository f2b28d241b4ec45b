"""Repeated-interaction measurement chain for the two-level system.

One step: entangle the system with a fresh field qubit through the
interaction unitary, measure the two-outcome field observable, collapse, and
trace the field out. The post-measurement states form a Markov chain. The
centered, normalized outcome variables

    x_{k+1} = (outcome_{k+1} - q_{k+1}) / sqrt(p_{k+1} q_{k+1})

have conditional mean 0 and variance 1 by construction, and for a
nondiagonal observable the chain decomposes per step as

    rho_{k+1} - rho_k = L(rho_k)/n - B(rho_k) x_{k+1}/sqrt(n) + remainder,

with the Lindblad drift L and diffusive backaction B of :mod:`qtraj.sde`.
Sign note: with this package's conventions (first eigenvector
cos(phi/2) f0 + sin(phi/2) f1, emission block +c/sqrt(n)) the noise couples
through -B; the chain is distributionally identical to the +B form (x -> -x).

Sampling convention: outcome 1 is taken iff the step's uniform draw is < q.
Each trajectory owns one PCG64 stream seeded with its 64-bit seed and
consumes exactly one uniform per step.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .linalg import adjoint, max_abs, partial_trace_system, tensor
from .model import (
    FIELD_GROUND,
    ID2,
    DensityMatrix,
    InteractionUnitary,
    ModelConfig,
    NotAState,
    Observable,
    build_unitary,
    check_state,
)
from .rng import derive_seed, generator_for

DEGENERATE_PROB = 1e-12
NULL_BRANCH = 1e-14
VALIDATE_EVERY = 100


class DegenerateProbability(ValueError):
    """A branch with vanishing probability was requested."""


@dataclass(frozen=True)
class StepOutcome:
    """Result of one measurement step."""

    outcome: int
    p: float
    q: float
    x: float
    next_state: DensityMatrix


@dataclass(frozen=True)
class TrajectoryRecord:
    """One trajectory: states rho_0..rho_K plus per-step outcome data."""

    states: np.ndarray        # (steps+1, 2, 2) complex
    outcomes: np.ndarray      # (steps,) int
    x_increments: np.ndarray  # (steps,) float
    probabilities: np.ndarray  # (steps, 2) float, columns (p, q)
    n: int
    seed: int

    @property
    def steps(self) -> int:
        return len(self.outcomes)


@dataclass(frozen=True)
class EmbeddedProcesses:
    """Piecewise-constant paths w_n, v_n, rho_n on the grid k/n."""

    grid: np.ndarray   # (m+1,) time points k/n
    w: np.ndarray      # (m+1,) scaled partial sums of x
    v: np.ndarray      # (m+1,) floor(n t)/n at grid points
    rho: np.ndarray    # (m+1, 2, 2)
    n: int

    def _index(self, t: float) -> int:
        idx = int(np.floor(t * self.n + 1e-12))
        return min(max(idx, 0), len(self.grid) - 1)

    def w_at(self, t: float) -> float:
        return float(self.w[self._index(t)])

    def v_at(self, t: float) -> float:
        return float(self.v[self._index(t)])

    def rho_at(self, t: float) -> np.ndarray:
        return self.rho[self._index(t)]


def interaction_state(rho: DensityMatrix, u: InteractionUnitary) -> np.ndarray:
    """Joint state after one interaction, U (rho (x) |f0><f0|) U+."""
    joint = tensor(rho.m, FIELD_GROUND)
    return u.matrix @ joint @ adjoint(u.matrix)


def nonnormalized_maps(rho: DensityMatrix, u: InteractionUnitary,
                       a: Observable) -> tuple[np.ndarray, np.ndarray]:
    """Unnormalized post-measurement branches.

    Sandwiches the joint state with I (x) p_i and traces the field out;
    both outputs are positive and their traces sum to one.
    """
    mu = interaction_state(rho, u)
    branches = []
    for proj in (a.p0, a.p1):
        sandwich = tensor(ID2, proj)
        branches.append(partial_trace_system(sandwich @ mu @ sandwich))
    return branches[0], branches[1]


def _branch_maps_batch(rho: np.ndarray, u: InteractionUnitary,
                       a: Observable) -> tuple[np.ndarray, np.ndarray]:
    """Branch maps on a (..., 2, 2) stack of states.

    Expands the field partial trace analytically: for projector entries
    P_{dc}, the branch map is sum_{c,d} P_{dc} L_{c0} rho L_{d0}+. Equal to
    ``nonnormalized_maps`` entrywise.
    """
    l00, l10 = u.l00, u.l10
    b00 = l00 @ rho @ adjoint(l00)
    b10 = l10 @ rho @ adjoint(l00)
    b01 = l00 @ rho @ adjoint(l10)
    b11 = l10 @ rho @ adjoint(l10)

    def combine(proj: np.ndarray) -> np.ndarray:
        return (proj[0, 0] * b00 + proj[0, 1] * b10
                + proj[1, 0] * b01 + proj[1, 1] * b11)

    return combine(a.p0), combine(a.p1)


def measurement_step(rho: DensityMatrix, u: InteractionUnitary, a: Observable,
                     uniform_draw: float) -> StepOutcome:
    """One indirect measurement: sample the outcome, collapse, renormalize.

    Outcome 1 iff uniform_draw < q. If min(p, q) < 1e-12 the step is taken
    deterministically on the dominant branch with x recorded as 0.
    """
    m0, m1 = nonnormalized_maps(rho, u, a)
    p = float(m0.trace().real)
    q = float(m1.trace().real)
    if min(p, q) < DEGENERATE_PROB:
        outcome = 0 if p >= q else 1
        x = 0.0
    else:
        outcome = 1 if uniform_draw < q else 0
        x = float(np.sqrt(p / q)) if outcome == 1 else -float(np.sqrt(q / p))
    branch, weight = ((m1, q) if outcome == 1 else (m0, p))
    if weight < NULL_BRANCH:
        raise DegenerateProbability(
            f"branch {outcome} has trace {weight:.3e} < {NULL_BRANCH:g}")
    nxt = branch / weight
    check_state(nxt)
    return StepOutcome(outcome=outcome, p=p, q=q, x=x,
                       next_state=DensityMatrix(nxt))


def increment_update(rho: DensityMatrix, u: InteractionUnitary, a: Observable,
                     outcome: int) -> np.ndarray:
    """Increment-form update for the given outcome,

        m0 + m1 + [-sqrt(q/p) m0 + sqrt(p/q) m1] * x,

    algebraically identical to the normalized branch m_outcome / weight.
    """
    m0, m1 = nonnormalized_maps(rho, u, a)
    p = float(m0.trace().real)
    q = float(m1.trace().real)
    if min(p, q) < DEGENERATE_PROB:
        raise DegenerateProbability(
            f"branch probabilities ({p:.3e}, {q:.3e}) below {DEGENERATE_PROB:g}")
    x = np.sqrt(p / q) if outcome == 1 else -np.sqrt(q / p)
    return m0 + m1 + (-np.sqrt(q / p) * m0 + np.sqrt(p / q) * m1) * x


def _validate_batch(states: np.ndarray, step: int) -> np.ndarray:
    """Check the batch against the state invariants, then symmetrize."""
    herm_dev = max_abs(states - adjoint(states))
    traces = np.trace(states, axis1=-2, axis2=-1)
    trace_dev = float(np.max(np.abs(traces - 1.0)))
    sym = 0.5 * (states + adjoint(states))
    a = sym[..., 0, 0].real
    d = sym[..., 1, 1].real
    rad = np.sqrt(0.25 * (a - d) ** 2 + np.abs(sym[..., 0, 1]) ** 2)
    eig_min = float(np.min(0.5 * (a + d) - rad))
    if herm_dev > 1e-10 or trace_dev > 1e-10 or eig_min < -1e-10:
        raise NotAState(
            f"invariant violated at step {step}: hermiticity {herm_dev:.3e}, "
            f"trace {trace_dev:.3e}, min eigenvalue {eig_min:.3e}")
    return sym


def drive_ensemble(cfg: ModelConfig, rho0: DensityMatrix, uniforms: np.ndarray,
                   validate_every: int = VALIDATE_EVERY,
                   ) -> Iterator[tuple[int, np.ndarray, np.ndarray, np.ndarray,
                                       np.ndarray, np.ndarray]]:
    """Advance a batch of trajectories in lock-step.

    ``uniforms`` is (num_traj, steps), one stream row per trajectory. Yields
    (k, states, outcomes, x, p, q) after each step; the states array is
    reused between iterations, so consumers must copy what they keep.
    """
    u = build_unitary(cfg)
    a = cfg.observable
    num_traj, steps = uniforms.shape
    rho = np.broadcast_to(rho0.m, (num_traj, 2, 2)).copy()
    for k in range(steps):
        m0, m1 = _branch_maps_batch(rho, u, a)
        p = np.trace(m0, axis1=-2, axis2=-1).real
        q = np.trace(m1, axis1=-2, axis2=-1).real
        degenerate = np.minimum(p, q) < DEGENERATE_PROB
        outcome = np.where(degenerate, (q > p).astype(np.int64),
                           (uniforms[:, k] < q).astype(np.int64))
        with np.errstate(divide="ignore", invalid="ignore"):
            x = np.where(outcome == 1, np.sqrt(p / q), -np.sqrt(q / p))
        x = np.where(degenerate, 0.0, x)
        weight = np.where(outcome == 1, q, p)
        if np.any(weight < NULL_BRANCH):
            j = int(np.argmin(weight))
            raise DegenerateProbability(
                f"step {k}, trajectory {j}: branch trace {weight[j]:.3e}")
        rho = np.where(outcome[:, None, None] == 1, m1, m0) / weight[:, None, None]
        if validate_every and (k + 1) % validate_every == 0:
            rho = _validate_batch(rho, k)
        yield k, rho, outcome, x, p, q


def run_trajectory(cfg: ModelConfig, rho0: DensityMatrix, seed: int,
                   validate_every: int = VALIDATE_EVERY) -> TrajectoryRecord:
    """Simulate floor(n * t_horizon) measurement steps; deterministic in seed."""
    steps = cfg.steps
    uniforms = generator_for(seed).random(steps)[None, :]
    states = np.empty((steps + 1, 2, 2), dtype=complex)
    states[0] = rho0.m
    outcomes = np.empty(steps, dtype=np.int64)
    x = np.empty(steps)
    probs = np.empty((steps, 2))
    for k, batch, out, xs, p, q in drive_ensemble(cfg, rho0, uniforms,
                                                  validate_every=validate_every):
        states[k + 1] = batch[0]
        outcomes[k] = out[0]
        x[k] = xs[0]
        probs[k, 0] = p[0]
        probs[k, 1] = q[0]
    check_state(states[-1])
    return TrajectoryRecord(states=states, outcomes=outcomes, x_increments=x,
                            probabilities=probs, n=cfg.n, seed=seed)


def ensemble_streams(base_seed: int, num_traj: int, steps: int) -> np.ndarray:
    """Uniform streams for an ensemble: row j comes from derive_seed(base, j)."""
    out = np.empty((num_traj, steps))
    for j in range(num_traj):
        out[j] = generator_for(derive_seed(base_seed, j)).random(steps)
    return out


def embed(record: TrajectoryRecord, horizon: float) -> EmbeddedProcesses:
    """Piecewise-constant embeddings on [0, horizon]:

    w(t) = sum_{k <= floor(n t)} x_k / sqrt(n), v(t) = floor(n t)/n, and the
    state path itself.
    """
    n = record.n
    m = int(np.floor(n * horizon))
    if m > record.steps:
        raise ValueError(f"record holds {record.steps} steps < floor(n*T) = {m}")
    grid = np.arange(m + 1) / n
    w = np.concatenate([[0.0], np.cumsum(record.x_increments[:m]) / np.sqrt(n)])
    return EmbeddedProcesses(grid=grid, w=w, v=grid.copy(),
                             rho=record.states[:m + 1], n=n)


def quadratic_variation(record: TrajectoryRecord, t: float) -> float:
    """[w, w]_t = sum_{i <= floor(n t)} x_i^2 / n."""
    m = int(np.floor(record.n * t))
    return float(np.sum(record.x_increments[:m] ** 2) / record.n)


def drift_diffusion_residual(record: TrajectoryRecord, cfg: ModelConfig,
                             ) -> tuple[np.ndarray, np.ndarray]:
    """Remainder after removing the diffusive approximation from the chain,

        eps_m = rho_m - rho_0 - sum_{k<m} [L(rho_k)/n - B(rho_k) x_{k+1}/sqrt(n)],

    with the -B noise coupling realized by this package's conventions (see
    module docstring); eps then collects only the o(1/n) and o(1)/sqrt(n)
    terms the diffusive limit discards. Returns (grid, eps), eps of shape
    (m+1, 2, 2).
    """
    from .sde import backaction, lindblad

    n = record.n
    states = record.states
    m = record.steps
    drift = lindblad(states[:m], cfg.h0, cfg.coupling()) / n
    noise = -backaction(states[:m], cfg.coupling()) \
        * record.x_increments[:m, None, None] / np.sqrt(n)
    partial = np.zeros((m + 1, 2, 2), dtype=complex)
    partial[1:] = np.cumsum(drift + noise, axis=0)
    eps = states - states[0] - partial
    grid = np.arange(m + 1) / n
    return grid, eps


def sup_residual(record: TrajectoryRecord, cfg: ModelConfig) -> float:
    """sup over the grid of the max-entry norm of the residual."""
    _, eps = drift_diffusion_residual(record, cfg)
    return float(np.max(np.abs(eps)))


def trajectory_to_csv(record: TrajectoryRecord, stream, timestamp: str | None = None) -> None:
    """CSV dump: step, time, outcome, p, q, x, rho entries (row 0 has empty
    outcome fields). Hermiticity makes the four real state columns sufficient.
    """
    if timestamp is not None:
        stream.write(f"# generated {timestamp}\n")
    stream.write("step,time,outcome,p,q,x,rho_00_re,rho_01_re,rho_01_im,rho_11_re\n")
    n = record.n
    for k in range(record.steps + 1):
        s = record.states[k]
        cells = [str(k), f"{k / n:.17g}"]
        if k == 0:
            cells += ["", "", "", ""]
        else:
            cells += [str(int(record.outcomes[k - 1])),
                      f"{record.probabilities[k - 1, 0]:.17g}",
                      f"{record.probabilities[k - 1, 1]:.17g}",
                      f"{record.x_increments[k - 1]:.17g}"]
        cells += [f"{s[0, 0].real:.17g}", f"{s[0, 1].real:.17g}",
                  f"{s[0, 1].imag:.17g}", f"{s[1, 1].real:.17g}"]
        stream.write(",".join(cells) + "\n")
