"""Diffusive stochastic master equation for the monitored two-level system.

Density form (reference measure):

    d rho = L(rho) dt + B(rho) dW,
    L(rho) = -i[h0, rho] - 1/2 {c+c, rho} + c rho c+,
    B(rho) = c rho + rho c+ - Tr[rho (c + c+)] rho.

Both coefficients are traceless, so raw Euler iterates keep unit trace up to
rounding; Hermiticity is preserved step by step because dW is real and both
coefficients map Hermitian to Hermitian. Positivity is not preserved by Euler,
so a per-step projection (eigen-clip at zero, trace renormalization) is on by
default.

Wave form (pure states):

    d psi = (c - nu) psi dW + (-i h0 - 1/2 (c+c - 2 nu c + nu^2)) psi dt,
    nu = 1/2 <psi, (c + c+) psi>.

The exact flow preserves the norm (the Ito drift of |psi|^2 vanishes at
norm one), so each Euler step is renormalized, which removes the O(h) scheme
drift without biasing the direction. The projector onto psi then solves the
density equation, which is how pure states propagate without leaving the
pure manifold.

Physical (innovation) form: substituting W = W~ + int Tr[rho (c+c+)] dt turns
the density equation into

    d rho = [L(rho) + g(rho) B(rho)] dt + B(rho) dW~,   g(rho) = Tr[rho (c+c+)],

where W~ is the innovation process, a Brownian motion under the physical
measure. The exponential weights

    Z_t: Z_0 = 1,  Z_{k+1} = Z_k exp(g_k dW_k - 1/2 g_k^2 h)

(left-point, Ito) convert reference-measure averages into physical ones:
E[Z_T f(rho_T)] over reference paths estimates the physical-form mean of f.

The Lindblad anticommutator uses c+c; the variant with cc+ is kept behind
the ``variant`` switch for comparison, but only c+c is consistent with the
norm-preserving wave form and with the short-time expansion of the
interaction unitary.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import adjoint, herm_eigen2
from .model import (
    ID2,
    DensityMatrix,
    ModelConfig,
    WaveFunction,
    check_state,
)
from .rng import derive_seed, generator_for

MAX_SDE_STEP = 1e-2


class ProjectionFailed(ValueError):
    """Positivity projection did not produce a valid state."""


@dataclass(frozen=True)
class SdePath:
    """Density-matrix path with its driving noise increments."""

    grid: np.ndarray            # (steps+1,)
    states: np.ndarray          # (steps+1, 2, 2)
    noise: np.ndarray           # (steps,) increments dW
    weights: np.ndarray | None = None     # (steps+1,) Girsanov weights
    companion: np.ndarray | None = None   # (steps+1,) reconstructed W values

    @property
    def h(self) -> float:
        return float(self.grid[1] - self.grid[0])


@dataclass(frozen=True)
class WavePath:
    """Wave-function path with its driving noise increments."""

    grid: np.ndarray     # (steps+1,)
    vectors: np.ndarray  # (steps+1, 2)
    noise: np.ndarray    # (steps,)


@dataclass(frozen=True)
class MasterPath:
    """Deterministic averaged-evolution path."""

    grid: np.ndarray
    states: np.ndarray


def _trace(m: np.ndarray) -> np.ndarray:
    return np.trace(m, axis1=-2, axis2=-1)


def lindblad(rho: np.ndarray, h0: np.ndarray, c: np.ndarray,
             variant: str = "cstar_c") -> np.ndarray:
    """Lindblad drift; traceless, Hermiticity-preserving; broadcasts over
    leading axes of ``rho``."""
    if variant == "cstar_c":
        anti = adjoint(c) @ c
    elif variant == "c_cstar":
        anti = c @ adjoint(c)
    else:
        raise ValueError("variant must be 'cstar_c' or 'c_cstar'")
    return (-1j * (h0 @ rho - rho @ h0)
            - 0.5 * (anti @ rho + rho @ anti)
            + c @ rho @ adjoint(c))


def jump_and_smooth_parts(rho: np.ndarray, h0: np.ndarray, c: np.ndarray,
                          variant: str = "cstar_c") -> tuple[np.ndarray, np.ndarray]:
    """Split the drift into the photon-detection jump c rho c+ and the smooth
    remainder between detections."""
    jump = c @ rho @ adjoint(c)
    return jump, lindblad(rho, h0, c, variant=variant) - jump


def backaction(rho: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Diffusive measurement backaction c rho + rho c+ - Tr[rho (c+c+)] rho.

    Traceless whenever Tr rho = 1; Hermitian output for Hermitian input.
    Broadcasts over leading axes.
    """
    g = _trace(rho @ (c + adjoint(c)))
    return c @ rho + rho @ adjoint(c) - g[..., None, None] * rho


def _clip_negative(eigs: np.ndarray, vecs: np.ndarray) -> np.ndarray:
    eigs = np.clip(eigs, 0.0, None)
    m = (vecs * eigs) @ adjoint(vecs)
    return m / m.trace().real


def project_positive(m: np.ndarray) -> np.ndarray:
    """Eigen-clip negative weight at zero and renormalize the trace."""
    m = 0.5 * (m + adjoint(m))
    eigs, vecs = herm_eigen2(m)
    if eigs[-1] >= 0.0:
        return m
    return _clip_negative(eigs, vecs)


def _project_positive_batch(m: np.ndarray) -> np.ndarray:
    """Vectorized positivity projection on a (..., 2, 2) Hermitian stack.

    Uses the closed form: clipping the negative eigenvalue and renormalizing
    lands on (m - lo*I)/(tr - 2*lo), the projector onto the top eigenvector.
    """
    m = 0.5 * (m + adjoint(m))
    a = m[..., 0, 0].real
    d = m[..., 1, 1].real
    rad = np.sqrt(0.25 * (a - d) ** 2 + np.abs(m[..., 0, 1]) ** 2)
    lo = 0.5 * (a + d) - rad
    bad = lo < 0.0
    if not np.any(bad):
        return m
    denom = np.where(bad, (a + d) - 2.0 * lo, 1.0)[..., None, None]
    shifted = m - lo[..., None, None] * ID2
    projected = shifted / denom
    return np.where(bad[..., None, None], projected, m)


def euler_step_density(rho: DensityMatrix, h: float, dw: float,
                       h0: np.ndarray, c: np.ndarray,
                       project: bool = True) -> DensityMatrix:
    """One Euler iterate rho + h L(rho) + dW B(rho), optionally projected."""
    if h <= 0:
        raise ValueError("step size must be positive")
    raw = rho.m + h * lindblad(rho.m, h0, c) + dw * backaction(rho.m, c)
    out = project_positive(raw) if project else raw
    if project:
        try:
            check_state(out)
        except Exception as exc:
            raise ProjectionFailed(str(exc)) from exc
    return DensityMatrix(out)


def wavefunction_step(psi: WaveFunction, h: float, dw: float,
                      h0: np.ndarray, c: np.ndarray) -> WaveFunction:
    """One Euler iterate of the wave form, renormalized to unit norm."""
    if h <= 0:
        raise ValueError("step size must be positive")
    v = psi.v
    nu = 0.5 * np.vdot(v, (c + adjoint(c)) @ v).real
    drift = (-1j * h0 - 0.5 * (adjoint(c) @ c - 2.0 * nu * c + nu * nu * ID2))
    raw = v + dw * ((c @ v) - nu * v) + h * (drift @ v)
    return WaveFunction(raw / np.linalg.norm(raw))


def _check_step(h: float) -> int:
    if not 0 < h <= MAX_SDE_STEP:
        raise ValueError(f"step size must be in (0, {MAX_SDE_STEP:g}], got {h:g}")
    return 1


def _noise_for(seed: int | None, shared_noise: np.ndarray | None,
               steps: int, h: float) -> np.ndarray:
    if shared_noise is not None:
        noise = np.asarray(shared_noise, dtype=float)
        if len(noise) < steps:
            raise ValueError(f"shared noise has {len(noise)} increments, need {steps}")
        return noise[:steps]
    if seed is None:
        raise ValueError("either seed or shared_noise is required")
    return generator_for(seed).standard_normal(steps) * np.sqrt(h)


def simulate_belavkin(cfg: ModelConfig, rho0: DensityMatrix, h: float,
                      seed: int | None = None,
                      shared_noise: np.ndarray | None = None,
                      project: bool = True) -> SdePath:
    """Euler path of the reference-measure density equation on [0, T]."""
    _check_step(h)
    steps = int(round(cfg.t_horizon / h))
    noise = _noise_for(seed, shared_noise, steps, h)
    c = cfg.coupling()
    states = np.empty((steps + 1, 2, 2), dtype=complex)
    states[0] = rho0.m
    state = rho0
    for k in range(steps):
        state = euler_step_density(state, h, noise[k], cfg.h0, c, project=project)
        states[k + 1] = state.m
    return SdePath(grid=np.arange(steps + 1) * h, states=states, noise=noise)


def simulate_physical(cfg: ModelConfig, rho0: DensityMatrix, h: float,
                      seed: int | None = None,
                      shared_noise: np.ndarray | None = None,
                      project: bool = True) -> SdePath:
    """Euler path of the innovation form, driven by the physical noise.

    The drift carries the correction g(rho) B(rho); the companion W path
    W_{k+1} = W_k + dW~_k + g_k h is reconstructed and stored.
    """
    _check_step(h)
    steps = int(round(cfg.t_horizon / h))
    noise = _noise_for(seed, shared_noise, steps, h)
    c = cfg.coupling()
    states = np.empty((steps + 1, 2, 2), dtype=complex)
    states[0] = rho0.m
    companion = np.empty(steps + 1)
    companion[0] = 0.0
    rho = rho0.m
    for k in range(steps):
        back = backaction(rho, c)
        g = _trace(rho @ (c + adjoint(c))).real
        raw = rho + h * (lindblad(rho, cfg.h0, c) + g * back) + noise[k] * back
        rho = project_positive(raw) if project else raw
        states[k + 1] = rho
        companion[k + 1] = companion[k] + noise[k] + g * h
    return SdePath(grid=np.arange(steps + 1) * h, states=states, noise=noise,
                   companion=companion)


def simulate_wave(cfg: ModelConfig, psi0: WaveFunction, h: float,
                  seed: int | None = None,
                  shared_noise: np.ndarray | None = None) -> WavePath:
    """Euler path of the wave form on [0, T], renormalized each step."""
    _check_step(h)
    steps = int(round(cfg.t_horizon / h))
    noise = _noise_for(seed, shared_noise, steps, h)
    c = cfg.coupling()
    vectors = np.empty((steps + 1, 2), dtype=complex)
    vectors[0] = psi0.v
    psi = psi0
    for k in range(steps):
        psi = wavefunction_step(psi, h, noise[k], cfg.h0, c)
        vectors[k + 1] = psi.v
    return WavePath(grid=np.arange(steps + 1) * h, vectors=vectors, noise=noise)


def innovation_path(path: SdePath, c: np.ndarray) -> np.ndarray:
    """Innovation values W~_k = W_k - sum_{i<k} g_i h reconstructed from a
    reference-measure path (bookkeeping inverse of the companion relation)."""
    g = _trace(path.states[:-1] @ (c + adjoint(c))).real
    out = np.empty(len(path.grid))
    out[0] = 0.0
    out[1:] = np.cumsum(path.noise - g * path.h)
    return out


def girsanov_weights(path: SdePath, c: np.ndarray) -> np.ndarray:
    """Exponential reweighting sequence along a path (left-point rule):
    Z_0 = 1, Z_{k+1} = Z_k exp(g_k dW_k - g_k^2 h / 2). All entries positive.
    """
    g = _trace(path.states[:-1] @ (c + adjoint(c))).real
    incr = g * path.noise - 0.5 * g * g * path.h
    out = np.empty(len(path.grid))
    out[0] = 1.0
    out[1:] = np.exp(np.cumsum(incr))
    return out


def master_evolve(cfg: ModelConfig, rho0: DensityMatrix, h: float,
                  variant: str = "cstar_c") -> MasterPath:
    """Classical RK4 on the averaged equation d nu/dt = L(nu).

    The scheme preserves the trace exactly (L is traceless and RK4 is a
    linear combination of L evaluations).
    """
    if h <= 0:
        raise ValueError("step size must be positive")
    steps = int(round(cfg.t_horizon / h))
    c = cfg.coupling()
    states = np.empty((steps + 1, 2, 2), dtype=complex)
    states[0] = rho0.m
    rho = rho0.m
    for k in range(steps):
        k1 = lindblad(rho, cfg.h0, c, variant)
        k2 = lindblad(rho + 0.5 * h * k1, cfg.h0, c, variant)
        k3 = lindblad(rho + 0.5 * h * k2, cfg.h0, c, variant)
        k4 = lindblad(rho + h * k3, cfg.h0, c, variant)
        rho = rho + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        states[k + 1] = rho
    return MasterPath(grid=np.arange(steps + 1) * h, states=states)


def master_on_grid(cfg: ModelConfig, rho0: DensityMatrix, n: int,
                   refine: int = 10) -> np.ndarray:
    """Averaged evolution sampled on the grid k/n, k = 0..floor(n T), via RK4
    at the finer step 1/(refine*n)."""
    m = int(np.floor(n * cfg.t_horizon))
    h = 1.0 / (refine * n)
    c = cfg.coupling()
    rho = rho0.m
    out = np.empty((m + 1, 2, 2), dtype=complex)
    out[0] = rho
    for k in range(m * refine):
        k1 = lindblad(rho, cfg.h0, c)
        k2 = lindblad(rho + 0.5 * h * k1, cfg.h0, c)
        k3 = lindblad(rho + 0.5 * h * k2, cfg.h0, c)
        k4 = lindblad(rho + h * k3, cfg.h0, c)
        rho = rho + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if (k + 1) % refine == 0:
            out[(k + 1) // refine] = rho
    return out


def sde_ensemble_final(cfg: ModelConfig, rho0: DensityMatrix, h: float,
                       num_paths: int, base_seed: int | None = None,
                       noise: np.ndarray | None = None,
                       physical: bool = False, with_weights: bool = False,
                       project: bool = True,
                       ) -> tuple[np.ndarray, np.ndarray | None]:
    """Vectorized ensemble integration keeping only final states.

    Path j draws its noise from derive_seed(base_seed, j) unless an explicit
    (num_paths, steps) increment array is supplied. Returns (final states,
    final weights or None); with ``physical`` the innovation-form drift is
    used and weights are unavailable.
    """
    _check_step(h)
    steps = int(round(cfg.t_horizon / h))
    if noise is None:
        if base_seed is None:
            raise ValueError("either base_seed or noise is required")
        noise = np.empty((num_paths, steps))
        for j in range(num_paths):
            noise[j] = generator_for(derive_seed(base_seed, j)).standard_normal(steps)
        noise *= np.sqrt(h)
    else:
        noise = np.asarray(noise, dtype=float)
        if noise.shape != (num_paths, steps):
            raise ValueError(f"noise must have shape {(num_paths, steps)}")
    c = cfg.coupling()
    cpc = c + adjoint(c)
    rho = np.broadcast_to(rho0.m, (num_paths, 2, 2)).copy()
    log_z = np.zeros(num_paths) if with_weights else None
    for k in range(steps):
        dw = noise[:, k][:, None, None]
        back = backaction(rho, c)
        drift = lindblad(rho, cfg.h0, c)
        if physical:
            g = _trace(rho @ cpc).real
            drift = drift + g[:, None, None] * back
        elif with_weights:
            g = _trace(rho @ cpc).real
            log_z += g * noise[:, k] - 0.5 * g * g * h
        raw = rho + h * drift + dw * back
        rho = _project_positive_batch(raw) if project else raw
    weights = np.exp(log_z) if with_weights else None
    return rho, weights


def wave_ensemble_final(cfg: ModelConfig, psi0: WaveFunction, h: float,
                        num_paths: int, base_seed: int | None = None,
                        noise: np.ndarray | None = None) -> np.ndarray:
    """Vectorized wave-form ensemble, final vectors only."""
    _check_step(h)
    steps = int(round(cfg.t_horizon / h))
    if noise is None:
        if base_seed is None:
            raise ValueError("either base_seed or noise is required")
        noise = np.empty((num_paths, steps))
        for j in range(num_paths):
            noise[j] = generator_for(derive_seed(base_seed, j)).standard_normal(steps)
        noise *= np.sqrt(h)
    else:
        noise = np.asarray(noise, dtype=float)
    c = cfg.coupling()
    cpc = c + adjoint(c)
    csc = adjoint(c) @ c
    psi = np.broadcast_to(psi0.v, (num_paths, 2)).copy()
    for k in range(steps):
        nu = 0.5 * np.einsum("ji,ji->j", psi.conj(), psi @ cpc.T).real
        dw = noise[:, k][:, None]
        drift = (psi @ (-1j * cfg.h0 - 0.5 * csc).T
                 + nu[:, None] * (psi @ c.T) - 0.5 * (nu * nu)[:, None] * psi)
        raw = psi + dw * (psi @ c.T - nu[:, None] * psi) + h * drift
        psi = raw / np.linalg.norm(raw, axis=1)[:, None]
    return psi


def sde_path_to_csv(path: SdePath, stream, timestamp: str | None = None,
                    wave: WavePath | None = None) -> None:
    """CSV dump: time, dW, rho entries, optional weight and psi columns."""
    if timestamp is not None:
        stream.write(f"# generated {timestamp}\n")
    header = "time,dW,rho_00_re,rho_01_re,rho_01_im,rho_11_re"
    if path.weights is not None:
        header += ",weight"
    if wave is not None:
        header += ",psi_0_re,psi_0_im,psi_1_re,psi_1_im"
    stream.write(header + "\n")
    for k in range(len(path.grid)):
        s = path.states[k]
        cells = [f"{path.grid[k]:.17g}",
                 "" if k == 0 else f"{path.noise[k - 1]:.17g}",
                 f"{s[0, 0].real:.17g}", f"{s[0, 1].real:.17g}",
                 f"{s[0, 1].imag:.17g}", f"{s[1, 1].real:.17g}"]
        if path.weights is not None:
            cells.append(f"{path.weights[k]:.17g}")
        if wave is not None:
            v = wave.vectors[k]
            cells += [f"{v[0].real:.17g}", f"{v[0].imag:.17g}",
                      f"{v[1].real:.17g}", f"{v[1].imag:.17g}"]
        stream.write(",".join(cells) + "\n")


def wave_path_to_csv(wave: WavePath, stream, timestamp: str | None = None) -> None:
    """CSV dump of a wave path; rho columns come from the outer product."""
    if timestamp is not None:
        stream.write(f"# generated {timestamp}\n")
    stream.write("time,dW,rho_00_re,rho_01_re,rho_01_im,rho_11_re,"
                 "psi_0_re,psi_0_im,psi_1_re,psi_1_im\n")
    for k in range(len(wave.grid)):
        v = wave.vectors[k]
        s = np.outer(v, v.conj())
        cells = [f"{wave.grid[k]:.17g}",
                 "" if k == 0 else f"{wave.noise[k - 1]:.17g}",
                 f"{s[0, 0].real:.17g}", f"{s[0, 1].real:.17g}",
                 f"{s[0, 1].imag:.17g}", f"{s[1, 1].real:.17g}",
                 f"{v[0].real:.17g}", f"{v[0].imag:.17g}",
                 f"{v[1].real:.17g}", f"{v[1].imag:.17g}"]
        stream.write(",".join(cells) + "\n")
