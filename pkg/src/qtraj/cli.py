"""Command-line front end.

Subcommands: simulate-discrete, simulate-sde, master, converge, girsanov.
Every command is a pure function of (config file, flags): identical inputs
produce byte-identical outputs, modulo the leading timestamp comment that
--no-timestamp suppresses. Exit codes: 0 success, 1 runtime failure, 2
usage/config error.

Config files are flat ``key = value`` text with # comments; flags override
file keys. Model keys:

    h0                four reals: h00, h01_re, h01_im, h11 (Hermitian)
    c                 eight reals: row-major re/im pairs of the coupling
    phi               observable mixing angle (radians)
    lambda0, lambda1  observable eigenvalues
    theta             coupling phase, folded in as c -> exp(i theta) c
    n                 interactions per unit time
    t_horizon         time horizon
    field_hamiltonian ground_energy | excited_energy

The initial state is the excited level |f1><f1| for every command.
"""

from __future__ import annotations

import argparse
import sys
from datetime import datetime, timezone

import numpy as np

from .convergence import EnsembleSpec, run_full_report
from .discrete import run_trajectory, trajectory_to_csv
from .model import DensityMatrix, ModelConfig, WaveFunction, make_observable
from .rng import derive_seed
from .sde import (
    MAX_SDE_STEP,
    master_evolve,
    sde_ensemble_final,
    sde_path_to_csv,
    simulate_belavkin,
    simulate_physical,
    simulate_wave,
    wave_path_to_csv,
)


class ConfigError(Exception):
    """Bad configuration; maps to exit code 2."""


_MODEL_KEYS = {"h0", "c", "phi", "lambda0", "lambda1", "theta", "n",
               "t_horizon", "field_hamiltonian"}

# damped two-level atom at resonance: sigma_z/2 splitting, lowering coupling
_DEFAULT_MODEL = {
    "h0": [0.5, 0.0, 0.0, -0.5],
    "c": [0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    "phi": float(np.pi / 2),
    "lambda0": 1.0,
    "lambda1": -1.0,
    "theta": 0.0,
    "n": 100,
    "t_horizon": 1.0,
    "field_hamiltonian": "excited_energy",
}

EXCITED = DensityMatrix(np.diag([0.0, 1.0]).astype(complex))


def _parse_config_file(path: str) -> dict:
    values: dict = {}
    try:
        with open(path) as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
                key, raw = (part.strip() for part in line.split("=", 1))
                if key not in _MODEL_KEYS:
                    raise ConfigError(f"{path}:{lineno}: unknown key '{key}'")
                values[key] = raw
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from exc
    return values


def _floats(raw, count: int, key: str) -> list[float]:
    if isinstance(raw, list):
        vals = [float(v) for v in raw]
    else:
        vals = [float(tok) for tok in raw.replace(",", " ").split()]
    if len(vals) != count:
        raise ConfigError(f"key '{key}' needs {count} reals, got {len(vals)}")
    return vals


def build_model(file_values: dict, overrides: dict) -> ModelConfig:
    merged = dict(_DEFAULT_MODEL)
    merged.update(file_values)
    merged.update({k: v for k, v in overrides.items() if v is not None})
    try:
        h0_vals = _floats(merged["h0"], 4, "h0")
        c_vals = _floats(merged["c"], 8, "c")
        h0 = np.array([[h0_vals[0], h0_vals[1] + 1j * h0_vals[2]],
                       [h0_vals[1] - 1j * h0_vals[2], h0_vals[3]]], dtype=complex)
        c = np.array(c_vals[0::2], dtype=float).reshape(2, 2) \
            + 1j * np.array(c_vals[1::2], dtype=float).reshape(2, 2)
        obs = make_observable(float(merged["phi"]), float(merged["lambda0"]),
                              float(merged["lambda1"]))
        return ModelConfig(h0=h0, c=c, observable=obs, n=int(merged["n"]),
                           t_horizon=float(merged["t_horizon"]),
                           theta=float(merged["theta"]),
                           field_hamiltonian=str(merged["field_hamiltonian"]))
    except ConfigError:
        raise
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"bad model configuration: {exc}") from exc


def _timestamp(args) -> str | None:
    if args.no_timestamp:
        return None
    return datetime.now(timezone.utc).isoformat()


def _load_model(args, **overrides) -> ModelConfig:
    file_values = _parse_config_file(args.config) if args.config else {}
    return build_model(file_values, overrides)


def _cmd_simulate_discrete(args) -> int:
    cfg = _load_model(args, n=args.n)
    record = run_trajectory(cfg, EXCITED, args.seed)
    with open(args.out, "w") as fh:
        trajectory_to_csv(record, fh, timestamp=_timestamp(args))
    counts = np.bincount(record.outcomes, minlength=2)
    final = record.states[-1]
    print(f"wrote {args.out}: {record.steps + 1} state rows")
    print(f"outcome counts: 0 -> {counts[0]}, 1 -> {counts[1]}")
    print(f"final state: rho_00 = {final[0, 0].real:.6f}, "
          f"rho_11 = {final[1, 1].real:.6f}, "
          f"rho_01 = {final[0, 1].real:.6f}{final[0, 1].imag:+.6f}j")
    return 0


def _cmd_simulate_sde(args) -> int:
    cfg = _load_model(args)
    if not 0 < args.h <= MAX_SDE_STEP:
        raise ConfigError(f"--h must be in (0, {MAX_SDE_STEP:g}], got {args.h:g}")
    with open(args.out, "w") as fh:
        if args.form == "wave":
            psi0 = WaveFunction(np.array([0.0, 1.0], dtype=complex))
            wave = simulate_wave(cfg, psi0, args.h, args.seed)
            wave_path_to_csv(wave, fh, timestamp=_timestamp(args))
            rows = len(wave.grid)
        else:
            simulate = simulate_physical if args.form == "physical" else simulate_belavkin
            path = simulate(cfg, EXCITED, args.h, args.seed)
            sde_path_to_csv(path, fh, timestamp=_timestamp(args))
            rows = len(path.grid)
    print(f"wrote {args.out}: {rows} rows ({args.form} form, h = {args.h:g})")
    return 0


def _cmd_master(args) -> int:
    cfg = _load_model(args)
    if args.h <= 0:
        raise ConfigError(f"--h must be positive, got {args.h:g}")
    path = master_evolve(cfg, EXCITED, args.h)
    with open(args.out, "w") as fh:
        ts = _timestamp(args)
        if ts is not None:
            fh.write(f"# generated {ts}\n")
        fh.write("time,rho_00_re,rho_01_re,rho_01_im,rho_11_re\n")
        for k in range(len(path.grid)):
            s = path.states[k]
            fh.write(f"{path.grid[k]:.17g},{s[0, 0].real:.17g},"
                     f"{s[0, 1].real:.17g},{s[0, 1].imag:.17g},"
                     f"{s[1, 1].real:.17g}\n")
    final = path.states[-1]
    print(f"wrote {args.out}: {len(path.grid)} rows")
    print(f"final populations: ground {final[0, 0].real:.8f}, "
          f"excited {final[1, 1].real:.8f}")
    return 0


def _cmd_converge(args) -> int:
    cfg = _load_model(args)
    n_values = tuple(int(tok) for tok in args.n_values.split(","))
    sde_step = args.sde_step
    if sde_step is None:
        sde_step = min(5e-4, 1.0 / (10.0 * max(n_values)))
    spec = EnsembleSpec(cfg=cfg, rho0=EXCITED,
                        num_trajectories=args.trajectories,
                        base_seed=args.seed, n_values=n_values,
                        sde_step=sde_step)
    report = run_full_report(spec, t=min(1.0, cfg.t_horizon))
    with open(args.out, "w") as fh:
        report.to_csv(fh, timestamp=_timestamp(args))
    print(f"wrote {args.out}")
    print(report.summary())
    return 0


def _cmd_girsanov(args) -> int:
    cfg = _load_model(args)
    if not 0 < args.h <= MAX_SDE_STEP:
        raise ConfigError(f"--h must be in (0, {MAX_SDE_STEP:g}], got {args.h:g}")
    m = args.trajectories
    ref_seed = derive_seed(args.seed, 1)
    phys_seed = derive_seed(args.seed, 2)
    finals, weights = sde_ensemble_final(cfg, EXCITED, args.h, m, ref_seed,
                                         with_weights=True)
    phys_finals, _ = sde_ensemble_final(cfg, EXCITED, args.h, m, phys_seed,
                                        physical=True)
    sz = np.array([[1, 0], [0, -1]], dtype=complex)
    f_ref = np.einsum("jab,ba->j", finals, sz).real
    f_phys = np.einsum("jab,ba->j", phys_finals, sz).real
    mean_z = float(np.mean(weights))
    se_z = float(np.std(weights, ddof=1) / np.sqrt(m))
    reweighted = float(np.mean(weights * f_ref))
    se_rw = float(np.std(weights * f_ref, ddof=1) / np.sqrt(m))
    physical = float(np.mean(f_phys))
    se_ph = float(np.std(f_phys, ddof=1) / np.sqrt(m))
    with open(args.out, "w") as fh:
        ts = _timestamp(args)
        if ts is not None:
            fh.write(f"# generated {ts}\n")
        fh.write("quantity,value\n")
        for name, val in [("mean_weight", mean_z), ("se_weight", se_z),
                          ("reweighted_mean_sz", reweighted),
                          ("se_reweighted", se_rw),
                          ("physical_mean_sz", physical),
                          ("se_physical", se_ph)]:
            fh.write(f"{name},{val:.17g}\n")
    print(f"wrote {args.out}")
    print(f"E[Z_T] = {mean_z:.5f} +- {se_z:.5f} (target 1)")
    print(f"reweighted <sigma_z> = {reweighted:.5f} +- {se_rw:.5f}")
    print(f"physical  <sigma_z> = {physical:.5f} +- {se_ph:.5f}")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qtraj",
        description="Quantum trajectories of a monitored two-level system: "
                    "measurement chain, diffusive limit, convergence checks.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, default_out):
        p.add_argument("--config", help="flat key = value model file")
        p.add_argument("--seed", type=int, required=True,
                       help="64-bit master seed (required)")
        p.add_argument("--out", default=default_out, help="output CSV path")
        p.add_argument("--no-timestamp", action="store_true",
                       help="omit the timestamp comment for byte-identical reruns")

    p = sub.add_parser("simulate-discrete", help="one measurement-chain trajectory")
    common(p, "simulate-discrete.csv")
    p.add_argument("--n", type=int, help="override interactions per unit time")
    p.set_defaults(func=_cmd_simulate_discrete)

    p = sub.add_parser("simulate-sde", help="one diffusive trajectory")
    common(p, "simulate-sde.csv")
    p.add_argument("--form", choices=["belavkin", "physical", "wave"],
                   default="belavkin")
    p.add_argument("--h", type=float, default=1e-3, help="Euler step size")
    p.set_defaults(func=_cmd_simulate_sde)

    p = sub.add_parser("master", help="deterministic averaged evolution")
    common(p, "master.csv")
    p.add_argument("--h", type=float, default=1e-3, help="RK4 step size")
    p.set_defaults(func=_cmd_master)

    p = sub.add_parser("converge", help="full convergence diagnostic sweep")
    common(p, "converge.csv")
    p.add_argument("--n-values", default="20,80",
                   help="comma-separated discretizations to sweep")
    p.add_argument("--trajectories", type=int, default=1000)
    p.add_argument("--sde-step", type=float, default=None)
    p.set_defaults(func=_cmd_converge)

    p = sub.add_parser("girsanov", help="reweighting cross-validation")
    common(p, "girsanov.csv")
    p.add_argument("--trajectories", type=int, default=5000)
    p.add_argument("--h", type=float, default=1e-3)
    p.set_defaults(func=_cmd_girsanov)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
