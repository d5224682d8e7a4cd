"""Command-line scenario runner.

``cmbec <mode> [--config FILE] [flags]``; the subcommand selects the mode
and flags override values from the file. Exit status: 0 success,
2 invalid configuration, 3 solver divergence, 4 oracle mismatch.
"""

from __future__ import annotations

import argparse
import logging
import math
import platform
import sys
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .config import MODES, SchemaError, Scenario, load
from .core import Lattice, PhysicalParams, build_lattice, hopping_matrix, lattice_for, oscillator_spread
from .gpe import ConvergenceError, CoverageError, solve_ground_state, thomas_fermi_mu
from .io import CheckpointError, config_hash, read_checkpoint, write_checkpoint, write_csv, write_manifest
from .meanfield import MomentState, integrate_moments, eta_sweep, initial_moments
from .observables import cloud_variance, density_profile, eta_with_error, g2_curve, DensityFloorError
from .oracle import (FockConfig, analytic_moments_noninteracting, cached_master_equation,
                     master_equation_evolve, single_particle_evolve)
from .positivep import DivergenceError, SimConfig, init_coherent, measurement_kick, run_ensemble
from .positivep.backend import DEFAULT as DEFAULT_KERNEL

log = logging.getLogger("cmbec")

EXIT_OK, EXIT_SCHEMA, EXIT_DIVERGED, EXIT_MISMATCH = 0, 2, 3, 4
MAX_MOMENT_ROWS = 500


def _tag(v: float) -> str:
    return f"{v:g}"


def lattice_for_sweep(scn: Scenario, gN: float) -> Lattice:
    """One lattice per coupling, wide enough for the most strongly measured cloud."""
    lat = scn["lattice"]
    if lat["half_width"] is not None:
        return lattice_for(lat["dx"], lat["half_width"], lat["odd"])
    n = scn["physics"]["n_atoms"]
    t = scn["simulation"]["t_final"]
    spread = max(
        oscillator_spread(PhysicalParams.from_gN(gN, k, n), t)
        for k in [0.0, *scn.kappa_values]
    )
    return lattice_for(lat["dx"], 4.0 * math.sqrt(spread) + 2.0, lat["odd"])


def sim_config(scn: Scenario, kappa_tilde: float = 0.0) -> SimConfig:
    s = scn["simulation"]
    return SimConfig(
        dt=s["dt"], n_trajectories=s["n_trajectories"], t_final=s["t_final"], seed=s["seed"],
        implicit_iterations=s["implicit_iterations"], divergence_threshold=s["divergence_threshold"],
        scheme=s["scheme"], chunk_size=s["chunk_size"], n_threads=s["threads"],
    )


class Run:
    """Collects outputs and diagnostics for the manifest."""

    def __init__(self, scn: Scenario):
        self.scn = scn
        self.out = scn.out_dir
        self.out.mkdir(parents=True, exist_ok=True)
        self.files: list[str] = []
        self.diagnostics: dict = {}
        self.status = EXIT_OK

    def csv(self, name, header, rows):
        write_csv(self.out / name, header, rows)
        self.files.append(name)


# --- modes ---------------------------------------------------------------------

def run_gpe(run: Run) -> None:
    scn = run.scn
    rows = []
    for gN in scn.g_values:
        params = PhysicalParams.from_gN(gN, 0.0, scn["physics"]["n_atoms"])
        lat = lattice_for_sweep(scn, gN)
        gs = solve_ground_state(lat, params, dtau=scn["gpe"]["dtau"], tol=scn["gpe"]["tol"])
        dens = np.abs(gs.amplitudes) ** 2
        run.csv(f"gpe_g{_tag(gN)}.csv", ["x", "phi", "density"],
                zip(lat.positions, gs.amplitudes.real, dens))
        rows.append((gN, gs.chemical_potential, thomas_fermi_mu(gN), gs.variance, gs.residual,
                     lat.m_cells))
    run.csv("gpe_summary.csv",
            ["g1dN", "mu", "mu_thomas_fermi", "variance", "residual", "m_cells"], rows)


def run_meanfield(run: Run) -> list[tuple]:
    scn = run.scn
    mf = scn["meanfield"]
    n = scn["physics"]["n_atoms"]
    t = scn["simulation"]["t_final"]
    dx = scn["lattice"]["dx"]
    cells = eta_sweep(scn.g_values, scn.kappa_values, t, n, dx, mf["dt"], mf["closure"])
    rows = [(c.gN, c.kappa_tilde, c.eta, 0.0, "meanfield") for c in cells]
    run.csv("eta_meanfield.csv", ["g1dN", "kappa_tilde", "eta", "eta_stderr", "tier"], rows)
    run.diagnostics["meanfield"] = [
        {"g1dN": c.gN, "kappa_tilde": c.kappa_tilde, "valid": c.valid, "error": c.error}
        for c in cells
    ]
    for gN in scn.g_values:
        try:
            init = initial_moments(gN, n, dx)
        except (ValueError, RuntimeError):
            continue
        for k in [0.0, *scn.kappa_values]:
            try:
                traj = integrate_moments(init, PhysicalParams.from_gN(gN, k, n), t, mf["dt"],
                                         mf["closure"])
            except ArithmeticError:
                continue
            stride = max(1, math.ceil((len(traj.times) - 1) / MAX_MOMENT_ROWS))
            idx = list(range(0, len(traj.times), stride))
            if idx[-1] != len(traj.times) - 1:
                idx.append(len(traj.times) - 1)
            run.csv(f"moments_g{_tag(gN)}_k{_tag(k)}.csv", ["t", "var_x", "var_p", "cov_xp"],
                    ([traj.times[i], *traj.states[i]] for i in idx))
    return rows


def _ensemble(run: Run, gs, params, lat, cfg, snaps, name):
    """Run one ensemble, optionally resuming from and writing a checkpoint."""
    resume, on_unit = None, None
    if run.scn["simulation"]["checkpoint"]:
        resumable = {"params": [params.n_atoms, params.g1d, params.kappa_tilde],
                     "m_cells": lat.m_cells, "dx": lat.dx, "snapshots": snaps,
                     "config": cfg.hashable()}
        digest = config_hash(resumable)
        path = run.out / f"{name}.ckpt"
        if path.exists():
            try:
                resume, _ = read_checkpoint(path, digest)
                if resume[0].count > cfg.n_trajectories:
                    resume = None
            except CheckpointError as exc:
                log.warning("ignoring checkpoint %s: %s", path, exc)
                resume = None

        def on_unit(accs):
            write_checkpoint(path, accs, digest)

    return run_ensemble(gs, params, lat, cfg, snaps, resume=resume, on_unit=on_unit)


def run_positivep(run: Run) -> list[tuple]:
    scn = run.scn
    n = scn["physics"]["n_atoms"]
    t_final = scn["simulation"]["t_final"]
    snaps = sorted(set((scn["simulation"]["snapshots"] or []) + [t_final]))
    eta_rows, diag, any_ok = [], [], False
    for gN in scn.g_values:
        lat = lattice_for_sweep(scn, gN)
        gs = solve_ground_state(lat, PhysicalParams.from_gN(gN, 0.0, n),
                                dtau=scn["gpe"]["dtau"], tol=scn["gpe"]["tol"])
        results = {}
        for k in [0.0, *scn.kappa_values]:
            params = PhysicalParams.from_gN(gN, k, n)
            cfg = sim_config(scn)
            entry = {"g1dN": gN, "kappa_tilde": k, "m_cells": lat.m_cells,
                     "n_trajectories": cfg.n_trajectories, "diverged": False,
                     "measurement_kick": measurement_kick(params, lat, cfg.step_size)}
            name = f"g{_tag(gN)}_k{_tag(k)}"
            try:
                res = _ensemble(run, gs, params, lat, cfg, snaps, name)
            except DivergenceError as exc:
                entry.update(diverged=True, events=exc.events[:20], error=str(exc))
                diag.append(entry)
                log.warning("g1dN=%g kappa=%g: %s", gN, k, exc)
                continue
            any_ok = True
            acc = res.final
            tot, tot_err = acc.total_number()
            entry.update(total_number=tot, total_number_rel_stderr=tot_err / tot,
                         imaginary_purity=acc.imaginary_purity(),
                         max_conjugate_deviation=acc.max_conj_dev, max_abs_n=acc.max_abs_n)
            diag.append(entry)
            for snap in res.snapshots:
                prof = density_profile(snap, lat)
                run.csv(f"snapshot_{name}_t{snap.t:.6f}.csv",
                        ["x", "mean_density", "stderr_density"], zip(prof.x, prof.n, prof.stderr))
            prof = density_profile(acc, lat)
            results[k] = (prof, cloud_variance(prof))
            if k > 0 and lat.m_cells % 2:
                try:
                    g2 = g2_curve(acc, lat)
                    run.csv(f"g2_{name}.csv", ["x", "g2", "g2_err", "valid"],
                            zip(g2.x, g2.g2, g2.stderr, g2.valid))
                except DensityFloorError as exc:
                    entry["g2_error"] = str(exc)
        base = results.get(0.0)
        for k in scn.kappa_values:
            if base is None or k not in results:
                eta_rows.append((gN, k, math.nan, math.nan, "positivep"))
                continue
            (pm, (vm, em)), (pn, (vn, en)) = results[k], base
            eta_rows.append((gN, k, *eta_with_error(vm, em, vn, en), "positivep"))
            run.csv(f"density_g{_tag(gN)}_k{_tag(k)}.csv",
                    ["x", "n_meas", "n_meas_err", "n_nomeas", "n_nomeas_err"],
                    zip(pm.x, pm.n, pm.stderr, pn.n, pn.stderr))
    run.csv("eta_positivep.csv", ["g1dN", "kappa_tilde", "eta", "eta_stderr", "tier"], eta_rows)
    run.diagnostics["positivep"] = diag
    if not any_ok:
        run.status = EXIT_DIVERGED
    return eta_rows


def run_compare(run: Run) -> None:
    rows = run_meanfield(run) + run_positivep(run)
    run.csv("eta_compare.csv", ["g1dN", "kappa_tilde", "eta", "eta_stderr", "tier"], rows)


# Small instance on which the stochastic solver must reproduce the master equation.
CHECK_INSTANCE = {"m_cells": 3, "dx": 1.0, "n_atoms": 2.0, "g1d": 0.5, "kappa_tilde": 0.5, "t": 0.1}


def run_oracle_check(run: Run, fixtures: Path | None = None, regenerate: bool = False) -> None:
    scn = run.scn
    orc = scn["oracle"]
    z_max = orc["z_max"]
    rows = []

    def check(name, idx, est, err, ref, tol=None):
        z = abs(est - ref) / err if err > 0 else (0.0 if est == ref else math.inf)
        ok = abs(est - ref) <= tol if tol is not None else z <= z_max
        rows.append((name, idx, est, err, ref, z, ok))

    # stochastic tier against the truncated-Fock master equation
    ci = CHECK_INSTANCE
    lat = build_lattice(ci["m_cells"], ci["dx"])
    params = PhysicalParams(ci["n_atoms"], ci["g1d"], ci["kappa_tilde"])
    gs = solve_ground_state(lat, params, check_coverage=False)
    amps = init_coherent(gs, lat).alpha
    fock = FockConfig(ci["m_cells"], orc["n_max"])
    ref = cached_master_equation(fixtures or run.out / "fixtures", fock, params, lat, amps,
                                 ci["t"], regenerate)
    cfg = SimConfig(dt=orc["dt"], n_trajectories=orc["trajectories"], t_final=ci["t"],
                    seed=scn["simulation"]["seed"], n_threads=scn["simulation"]["threads"],
                    implicit_iterations=scn["simulation"]["implicit_iterations"])
    acc = run_ensemble(gs, params, lat, cfg).final
    mean, err = acc.mean_re, acc.stderr_re()
    m = lat.m_cells
    for i in range(m):
        check("n", i, mean[i], err[i], ref.occupations[i])
    check("g2_numerator", m // 2, mean[m + m // 2], err[m + m // 2], ref.g2_numerator[m // 2])

    # linear limit: master equation against the single-particle propagator
    free = PhysicalParams(1.0, 0.0, 0.0)
    lat2 = build_lattice(2, 1.0)
    a0 = np.array([0.9, 0.3 + 0.2j])
    me = master_equation_evolve(FockConfig(2, 12), free, lat2, a0, 0.7)
    sp = np.abs(single_particle_evolve(hopping_matrix(lat2), a0, 0.7)) ** 2
    for i in range(2):
        check("linear_limit_n", i, me.occupations[i], 0.0, sp[i], tol=1e-6)

    # moment closure at g = 0 against the analytic solution
    init = MomentState(0.5, 0.5, 0.0)
    mt = integrate_moments(init, PhysicalParams(100.0, 0.0, 1.0), math.pi / 2, 1e-3,
                           "consistent").final
    an = analytic_moments_noninteracting(math.pi / 2, 1.0, init)
    for j, name in enumerate(("var_x", "var_p", "cov_xp")):
        check(f"moments_{name}", 0, mt[j], 0.0, an[j], tol=1e-8)

    run.csv("oracle_check.csv", ["quantity", "index", "estimate", "stderr", "reference", "z", "pass"],
            rows)
    failed = [f"{r[0]}[{r[1]}]" for r in rows if not r[6]]
    run.diagnostics["oracle_check"] = {"failed": failed, "checks": len(rows)}
    if failed:
        run.status = EXIT_MISMATCH


# --- entry points ----------------------------------------------------------------

def run_scenario(scn: Scenario, fixtures=None, regenerate=False) -> int:
    t0 = time.perf_counter()
    run = Run(scn)
    try:
        if scn.mode == "gpe":
            run_gpe(run)
        elif scn.mode == "meanfield":
            run_meanfield(run)
        elif scn.mode == "positivep":
            run_positivep(run)
        elif scn.mode == "compare":
            run_compare(run)
        else:
            run_oracle_check(run, fixtures, regenerate)
    except DivergenceError as exc:
        run.diagnostics["error"] = str(exc)
        run.status = EXIT_DIVERGED
    except (CoverageError, ConvergenceError) as exc:
        run.diagnostics["error"] = str(exc)
        run.status = EXIT_SCHEMA if isinstance(exc, CoverageError) else EXIT_DIVERGED
    write_manifest(run.out / "manifest.json", {
        "mode": scn.mode,
        "config": scn.data,
        "config_hash": config_hash(scn.data),
        "seed": scn["simulation"]["seed"],
        "versions": {"cmbec": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                     "python": platform.python_version(), "kernel": DEFAULT_KERNEL},
        "wall_time_s": time.perf_counter() - t0,
        "exit_status": run.status,
        "files": run.files,
        "diagnostics": run.diagnostics,
    })
    return run.status


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cmbec", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"cmbec {__version__}")
    sub = p.add_subparsers(dest="mode", required=True)
    helps = {
        "gpe": "ground states and chemical potentials over the coupling grid",
        "meanfield": "moment equations and the relative spreading eta",
        "positivep": "stochastic ensembles: profiles, g2 and eta",
        "compare": "mean-field and positive-P eta side by side",
        "oracle-check": "validate the solvers against exact references",
    }
    for mode in MODES:
        s = sub.add_parser(mode, help=helps[mode])
        s.add_argument("--config", type=Path, help="YAML scenario file")
        s.add_argument("--seed", type=int, help="master seed (simulation.seed)")
        s.add_argument("--threads", type=int, help="worker threads (simulation.threads)")
        s.add_argument("--out-dir", help="output directory (output.dir)")
        s.add_argument("--trajectories", type=int, help="simulation.n_trajectories")
        s.add_argument("--dt", type=float, help="simulation.dt")
        s.add_argument("--t-final", type=float, help="simulation.t_final")
        s.add_argument("-v", "--verbose", action="store_true", help="log progress")
        if mode == "oracle-check":
            s.add_argument("--fixtures", type=Path, help="directory of archived oracle values")
            s.add_argument("--regenerate", action="store_true", help="recompute oracle fixtures")
    return p


FLAG_KEYS = {
    "seed": "simulation.seed",
    "threads": "simulation.threads",
    "out_dir": "output.dir",
    "trajectories": "simulation.n_trajectories",
    "dt": "simulation.dt",
    "t_final": "simulation.t_final",
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = {"mode": args.mode}
    for flag, key in FLAG_KEYS.items():
        val = getattr(args, flag)
        if val is not None:
            overrides[key] = val
    if args.mode == "oracle-check":
        if args.trajectories is not None:
            overrides["oracle.trajectories"] = args.trajectories
        if args.dt is not None:
            overrides["oracle.dt"] = args.dt
    try:
        scn = load(args.config, overrides)
    except SchemaError as exc:
        print(f"cmbec: config error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    status = run_scenario(scn, getattr(args, "fixtures", None), getattr(args, "regenerate", False))
    if status:
        print(f"cmbec: {scn.mode} finished with status {status}; see manifest.json", file=sys.stderr)
    return status


if __name__ == "__main__":
    sys.exit(main())
