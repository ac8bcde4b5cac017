"""Command-line runner: ``asymflow run|verify|sweep --config <path>``.

Exit codes: 0 success, 1 runtime or usage error, 2 a verification failed.
Outputs are deterministic for a fixed config and seed, except the
``runtime_ms`` column of the sweep table.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from .analysis import (certify_convexity, ode_oracle, verify_energy_identity,
                       verify_exponential_decay, verify_slope_regularization)
from .config import ExperimentConfig, from_mapping, load_config
from .envelope import envelope_monotonicity_check
from .errors import AsymflowError, ConfigError, UnsupportedOperationError
from .metric_core import check_axioms, sample_points
from .mms import (Partition, a_priori_check, limit_trajectory, run_scheme, scheme_trajectory,
                  step_energy_terms, sup_distance)
from .potentials import build_potential
from .reports import Report, _plain, make_report
from .spaces import space_from_descriptor

log = logging.getLogger("asymflow")

SCHEMA_VERSION = 1
TRAJECTORY_COLUMNS = ("t", "coord_*", "phi", "slope", "speed")
ENERGY_TOL = 1e-3


# ---------------------------------------------------------------------------
# experiment assembly


def build_experiment(cfg: ExperimentConfig):
    """Space, potential and (optional) convexity certificate for a config."""
    space = space_from_descriptor(cfg.space)
    params = {k: v for k, v in cfg.potential.items() if k != "name"}
    phi = build_potential(cfg.potential["name"], space, p=cfg.p, **params)
    cert = None
    if cfg.lam is not None:
        cert = certify_convexity(phi, space, cfg.p, cfg.lam, seed=cfg.seed)
        # an unverified request leaves the potential uncertified
        phi = phi.with_certificate(cfg.lam) if cert.verified else replace(phi, certificate=None)
    return space, phi, cert


def _member(cfg_dict, tau):
    """Worker entry point: one sweep member, rebuilt from a plain config mapping."""
    cfg = from_mapping(cfg_dict)
    space, phi, _ = build_experiment(cfg)
    start = time.perf_counter()
    sol = run_scheme(phi, space, np.array(cfg.x0), Partition.uniform(cfg.T, tau), cfg.solver)
    return sol, (time.perf_counter() - start) * 1e3


def _run_sweep(cfg, jobs):
    cfg_dict = cfg.to_dict()
    if jobs > 1 and len(cfg.tau_sweep) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_member, cfg_dict, tau) for tau in cfg.tau_sweep]
            # merged in sweep order regardless of completion order
            return [f.result() for f in futures]
    return [_member(cfg_dict, tau) for tau in cfg.tau_sweep]


# ---------------------------------------------------------------------------
# output helpers


def _fmt(x):
    return format(float(x), ".17g")


def _atomic_write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    with os.fdopen(fd, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def trajectory_csv(traj) -> str:
    header = ["t"] + [f"coord_{i}" for i in range(traj.dim)] + ["phi", "slope", "speed"]
    lines = [",".join(header)]
    for t, x, f, s, v in zip(traj.times, traj.points, traj.phi_values, traj.slope_values,
                             traj.speed_values):
        lines.append(",".join([_fmt(t)] + [_fmt(c) for c in x] + [_fmt(f), _fmt(s), _fmt(v)]))
    return "\n".join(lines) + "\n"


def _json(obj) -> str:
    return json.dumps(_plain(obj), sort_keys=True, indent=2) + "\n"


# ---------------------------------------------------------------------------
# commands


def _oracle(phi, space, cfg):
    if not phi.smooth or space.tangent is None:
        return None
    return ode_oracle(phi, space, np.array(cfg.x0), cfg.T)


def cmd_run(cfg: ExperimentConfig, jobs: int = 1) -> int:
    space, phi, cert = build_experiment(cfg)
    members = _run_sweep(cfg, jobs)
    sols = [m[0] for m in members]
    traj, conv = limit_trajectory(phi, space, np.array(cfg.x0), cfg.T, cfg.tau_sweep, cfg.solver,
                                  solutions=sols)
    checks = [make_report("energy_identity", [conv.energy_residual - ENERGY_TOL], 0.0,
                          n_samples=len(traj), residual=conv.energy_residual)]
    finest = sols[-1]
    x_star = phi.known_minimizer if phi.known_minimizer is not None else np.array(cfg.x0)
    checks.append(a_priori_check(phi, space, finest, x_star, S_bound=float("inf"), T=cfg.T,
                                 solver_cfg=cfg.solver))
    oracle = _oracle(phi, space, cfg)
    summary = {"schema": SCHEMA_VERSION, "command": "run", "space": space.name,
               "potential": phi.name, "p": cfg.p, "T": cfg.T,
               "sweep": conv.to_dict(), "energy_residual": conv.energy_residual,
               "certificate": None if phi.certificate is None else {"p": phi.certificate[0],
                                                                   "lambda": phi.certificate[1]}}
    if cert is not None:
        summary["certificate_check"] = {"lambda": cert.lam, "verified": cert.verified,
                                        "max_violation": cert.max_violation}
    out = Path(cfg.out_dir)
    if oracle is not None:
        grid = np.linspace(0.0, cfg.T, 2001)
        summary["oracle_sup_error"] = sup_distance(space, traj, oracle, grid, ("constant", "linear"))
        summary["oracle_flags"] = oracle.flags
        _atomic_write(out / f"{cfg.prefix}_ode.csv", trajectory_csv(oracle))
    decay_traj = oracle if oracle is not None else None
    if phi.certificate is not None and phi.known_inf is not None and decay_traj is not None:
        rep = verify_exponential_decay(decay_traj, phi, space)
        checks.append(rep)
        summary["decay_margin"] = -float(rep.details["parts"]["phi_decay"])
        try:
            checks.append(verify_slope_regularization(decay_traj, phi, space, solver_cfg=cfg.solver))
        except UnsupportedOperationError as exc:
            summary["regularization"] = f"skipped: {exc}"
    summary["checks"] = [c.to_dict() for c in checks]
    summary["pass"] = all(c.passed for c in checks)
    _atomic_write(out / f"{cfg.prefix}_trajectory.csv", trajectory_csv(traj))
    _atomic_write(out / f"{cfg.prefix}_summary.json", _json(summary))
    print(f"run: {'pass' if summary['pass'] else 'FAIL'} "
          f"(energy residual {conv.energy_residual:.3e}); outputs in {out}")
    return 0 if summary["pass"] else 2


def _legendre_report(space, seed, n=1000) -> Report:
    T = space.tangent
    rng = np.random.default_rng(seed)
    X = sample_points(space, n, rng, radius=min(space.sampling_radius, 0.9)
                      if space.name == "funk" else None)
    viol = []
    for x in X:
        v = rng.normal(size=space.dim)
        c = rng.uniform(0.1, 10.0)
        Fv = T.F(x, v)
        viol.append(abs(T.F(x, c * v) - c * Fv) / (1 + c * Fv) - 1e-12)
        zeta = T.legendre(x, v)
        viol.append(abs(T.F_dual(x, zeta) - Fv) - 1e-9 * (1 + Fv))
        viol.append(abs(float(zeta @ v) - Fv ** 2) - 1e-9 * (1 + Fv ** 2))
        w = T.legendre_inv(x, zeta)
        viol.append(float(np.linalg.norm(w - v)) - 1e-8 * (1 + float(np.linalg.norm(v))))
        eta = rng.normal(size=space.dim)
        viol.append(float(eta @ v) - Fv * T.F_dual(x, eta) - 1e-12 * (1 + Fv))
    return make_report("legendre_consistency", viol, 0.0, n_samples=n)


def _discrete_energy_report(phi, space, cfg, n_steps=5) -> Report:
    tau = cfg.tau_sweep[0]
    n = min(n_steps, len(Partition.uniform(cfg.T, tau)))
    sol = run_scheme(phi, space, np.array(cfg.x0), Partition((tau,) * n), cfg.solver)
    viol = []
    for k in range(1, n + 1):
        move, dissip, drop = step_energy_terms(phi, space, sol, k, order=8, solver_cfg=cfg.solver)
        viol.append(abs(move + dissip - drop) - 1e-4 * (1 + abs(sol.phis[k - 1])))
    return make_report("discrete_energy_identity", viol, 0.0, n_samples=n)


def run_checks(cfg: ExperimentConfig, jobs: int = 1):
    space = space_from_descriptor(cfg.space)
    reports = []
    if "axioms" in cfg.checks:
        ax = check_axioms(space, 1000, cfg.seed)
        d = ax.to_dict()
        reports.append(Report(d["check_name"], d["max_violation"], d["n_samples"], d["pass"],
                              d["details"]))
    if set(cfg.checks) == {"axioms"}:
        return reports
    space, phi, cert = build_experiment(cfg)
    if "legendre" in cfg.checks and space.tangent is not None:
        reports.append(_legendre_report(space, cfg.seed))
    x0 = np.array(cfg.x0)
    if "envelope_monotonicity" in cfg.checks:
        reports.append(envelope_monotonicity_check(phi, space, x0, sorted(cfg.tau_sweep), cfg.solver))
    if "discrete_energy" in cfg.checks:
        reports.append(_discrete_energy_report(phi, space, cfg))
    if "convexity" in cfg.checks and (cert is not None or phi.certificate is not None):
        c = cert or certify_convexity(phi, space, cfg.p, phi.certificate[1], seed=cfg.seed)
        reports.append(Report("convexity_certificate", c.max_violation, c.n_samples, c.verified,
                              {"lambda": c.lam, "worst": c.details["worst"]}))
    need_oracle = {"decay", "regularization"} & set(cfg.checks)
    oracle = _oracle(phi, space, cfg) if need_oracle else None
    if oracle is not None and phi.certificate is not None and phi.known_inf is not None:
        if "decay" in cfg.checks:
            reports.append(verify_exponential_decay(oracle, phi, space))
        if "regularization" in cfg.checks:
            try:
                reports.append(verify_slope_regularization(oracle, phi, space, solver_cfg=cfg.solver))
            except UnsupportedOperationError as exc:
                log.info("regularization skipped: %s", exc)
    if "sweep" in cfg.checks and len(cfg.tau_sweep) > 1:
        sols = [m[0] for m in _run_sweep(cfg, jobs)]
        _, conv = limit_trajectory(phi, space, x0, cfg.T, cfg.tau_sweep, cfg.solver, solutions=sols)
        reports.append(Report("sweep_cauchy", 0.0 if conv.monotone else 1.0, len(cfg.tau_sweep),
                              conv.monotone, {"cauchy_distances": conv.cauchy_distances}))
        reports.append(make_report("energy_identity", [conv.energy_residual - ENERGY_TOL], 0.0,
                                   residual=conv.energy_residual))
    return reports


def cmd_verify(cfg: ExperimentConfig, jobs: int = 1) -> int:
    reports = run_checks(cfg, jobs)
    print(f"{'check':<28} {'max_violation':>14}  result")
    for r in reports:
        print(f"{r.check_name:<28} {r.max_violation:>14.3e}  {'pass' if r.passed else 'FAIL'}")
    out = Path(cfg.out_dir)
    _atomic_write(out / f"{cfg.prefix}_verify.json",
                  _json({"schema": SCHEMA_VERSION, "command": "verify",
                         "checks": [r.to_dict() for r in reports],
                         "pass": all(r.passed for r in reports)}))
    return 0 if all(r.passed for r in reports) else 2


def cmd_sweep(cfg: ExperimentConfig, jobs: int = 1) -> int:
    if len(cfg.tau_sweep) < 2:
        raise ConfigError("[flow] tau_sweep needs at least two entries for a sweep")
    space, phi, _ = build_experiment(cfg)
    members = _run_sweep(cfg, jobs)
    trajs = [scheme_trajectory(phi, space, sol) for sol, _ in members]
    oracle = _oracle(phi, space, cfg)
    grid = np.linspace(0.0, cfg.T, 2001)
    if oracle is not None:
        ref, mode = oracle, ("constant", "linear")
    else:
        log.warning("no ODE oracle for a non-smooth potential; errors are against the finest run")
        ref, mode = trajs[-1], ("constant", "constant")
    lines = ["tau,sup_error,energy_residual,runtime_ms"]
    errors = []
    for tau, tr, (_, ms) in zip(cfg.tau_sweep, trajs, members):
        err = sup_distance(space, tr, ref, grid, mode)
        errors.append(err)
        res = verify_energy_identity(tr, phi, space, n_random=0, T=cfg.T)
        lines.append(",".join([_fmt(tau), _fmt(err), _fmt(res), f"{ms:.1f}"]))
    _atomic_write(Path(cfg.out_dir) / f"{cfg.prefix}_sweep.csv", "\n".join(lines) + "\n")
    print("\n".join(lines))
    monotone = all(b <= a + 1e-9 for a, b in zip(errors, errors[1:]))
    return 0 if monotone else 2


COMMANDS = {"run": cmd_run, "verify": cmd_verify, "sweep": cmd_sweep}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="asymflow",
                                     description="Gradient flows on asymmetric metric spaces.")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="TOML experiment file")
    parser.add_argument("--jobs", type=int, default=1, help="parallel sweep members")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--out", default=None, help="override the output directory")
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code else 0
    logging.basicConfig(level=os.environ.get("ASYMFLOW_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config).with_overrides(seed=args.seed, out_dir=args.out)
        return COMMANDS[args.command](cfg, jobs=max(1, args.jobs))
    except ConfigError as exc:
        print(f"asymflow: config error: {exc}", file=sys.stderr)
        return 1
    except AsymflowError as exc:
        print(f"asymflow: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
