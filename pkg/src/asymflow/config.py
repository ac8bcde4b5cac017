"""Experiment configuration files (TOML).

Layout::

    seed = 0                      # optional, default 0

    [space]
    kind = "randers"              # euclidean | randers | minkowski | funk
    dim = 2
    drift = [0.3, 0.1]            # randers / minkowski
    norm = "quartic"              # minkowski only: quartic | randers

    [potential]
    name = "quadratic"            # see asymflow.potentials.REGISTRY
    center = [0.0, 0.0]           # remaining keys are passed to the builder

    [flow]
    p = 2.0
    lambda = 0.5                  # optional convexity certificate to verify and attach
    x0 = [1.0, 0.5]
    T = 1.0
    tau_sweep = [0.1, 0.03, 0.01]

    [solver]                      # all optional
    tol = 1e-10
    xtol = 1e-8
    max_iter = 500
    n_restarts = 8
    barrier_strength = 0.0

    [output]
    dir = "out"
    prefix = "run"

    [verify]
    checks = ["axioms", "legendre"]   # optional subset, default all
"""
from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .envelope import SolverConfig
from .errors import ConfigError

ALL_CHECKS = ("axioms", "legendre", "envelope_monotonicity", "discrete_energy", "convexity",
              "decay", "regularization", "sweep")

_SOLVER_KEYS = {"tol", "xtol", "gtol", "max_iter", "n_restarts", "barrier_strength"}


@dataclass(frozen=True)
class ExperimentConfig:
    space: dict
    potential: dict
    p: float
    x0: tuple
    T: float
    tau_sweep: tuple
    lam: float | None = None
    solver: SolverConfig = field(default_factory=SolverConfig)
    out_dir: str = "out"
    prefix: str = "run"
    seed: int = 0
    checks: tuple = ALL_CHECKS
    source: str | None = None

    def with_overrides(self, seed=None, out_dir=None):
        cfg = self
        if seed is not None:
            cfg = replace(cfg, seed=int(seed), solver=replace(cfg.solver, seed=int(seed)))
        if out_dir is not None:
            cfg = replace(cfg, out_dir=str(out_dir))
        return cfg

    def to_dict(self):
        """Plain mapping that round-trips through :func:`from_mapping`."""
        solver = {k: getattr(self.solver, k) for k in sorted(_SOLVER_KEYS)}
        flow = {"p": self.p, "x0": list(self.x0), "T": self.T, "tau_sweep": list(self.tau_sweep)}
        if self.lam is not None:
            flow["lambda"] = self.lam
        return {"seed": self.seed, "space": dict(self.space), "potential": dict(self.potential),
                "flow": flow, "solver": solver,
                "output": {"dir": self.out_dir, "prefix": self.prefix},
                "verify": {"checks": list(self.checks)}}


def _require(section, key, where):
    if key not in section:
        raise ConfigError(f"[{where}] is missing required field '{key}'")
    return section[key]


def _finite(value, where):
    vals = value if isinstance(value, (list, tuple)) else [value]
    for v in vals:
        if not isinstance(v, (int, float)) or isinstance(v, bool) or not math.isfinite(v):
            raise ConfigError(f"{where} must be finite number(s), got {value!r}")
    return value


def from_mapping(data: dict, source: str | None = None) -> ExperimentConfig:
    from .potentials import REGISTRY

    for sec in ("space", "potential", "flow"):
        if not isinstance(data.get(sec), dict):
            raise ConfigError(f"missing section [{sec}]")
    space = dict(data["space"])
    kind = _require(space, "kind", "space")
    if kind not in ("euclidean", "randers", "minkowski", "funk", "shifted_euclidean"):
        raise ConfigError(f"[space] kind: unknown value {kind!r}")
    space.setdefault("dim", 2)
    if not isinstance(space["dim"], int) or space["dim"] < 1:
        raise ConfigError("[space] dim must be a positive integer")
    for key in ("drift", "offset"):
        if key in space:
            _finite(space[key], f"[space] {key}")

    potential = dict(data["potential"])
    name = _require(potential, "name", "potential")
    if name not in REGISTRY:
        raise ConfigError(f"[potential] name: unknown potential {name!r}; known: {sorted(REGISTRY)}")

    flow = data["flow"]
    p = float(_finite(flow.get("p", 2.0), "[flow] p"))
    if not p > 1:
        raise ConfigError("[flow] p must exceed 1")
    x0 = _finite(_require(flow, "x0", "flow"), "[flow] x0")
    if len(x0) != space["dim"]:
        raise ConfigError("[flow] x0 length must equal [space] dim")
    T = float(_finite(_require(flow, "T", "flow"), "[flow] T"))
    if not T > 0:
        raise ConfigError("[flow] T must be positive")
    sweep = _finite(_require(flow, "tau_sweep", "flow"), "[flow] tau_sweep")
    if not isinstance(sweep, list) or not sweep or any(t <= 0 for t in sweep):
        raise ConfigError("[flow] tau_sweep must be a non-empty list of positive step sizes")
    if any(b >= a for a, b in zip(sweep, sweep[1:])):
        raise ConfigError("[flow] tau_sweep must be strictly decreasing")
    lam = flow.get("lambda")
    if lam is not None:
        lam = float(_finite(lam, "[flow] lambda"))

    seed = data.get("seed", 0)
    if not isinstance(seed, int):
        raise ConfigError("seed must be an integer")
    solver_sec = dict(data.get("solver", {}))
    unknown = set(solver_sec) - _SOLVER_KEYS
    if unknown:
        raise ConfigError(f"[solver] unknown field(s): {sorted(unknown)}")
    try:
        solver = SolverConfig(seed=seed, **solver_sec)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[solver] {exc}") from None

    output = data.get("output", {})
    checks = tuple(data.get("verify", {}).get("checks", ALL_CHECKS))
    bad = [c for c in checks if c not in ALL_CHECKS]
    if bad:
        raise ConfigError(f"[verify] checks: unknown check(s) {bad}; known: {list(ALL_CHECKS)}")
    return ExperimentConfig(space=space, potential=potential, p=p, x0=tuple(float(v) for v in x0),
                            T=T, tau_sweep=tuple(float(t) for t in sweep), lam=lam, solver=solver,
                            out_dir=str(output.get("dir", "out")),
                            prefix=str(output.get("prefix", "run")), seed=seed, checks=checks,
                            source=source)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        # the decoder message carries "(at line L, column C)"
        raise ConfigError(f"{path}: {exc}") from None
    return from_mapping(data, source=str(path))
