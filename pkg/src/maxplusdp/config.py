"""Run configuration: strict schema, TOML/JSON loading, dotted overrides.

A config has five parts: the integer seed, the [problem] constants, the
[initial_state] choice, the [solver] options, and the [outputs] options.
Unknown keys anywhere are rejected with their full dotted path. Any two of
(h, K, T) determine the third; giving all three requires consistency.

All randomness in a run flows from the single seed through named substreams
(initial_state, probes, curvature, audit, demo), so the annulus sampler and
the sampled curvature mode need no extra seed fields.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import nbody
from .control import ControlProblem
from .errors import ConfigError
from .nbody import NBodyParams
from .seeding import rng_substream
from .solver import ProbeSpec

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib


_INIT_MODES = ("zero_control", "constant_control")
_BOUND_MODES = ("minus_infinity", "certified_constant")
_CURVATURE_MODES = ("analytic", "sampled", "trap")
_INITIAL_KINDS = ("circle", "annulus", "explicit")


def _expect(value, kinds, path: str):
    if not isinstance(kinds, tuple):
        kinds = (kinds,)
    names = "/".join(k.__name__ for k in kinds)
    if isinstance(value, bool) and bool not in kinds:
        raise ConfigError(f"{path} must be {names}, got a boolean")
    if not isinstance(value, kinds):
        raise ConfigError(f"{path} must be {names}, got {type(value).__name__}")
    return value


def _number(value, path: str) -> float:
    return float(_expect(value, (int, float), path))


def _integer(value, path: str) -> int:
    return int(_expect(value, int, path))


def _check_keys(section: dict, allowed: set[str], path: str):
    unknown = sorted(set(section) - allowed)
    if unknown:
        raise ConfigError(f"unknown key {path}.{unknown[0]}"
                          + (f" (and {len(unknown) - 1} more)" if len(unknown) > 1 else ""))


@dataclass(frozen=True)
class InitialState:
    """Where the swarm starts: a circle, an annulus sample, or explicit points."""

    kind: str
    radius: float | None = None
    r_min: float | None = None
    r_max: float | None = None
    points: tuple | None = None

    def __post_init__(self):
        if self.kind not in _INITIAL_KINDS:
            raise ConfigError(f"initial_state.kind must be one of {_INITIAL_KINDS}, "
                              f"got {self.kind!r}")
        if self.kind == "circle" and (self.radius is None or self.radius <= 0):
            raise ConfigError("circle initial state needs a positive radius")
        if self.kind == "annulus":
            if self.r_min is None or self.r_max is None:
                raise ConfigError("annulus initial state needs r_min and r_max")
            if not (0 <= self.r_min < self.r_max):
                raise ConfigError("annulus needs 0 <= r_min < r_max")
        if self.kind == "explicit" and not self.points:
            raise ConfigError("explicit initial state needs points")


@dataclass(frozen=True)
class SolverOptions:
    iterations: int
    prune_every: int = 25
    probe_total: int = 4096
    probe_sigma: float = 0.5
    probe_uniform: int = 0
    dedup_tol: float = 1e-9
    init_mode: str = "zero_control"
    constant_control: float | None = None
    bound_mode: str = "minus_infinity"
    bound_value: float | None = None
    curvature_mode: str = "analytic"
    curvature_samples: int = 256
    curvature_box: float = 10.0
    early_stop: bool = False

    def __post_init__(self):
        if self.iterations < 1:
            raise ConfigError(f"solver.iterations must be >= 1, got {self.iterations}")
        if self.prune_every < 0:
            raise ConfigError("solver.prune_every must be >= 0 (0 disables pruning)")
        if self.init_mode not in _INIT_MODES:
            raise ConfigError(f"solver.init_mode must be one of {_INIT_MODES}")
        if self.init_mode == "constant_control" and self.constant_control is None:
            raise ConfigError("constant_control init mode needs solver.constant_control")
        if self.bound_mode not in _BOUND_MODES:
            raise ConfigError(f"solver.bound_mode must be one of {_BOUND_MODES}")
        if self.bound_mode == "certified_constant" and self.bound_value is None:
            raise ConfigError("certified_constant bound mode needs solver.bound_value")
        if self.curvature_mode not in _CURVATURE_MODES:
            raise ConfigError(f"solver.curvature_mode must be one of {_CURVATURE_MODES}")
        if not (self.dedup_tol > 0):
            raise ConfigError("solver.dedup_tol must be positive")
        if self.probe_total < 1 or self.probe_sigma <= 0 or self.probe_uniform < 0:
            raise ConfigError("solver probe options out of range")


@dataclass(frozen=True)
class OutputOptions:
    directory: str | None = None
    checkpoint: bool = True
    csv: bool = True


@dataclass(frozen=True)
class RunConfig:
    """Validated, resolved run description; round-trips through to_dict."""

    seed: int
    problem: NBodyParams
    initial_state: InitialState
    solver: SolverOptions
    outputs: OutputOptions = field(default_factory=OutputOptions)
    control_box: float | None = None

    # -- construction ------------------------------------------------------

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        _expect(data, dict, "config")
        _check_keys(data, {"seed", "problem", "initial_state", "solver", "outputs"},
                    "config")
        for key in ("seed", "problem", "initial_state", "solver"):
            if key not in data:
                raise ConfigError(f"config.{key} is required")
        seed = _integer(data["seed"], "config.seed")

        prob = _expect(data["problem"], dict, "config.problem")
        _check_keys(prob, {"N", "d", "k_trap", "k_T", "R_diag", "kappa", "eps",
                           "T", "h", "K", "control_box"}, "problem")
        have = {k: prob[k] for k in ("T", "h", "K") if k in prob}
        if len(have) < 2:
            raise ConfigError("problem needs at least two of T, h, K")
        T = _number(have["T"], "problem.T") if "T" in have else None
        h = _number(have["h"], "problem.h") if "h" in have else None
        K = _integer(have["K"], "problem.K") if "K" in have else None
        if T is None:
            T = K * h
        elif h is None:
            if K < 1:
                raise ConfigError("problem.K must be >= 1")
            h = T / K
        elif K is None:
            K = int(round(T / h))
        control_box = None
        if "control_box" in prob:
            control_box = _number(prob["control_box"], "problem.control_box")
            if control_box <= 0:
                raise ConfigError("problem.control_box must be positive")
        try:
            params = NBodyParams(
                N=_integer(prob.get("N", 1), "problem.N"),
                d=_integer(prob.get("d", 2), "problem.d"),
                k_trap=_number(prob["k_trap"], "problem.k_trap"),
                k_T=_number(prob["k_T"], "problem.k_T"),
                R_diag=_number(prob["R_diag"], "problem.R_diag"),
                kappa=_number(prob.get("kappa", 0.0), "problem.kappa"),
                eps=_number(prob.get("eps", 0.2), "problem.eps"),
                T=T, h=h, K=K,
            )
        except KeyError as exc:
            raise ConfigError(f"problem.{exc.args[0]} is required") from None

        init = _expect(data["initial_state"], dict, "config.initial_state")
        _check_keys(init, {"kind", "radius", "r_min", "r_max", "points"},
                    "initial_state")
        kind = _expect(init.get("kind"), str, "initial_state.kind")
        points = None
        if "points" in init:
            raw = _expect(init["points"], list, "initial_state.points")
            points = tuple(
                tuple(_number(v, f"initial_state.points[{i}][{j}]")
                      for j, v in enumerate(_expect(row, list, f"initial_state.points[{i}]")))
                for i, row in enumerate(raw))
        initial_state = InitialState(
            kind=kind,
            radius=_number(init["radius"], "initial_state.radius") if "radius" in init else None,
            r_min=_number(init["r_min"], "initial_state.r_min") if "r_min" in init else None,
            r_max=_number(init["r_max"], "initial_state.r_max") if "r_max" in init else None,
            points=points,
        )

        sol = _expect(data["solver"], dict, "config.solver")
        _check_keys(sol, {"iterations", "prune_every", "probe_total", "probe_sigma",
                          "probe_uniform", "dedup_tol", "init_mode", "constant_control",
                          "bound_mode", "bound_value", "curvature_mode",
                          "curvature_samples", "curvature_box", "early_stop"}, "solver")
        kwargs = {}
        for key, conv in (("iterations", _integer), ("prune_every", _integer),
                          ("probe_total", _integer), ("probe_sigma", _number),
                          ("probe_uniform", _integer), ("dedup_tol", _number),
                          ("constant_control", _number), ("bound_value", _number),
                          ("curvature_samples", _integer), ("curvature_box", _number)):
            if key in sol:
                kwargs[key] = conv(sol[key], f"solver.{key}")
        for key in ("init_mode", "bound_mode", "curvature_mode"):
            if key in sol:
                kwargs[key] = _expect(sol[key], str, f"solver.{key}")
        if "early_stop" in sol:
            kwargs["early_stop"] = _expect(sol["early_stop"], bool, "solver.early_stop")
        solver = SolverOptions(**kwargs)

        out = data.get("outputs", {})
        _expect(out, dict, "config.outputs")
        _check_keys(out, {"directory", "checkpoint", "csv"}, "outputs")
        outputs = OutputOptions(
            directory=_expect(out["directory"], str, "outputs.directory")
            if "directory" in out else None,
            checkpoint=_expect(out.get("checkpoint", True), bool, "outputs.checkpoint"),
            csv=_expect(out.get("csv", True), bool, "outputs.csv"),
        )
        return cls(seed=seed, problem=params, initial_state=initial_state,
                   solver=solver, outputs=outputs, control_box=control_box)

    def to_dict(self) -> dict:
        p = self.problem
        problem = {"N": p.N, "d": p.d, "k_trap": p.k_trap, "k_T": p.k_T,
                   "R_diag": p.R_diag, "kappa": p.kappa, "eps": p.eps,
                   "T": p.T, "h": p.h, "K": p.K}
        if self.control_box is not None:
            problem["control_box"] = self.control_box
        init: dict = {"kind": self.initial_state.kind}
        for key in ("radius", "r_min", "r_max"):
            val = getattr(self.initial_state, key)
            if val is not None:
                init[key] = val
        if self.initial_state.points is not None:
            init["points"] = [list(row) for row in self.initial_state.points]
        s = self.solver
        solver = {"iterations": s.iterations, "prune_every": s.prune_every,
                  "probe_total": s.probe_total, "probe_sigma": s.probe_sigma,
                  "probe_uniform": s.probe_uniform, "dedup_tol": s.dedup_tol,
                  "init_mode": s.init_mode, "bound_mode": s.bound_mode,
                  "curvature_mode": s.curvature_mode,
                  "curvature_samples": s.curvature_samples,
                  "curvature_box": s.curvature_box, "early_stop": s.early_stop}
        if s.constant_control is not None:
            solver["constant_control"] = s.constant_control
        if s.bound_value is not None:
            solver["bound_value"] = s.bound_value
        outputs: dict = {"checkpoint": self.outputs.checkpoint, "csv": self.outputs.csv}
        if self.outputs.directory is not None:
            outputs["directory"] = self.outputs.directory
        return {"seed": self.seed, "problem": problem, "initial_state": init,
                "solver": solver, "outputs": outputs}

    # -- resolution --------------------------------------------------------

    def resolve_x0(self) -> np.ndarray:
        init = self.initial_state
        if init.kind == "circle":
            return nbody.initial_circle(self.problem, init.radius)
        if init.kind == "annulus":
            rng = rng_substream(self.seed, "initial_state")
            return nbody.initial_annulus(self.problem, init.r_min, init.r_max, rng)
        flat = np.array([v for row in init.points for v in row], dtype=np.float64)
        if flat.shape[0] != self.problem.state_dim:
            raise ConfigError(
                f"explicit initial state has {flat.shape[0]} coordinates, "
                f"expected N*d = {self.problem.state_dim}")
        return flat

    def build_problem(self) -> ControlProblem:
        rng = None
        if self.solver.curvature_mode == "sampled":
            rng = rng_substream(self.seed, "curvature")
        return nbody.build_problem(
            self.problem,
            curvature_mode=self.solver.curvature_mode,
            curvature_rng=rng,
            curvature_count=self.solver.curvature_samples,
            curvature_box=self.solver.curvature_box,
            control_box=self.control_box,
        )

    def probe_spec(self) -> ProbeSpec:
        return ProbeSpec(total=self.solver.probe_total,
                         sigma=self.solver.probe_sigma,
                         n_uniform=self.solver.probe_uniform)


def load_config(path) -> RunConfig:
    """Read a TOML or JSON config file (chosen by suffix) and validate it."""
    return RunConfig.from_dict(load_config_dict(path))


def load_config_dict(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    if path.suffix == ".toml":
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    if path.suffix == ".json":
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    raise ConfigError(f"config must be .toml or .json, got {path.suffix!r}")


def apply_overrides(data: dict, overrides: list[str]) -> dict:
    """Apply 'dotted.path=value' strings to a raw config dict.

    Values parse as JSON when possible (numbers, booleans, lists) and fall
    back to plain strings. Intermediate sections are created as needed; the
    result still goes through full validation.
    """
    out = json.loads(json.dumps(data))  # deep copy of plain data
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, _, raw = item.partition("=")
        key = key.strip()
        if not key:
            raise ConfigError(f"override {item!r} has an empty key")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = out
        parts = key.split(".")
        for part in parts[:-1]:
            nxt = node.setdefault(part, {})
            if not isinstance(nxt, dict):
                raise ConfigError(f"override {key!r} descends through non-section {part!r}")
            node = nxt
        node[parts[-1]] = value
    return out
