"""Max-plus low-rank value approximation for N-body optimal control.

Lower bounds of the discrete-time value function are kept as finite maxima
of concave quadratic supports and enriched along trajectories by backward
Bellman sweeps. Submodule imports are lazy so the CLI can pin BLAS thread
pools before numpy loads.
"""

from __future__ import annotations

import importlib

__version__ = "0.1.0"

_EXPORTS: dict[str, str] = {}
for _module, _names in {
    "errors": (
        "MaxplusdpError", "DimensionMismatchError", "CurvatureMismatchError",
        "EmptyTableError", "ConfigError", "GridBoxError",
        "BudgetExceededError", "InvariantViolationError",
    ),
    "maxplus": (
        "QuadraticSupport", "MaxPlusValueTable", "ProbeSet", "eval_maxplus",
        "eval_support", "grad_support", "insert_support", "build_probe_set",
        "active_support_mask", "prune",
    ),
    "control": (
        "AffineDynamics", "ControlSet", "RewardModel", "ControlProblem",
        "CurvatureSchedule", "curvature_schedule",
        "smoothed_curvature_schedule", "inner_argmax",
        "greedy_control", "step_dynamics", "opnorm_upper_bound",
    ),
    "nbody": (
        "NBodyParams", "RadiiDiagnostics", "coulomb_potential",
        "coulomb_gradient", "curvature_gamma", "initial_annulus",
        "initial_circle", "radii_diagnostics", "state_reward",
        "terminal_table", "turnpike_radius_scale",
    ),
    "solver": (
        "SolverState", "Trajectory", "IterationRecord", "ProbeSpec",
        "SupportProvenance", "AuditReport", "init", "backward_sweep",
        "forward_pass", "run", "prune_tables", "support_validity_audit",
        "bellman_slack", "state_to_dict", "state_from_dict",
    ),
    "oracles": (
        "RiccatiSolution", "riccati_solve", "GridValue",
        "grid_value_iteration", "SeparableQuadratic", "DirectProblem",
        "DirectPropagation", "direct_propagation",
    ),
    "config": (
        "RunConfig", "SolverOptions", "OutputOptions", "InitialState",
        "load_config", "load_config_dict", "apply_overrides",
    ),
    "presets": ("preset", "preset_dict", "FIGURES", "SCALES"),
    "runner": (
        "execute_run", "reproduce_figure", "audit_bundle", "prune_bundle",
        "load_bundle",
    ),
    "seeding": ("rng_substream", "SUBSTREAMS"),
}.items():
    for _name in _names:
        _EXPORTS[_name] = _module

__all__ = ["__version__", *sorted(_EXPORTS)]


def __getattr__(name: str):
    module = _EXPORTS.get(name)
    if module is None:
        raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
    value = getattr(importlib.import_module(f".{module}", __name__), name)
    globals()[name] = value
    return value


def __dir__() -> list[str]:
    return sorted(set(globals()) | set(__all__))
