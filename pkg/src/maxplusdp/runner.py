"""Experiment drivers: run a config to a bundle directory, reproduce the
preset figures, and audit or prune existing bundles.

A bundle is a directory holding the four CSVs, the final checkpoint, a
verbatim config echo, and manifest.json with the resolved configuration
(round-trip loadable), curvature certification info, and timing.
"""

from __future__ import annotations

import dataclasses
import time
from pathlib import Path

import numpy as np

from . import nbody, outputs, solver
from .config import RunConfig
from .errors import ConfigError
from .oracles import grid_value_iteration, riccati_solve
from .presets import preset_dict
from .seeding import rng_substream
from .solver import ProbeSpec, SolverState, support_validity_audit


def _monotone(history) -> bool:
    values = [r.value_at_x0 for r in history]
    return all(b >= a for a, b in zip(values, values[1:]))


def execute_run(config: RunConfig, out_dir, *, echo: tuple[str, bytes] | None = None,
                manifest_extra: dict | None = None, baseline: bool = False,
                summary_extra: dict | None = None) -> tuple[Path, SolverState]:
    """Run the solver per config and write the bundle into out_dir.

    echo is an optional (filename, bytes) verbatim copy of the source config
    file; presets echo their generated JSON instead. baseline additionally
    writes the no-interaction LQR value at x0 for plot overlays; summary_extra
    switches on summary.json with plateau statistics.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    problem = config.build_problem()
    x0 = config.resolve_x0()
    opts = config.solver
    state = solver.init(
        problem, x0,
        init_mode=opts.init_mode,
        constant_control=opts.constant_control,
        bound_mode=opts.bound_mode,
        bound_value=opts.bound_value,
        seed=config.seed,
        dedup_tol=opts.dedup_tol,
    )
    t0 = time.perf_counter()
    state, history = solver.run(
        state, opts.iterations,
        prune_every=opts.prune_every,
        probe_spec=config.probe_spec(),
        checkpoint_on_violation=out_dir / "violation_checkpoint.json",
        early_stop=opts.early_stop,
    )
    wall = time.perf_counter() - t0

    params = config.problem
    files: dict[str, str] = {}
    if config.outputs.csv:
        outputs.write_value_history(out_dir / "value_vs_iteration.csv", history)
        outputs.write_rank_history(out_dir / "rank_vs_iteration.csv", history)
        outputs.write_trajectory(out_dir / "trajectory.csv", state.trajectory,
                                 params.h, params.N, params.d)
        diag = nbody.radii_diagnostics(params, state.trajectory.states)
        outputs.write_radii(out_dir / "radii.csv", diag.mean_radius,
                            diag.max_radius, params.h)
        files.update({
            "value_vs_iteration": "value_vs_iteration.csv",
            "rank_vs_iteration": "rank_vs_iteration.csv",
            "trajectory": "trajectory.csv",
            "radii": "radii.csv",
        })
    if config.outputs.checkpoint:
        outputs.write_checkpoint(out_dir / "checkpoint.json",
                                 solver.state_to_dict(state))
        files["checkpoint"] = "checkpoint.json"
    if echo is not None:
        outputs.atomic_write_bytes(out_dir / echo[0], echo[1])
        files["config_echo"] = echo[0]
    if baseline:
        lqr_params = dataclasses.replace(params, kappa=0.0)
        lqr = riccati_solve(lqr_params)
        outputs.write_riccati_baseline(out_dir / "riccati_baseline.csv",
                                       lqr.value(0, x0))
        files["riccati_baseline"] = "riccati_baseline.csv"
    if summary_extra is not None:
        diag = nbody.radii_diagnostics(params, state.trajectory.states)
        last = history[-1]
        summary = dict(summary_extra)
        summary.update({
            "seed": config.seed,
            "iterations_run": len(history),
            "v_at_x0": last.value_at_x0,
            "action_V_at_x0": last.action_at_x0,
            "realized_reward": state.trajectory.realized_reward,
            "value_curve_monotone": _monotone(history),
            "plateau_radius": diag.plateau_radius,
            "plateau_dispersion": diag.plateau_dispersion,
            "dispersion_ratio": (diag.plateau_dispersion / diag.plateau_radius
                                 if diag.plateau_radius > 0 else float("inf")),
            "final_mean_radius": float(diag.mean_radius[-1]),
            "turnpike_radius_scale": nbody.turnpike_radius_scale(params),
            "wall_seconds_total": wall,
        })
        outputs.atomic_write_json(out_dir / "summary.json", summary)
        files["summary"] = "summary.json"

    manifest = outputs.build_manifest(
        config.to_dict(), seed=config.seed,
        gamma_h=problem.schedule.gamma_h,
        curvature_mode=opts.curvature_mode,
        wall_seconds=wall, output_files=files, extra=manifest_extra)
    outputs.atomic_write_json(out_dir / "manifest.json", manifest)
    return out_dir, state


def reproduce_figure(figure: str, scale: str, out_dir, *,
                     overrides: list[str] | None = None,
                     seed: int | None = None) -> tuple[Path, SolverState]:
    """Run a preset figure and write its bundle plus summary and baseline."""
    import json

    from .config import apply_overrides
    raw = preset_dict(figure, scale)
    if overrides:
        raw = apply_overrides(raw, overrides)
    if seed is not None:
        raw["seed"] = int(seed)
    config = RunConfig.from_dict(raw)
    echo = ("config_echo.json", (json.dumps(raw, indent=2) + "\n").encode())
    return execute_run(config, out_dir, echo=echo,
                       manifest_extra={"figure": figure, "scale": scale},
                       baseline=True,
                       summary_extra={"figure": figure, "scale": scale})


def load_bundle(bundle) -> tuple[RunConfig, SolverState]:
    """Rebuild the solver state stored in a bundle from its manifest + checkpoint."""
    bundle = Path(bundle)
    manifest = outputs.read_manifest(bundle / "manifest.json")
    config = RunConfig.from_dict(manifest["config"])
    checkpoint_name = manifest.get("outputs", {}).get("checkpoint")
    if checkpoint_name is None:
        raise ConfigError(f"bundle {bundle} has no checkpoint listed in its manifest")
    data = outputs.read_checkpoint(bundle / checkpoint_name)
    state = solver.state_from_dict(config.build_problem(), data)
    return config, state


def audit_bundle(bundle, count: int = 1000):
    """Run the support validity audit on a bundle; writes audit.json into it."""
    bundle = Path(bundle)
    config, state = load_bundle(bundle)
    rng = rng_substream(config.seed, "audit")
    report = support_validity_audit(state, count=count, rng=rng)
    outputs.atomic_write_json(bundle / "audit.json", report.summary())
    return report


def prune_bundle(bundle, out_path=None, *, probes: int = 4096,
                 sigma: float = 0.5) -> dict:
    """Prune every non-terminal table of a bundle's checkpoint.

    Probe randomness continues the checkpoint's stored probe stream, so the
    operation is deterministic per bundle. Writes the pruned checkpoint and
    returns a rank summary.
    """
    bundle = Path(bundle)
    config, state = load_bundle(bundle)
    before = state.ranks()[:-1]
    removed = solver.prune_tables(state, ProbeSpec(total=probes, sigma=sigma))
    after = state.ranks()[:-1]
    if out_path is None:
        out_path = bundle / "checkpoint_pruned.json"
    outputs.write_checkpoint(out_path, solver.state_to_dict(state))
    return {
        "removed": int(removed),
        "rank_max_before": int(before.max()),
        "rank_max_after": int(after.max()),
        "rank_mean_before": float(before.mean()),
        "rank_mean_after": float(after.mean()),
        "output": str(out_path),
    }


def riccati_oracle_run(config: RunConfig, out_dir) -> Path:
    """Write the LQR recursion CSVs for a no-interaction config."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    solution = riccati_solve(config.problem)
    x0 = config.resolve_x0()
    outputs.write_riccati_gains(out_dir / "riccati_gains.csv", solution)
    outputs.write_riccati_baseline(out_dir / "riccati_baseline.csv",
                                   solution.value(0, x0))
    return out_dir


def grid_oracle_run(config: RunConfig, out_dir, *, state_box, state_nodes: int,
                    control_box, control_nodes: int, boundary_rule: str = "clip",
                    checkpoint=None) -> Path:
    """Run grid value iteration for a low-dimensional config; write tables.

    With a solver checkpoint, also writes comparison.json reporting the worst
    violation of the lower-bound ordering (tables <= grid + tolerance) over
    all grid nodes and steps, and the value gap at x0.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    problem = config.build_problem()
    grid = grid_value_iteration(problem, state_box, state_nodes,
                                control_box, control_nodes,
                                boundary_rule=boundary_rule)
    nodes = grid.node_states()
    coord_names = [f"x{i}" for i in range(grid.dim)]

    def rows():
        for k in range(grid.K + 1):
            flat = grid.values[k].reshape(-1)
            for i in range(nodes.shape[0]):
                yield [k, *nodes[i].tolist(), float(flat[i])]

    outputs.write_csv(out_dir / "grid_values.csv",
                      ["k"] + coord_names + ["value"], rows())
    meta = {
        "tolerance": grid.tolerance,
        "winner_clip_count": grid.winner_clip_count,
        "control_boundary_hits": grid.control_boundary_hits,
        "boundary_rule": grid.boundary_rule,
        "state_nodes": [int(ax.shape[0]) for ax in grid.axes],
        "control_nodes": [int(ax.shape[0]) for ax in grid.control_axes],
    }
    outputs.atomic_write_json(out_dir / "grid_meta.json", meta)

    if checkpoint is not None:
        data = outputs.read_checkpoint(checkpoint)
        state = solver.state_from_dict(problem, data)
        worst = -np.inf
        violations = 0
        for k in range(grid.K + 1):
            vals, _ = state.tables[k].evaluate_batch(nodes)
            excess = vals - (grid.values[k].reshape(-1) + grid.tolerance)
            worst = max(worst, float(excess.max()))
            violations += int((excess > 0).sum())
        x0 = config.resolve_x0()
        gap = grid.value_at(0, x0) - state.tables[0].evaluate(x0)[0]
        outputs.atomic_write_json(out_dir / "comparison.json", {
            "tolerance": grid.tolerance,
            "max_ordering_violation": worst,
            "violation_count": violations,
            "gap_at_x0": gap,
        })
    return out_dir
