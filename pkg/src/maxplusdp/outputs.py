"""Atomic file outputs: the CSV schemas, checkpoints, and run manifests.

All CSVs use comma delimiters, '.' decimals, LF line endings, UTF-8. Floats
are written with repr(float(x)) (shortest round-trip form) so reruns with
identical arithmetic produce identical bytes. Every file is written to a
temporary sibling and atomically renamed into place.

Schemas (headers are fixed strings; changing one requires a manifest format
version bump):

    value_vs_iteration.csv  iteration,v_at_x0,action_V_at_x0,wall_seconds
    rank_vs_iteration.csv   iteration,rank_min,rank_mean,rank_max
    trajectory.csv          k,t,<per-particle coordinates>,u_norm
    radii.csv               k,t,mean_radius,max_radius
    riccati_gains.csv       k,t,s,gain
    riccati_baseline.csv    v_at_x0,action_V_at_x0

The wall_seconds column records real timings and is therefore the one column
that differs between otherwise identical runs; byte-level comparisons should
mask it (see README).
"""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

import numpy as np

MANIFEST_FORMAT = "maxplusdp-run"
MANIFEST_VERSION = 1


def fmt(value) -> str:
    """Cell formatting: shortest round-trip repr for floats, str for ints."""
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def atomic_write_text(path, text: str):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_bytes(path, data: bytes):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_json(path, obj, compact: bool = False):
    if compact:
        text = json.dumps(obj, separators=(",", ":"))
    else:
        text = json.dumps(obj, indent=2)
    atomic_write_text(path, text + "\n")


def write_csv(path, header: list[str], rows):
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(fmt(cell) if cell is not None else "" for cell in row))
    atomic_write_text(path, "\n".join(lines) + "\n")


def write_value_history(path, history):
    write_csv(path, ["iteration", "v_at_x0", "action_V_at_x0", "wall_seconds"],
              ((r.iteration, r.value_at_x0, r.action_at_x0, r.wall_seconds)
               for r in history))


def write_rank_history(path, history):
    write_csv(path, ["iteration", "rank_min", "rank_mean", "rank_max"],
              ((r.iteration, r.rank_min, r.rank_mean, r.rank_max)
               for r in history))


def trajectory_columns(N: int, d: int) -> list[str]:
    if d == 2:
        names = []
        for i in range(N):
            names += [f"p{i}_x", f"p{i}_y"]
        return names
    return [f"p{i}_c{j}" for i in range(N) for j in range(d)]


def write_trajectory(path, trajectory, h: float, N: int, d: int):
    """One row per time index; the final row has no control so u_norm is empty."""
    states = trajectory.states
    controls = trajectory.controls
    K = controls.shape[0]
    header = ["k", "t"] + trajectory_columns(N, d) + ["u_norm"]

    def rows():
        for k in range(K + 1):
            u_norm = float(np.linalg.norm(controls[k])) if k < K else None
            yield [k, k * h, *states[k].tolist(), u_norm]

    write_csv(path, header, rows())


def write_radii(path, mean_radius: np.ndarray, max_radius: np.ndarray, h: float):
    write_csv(path, ["k", "t", "mean_radius", "max_radius"],
              ((k, k * h, mean_radius[k], max_radius[k])
               for k in range(mean_radius.shape[0])))


def write_riccati_gains(path, solution):
    write_csv(path, ["k", "t", "s", "gain"],
              ((k, k * solution.h, float(solution.s[k]), float(solution.gains[k]))
               for k in range(solution.K)))


def write_riccati_baseline(path, v_at_x0: float):
    write_csv(path, ["v_at_x0", "action_V_at_x0"], [(v_at_x0, -v_at_x0)])


def write_checkpoint(path, state_dict: dict):
    atomic_write_json(path, state_dict, compact=True)


def read_checkpoint(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def build_manifest(config_dict: dict, *, seed: int, gamma_h: float,
                   curvature_mode: str, wall_seconds: float,
                   output_files: dict, extra: dict | None = None) -> dict:
    import numpy
    from . import __version__
    manifest = {
        "format": MANIFEST_FORMAT,
        "version": MANIFEST_VERSION,
        "tool": {"name": "maxplusdp", "version": __version__,
                 "numpy": numpy.__version__},
        "seed": seed,
        "config": config_dict,
        "curvature": {
            "mode": curvature_mode,
            "gamma_h": gamma_h,
            "certified": curvature_mode == "analytic",
            "label": {
                "analytic": "certified analytic bound",
                "sampled": "sampled estimate (uncertified)",
                "trap": "interaction-free bound (uncertified with interaction)",
            }[curvature_mode],
        },
        "timing": {"wall_seconds_total": wall_seconds},
        "outputs": output_files,
    }
    if extra:
        manifest.update(extra)
    return manifest


def read_manifest(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    if manifest.get("format") != MANIFEST_FORMAT:
        raise ValueError(f"{path} is not a run manifest")
    if manifest.get("version") != MANIFEST_VERSION:
        raise ValueError(f"unsupported manifest version {manifest.get('version')!r}")
    return manifest
