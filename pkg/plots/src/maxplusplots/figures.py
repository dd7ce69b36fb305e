"""Turn a maxplusdp bundle into trajectory, radii, and value-curve figures.

The cross-package contract is flat files only: the three CSVs below plus an
optional manifest.json used for titles. Headers are validated against the
pinned schemas and any mismatch is reported by column name. The bundle is
never written to; images go to the FigureSpec output directory.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
import numpy as np  # noqa: E402

KINDS = ("trajectories", "radii", "value_curve")

VALUE_HEADER = ("iteration", "v_at_x0", "action_V_at_x0", "wall_seconds")
RADII_HEADER = ("k", "t", "mean_radius", "max_radius")
BASELINE_HEADER = ("v_at_x0", "action_V_at_x0")


class BundleFormatError(Exception):
    """A bundle file is missing or does not match its pinned schema."""


@dataclass(frozen=True)
class FigureSpec:
    """One figure to render from one bundle.

    kind picks the figure family; baseline toggles the exact-recursion
    overlay on the value curve (drawn only when riccati_baseline.csv is
    present); xlabel/ylabel/title override the defaults; svg writes an SVG
    next to the PNG.
    """

    bundle: Path
    kind: str
    out_dir: Path = Path(".")
    dpi: int = 150
    svg: bool = False
    baseline: bool = True
    xlabel: str | None = None
    ylabel: str | None = None
    title: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        object.__setattr__(self, "bundle", Path(self.bundle))
        object.__setattr__(self, "out_dir", Path(self.out_dir))


def _read_rows(path: Path) -> tuple[list[str], np.ndarray]:
    """Header plus float data; empty cells become nan."""
    if not path.is_file():
        raise BundleFormatError(f"{path.name} not found in bundle {path.parent}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise BundleFormatError(f"{path.name} is empty") from None
        rows = []
        for i, row in enumerate(reader):
            if len(row) != len(header):
                raise BundleFormatError(
                    f"{path.name} row {i + 1} has {len(row)} cells, "
                    f"expected {len(header)}")
            try:
                rows.append([float(cell) if cell else np.nan for cell in row])
            except ValueError as exc:
                raise BundleFormatError(
                    f"{path.name} row {i + 1}: {exc}") from None
    if not rows:
        raise BundleFormatError(f"{path.name} has no data rows")
    return header, np.asarray(rows, dtype=np.float64)


def _check_header(name: str, got: list[str], want: tuple[str, ...]):
    for i, expected in enumerate(want):
        if i >= len(got) or got[i] != expected:
            found = got[i] if i < len(got) else "nothing"
            raise BundleFormatError(
                f"{name}: expected column {expected!r} at position {i + 1}, "
                f"found {found!r}")
    if len(got) > len(want):
        raise BundleFormatError(
            f"{name}: unexpected extra column {got[len(want)]!r}")


def _read_manifest(bundle: Path) -> dict:
    path = bundle / "manifest.json"
    if not path.is_file():
        return {}
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise BundleFormatError(f"manifest.json does not parse: {exc}") from None


def _default_title(spec: FigureSpec, manifest: dict) -> str:
    if spec.title is not None:
        return spec.title
    figure = manifest.get("figure")
    scale = manifest.get("scale")
    if figure and scale:
        return f"{figure} ({scale})"
    return spec.bundle.name


def _particle_paths(header: list[str]) -> list[tuple[str, list[int]]]:
    """Group the coordinate columns of trajectory.csv by particle.

    The schema is k, t, then N*d coordinate columns named p{i}_x/p{i}_y in
    two dimensions (p{i}_c{j} otherwise), then u_norm. Returns
    (particle name, column indices) in file order.
    """
    if len(header) < 4 or header[0] != "k" or header[1] != "t":
        raise BundleFormatError(
            "trajectory.csv: expected columns 'k', 't' at positions 1 and 2, "
            f"found {header[:2]!r}")
    if header[-1] != "u_norm":
        raise BundleFormatError(
            "trajectory.csv: expected last column 'u_norm', "
            f"found {header[-1]!r}")
    groups: list[tuple[str, list[int]]] = []
    for idx, name in enumerate(header[2:-1], start=2):
        particle, _, coord = name.partition("_")
        if not particle.startswith("p") or not coord:
            raise BundleFormatError(
                f"trajectory.csv: expected a coordinate column like 'p0_x' "
                f"at position {idx + 1}, found {name!r}")
        if groups and groups[-1][0] == particle:
            groups[-1][1].append(idx)
        else:
            groups.append((particle, [idx]))
    return groups


def _figure_trajectories(spec: FigureSpec, manifest: dict):
    header, data = _read_rows(spec.bundle / "trajectory.csv")
    groups = _particle_paths(header)
    fig, ax = plt.subplots(figsize=(6.0, 6.0))
    planar = all(len(cols) == 2 for _, cols in groups)
    if planar:
        for particle, (cx, cy) in groups:
            line, = ax.plot(data[:, cx], data[:, cy], lw=1.0, label=particle)
            ax.plot(data[0, cx], data[0, cy], marker="o", mfc="none",
                    color=line.get_color())
            ax.plot(data[-1, cx], data[-1, cy], marker="o",
                    color=line.get_color())
        ax.set_aspect("equal", adjustable="datalim")
        ax.set_xlabel(spec.xlabel or "x")
        ax.set_ylabel(spec.ylabel or "y")
    else:
        for particle, cols in groups:
            for j, col in enumerate(cols):
                ax.plot(data[:, 1], data[:, col], lw=1.0,
                        label=f"{particle}_c{j}")
        ax.set_xlabel(spec.xlabel or "t")
        ax.set_ylabel(spec.ylabel or "coordinate")
    if len(groups) <= 10:
        ax.legend(loc="best", fontsize="small")
    ax.set_title(_default_title(spec, manifest))
    return fig


def _figure_radii(spec: FigureSpec, manifest: dict):
    header, data = _read_rows(spec.bundle / "radii.csv")
    _check_header("radii.csv", header, RADII_HEADER)
    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    ax.plot(data[:, 1], data[:, 2], lw=1.5, label="mean radius")
    ax.plot(data[:, 1], data[:, 3], lw=1.0, ls="--", label="max radius")
    ax.set_xlabel(spec.xlabel or "t")
    ax.set_ylabel(spec.ylabel or "radius")
    ax.set_ylim(bottom=0.0)
    ax.legend(loc="best")
    ax.set_title(_default_title(spec, manifest))
    return fig


def _figure_value_curve(spec: FigureSpec, manifest: dict):
    header, data = _read_rows(spec.bundle / "value_vs_iteration.csv")
    _check_header("value_vs_iteration.csv", header, VALUE_HEADER)
    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    ax.plot(data[:, 0], data[:, 1], marker=".", lw=1.5,
            label="max-plus lower bound")
    baseline_path = spec.bundle / "riccati_baseline.csv"
    if spec.baseline and baseline_path.is_file():
        bh, brows = _read_rows(baseline_path)
        _check_header("riccati_baseline.csv", bh, BASELINE_HEADER)
        ax.axhline(brows[0, 0], color="black", ls=":",
                   label="no-interaction exact value")
    ax.set_xlabel(spec.xlabel or "iteration")
    ax.set_ylabel(spec.ylabel or "value at x0")
    ax.legend(loc="best")
    ax.set_title(_default_title(spec, manifest))
    return fig


_BUILDERS = {
    "trajectories": _figure_trajectories,
    "radii": _figure_radii,
    "value_curve": _figure_value_curve,
}


def build_figure(spec: FigureSpec):
    """Render the figure for spec without saving it."""
    if not spec.bundle.is_dir():
        raise BundleFormatError(f"bundle directory not found: {spec.bundle}")
    manifest = _read_manifest(spec.bundle)
    return _BUILDERS[spec.kind](spec, manifest)


def plot_bundle(spec: FigureSpec) -> list[Path]:
    """Render and save the figure for spec; returns the written paths."""
    fig = build_figure(spec)
    spec.out_dir.mkdir(parents=True, exist_ok=True)
    stem = f"{spec.bundle.name}_{spec.kind}"
    written = []
    try:
        for ext in ("png",) + (("svg",) if spec.svg else ()):
            path = spec.out_dir / f"{stem}.{ext}"
            fig.savefig(path, dpi=spec.dpi)
            written.append(path)
    finally:
        plt.close(fig)
    return written
