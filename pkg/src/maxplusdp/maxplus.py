"""Max-plus value tables built from concave quadratic supporting functions.

A table stores finitely many supports

    w(x) = beta + p . (x - a) - (c / 2) ||x - a||^2

sharing a single curvature c >= 0. The table's value is the pointwise max of
its supports (the tropical sum); an empty table evaluates to -inf. Because a
max of valid lower bounds is a valid lower bound, tables only ever improve as
supports are inserted, and any subset of a table is again a valid lower bound.

Floating-point discipline: every evaluation path (single point, batch, probe
activity in exact mode) funnels through one kernel, so a value computed for a
point in isolation is bitwise identical to the same value computed inside a
batch. Ties in the argmax resolve to the lowest support index.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    CurvatureMismatchError,
    DimensionMismatchError,
    EmptyTableError,
)

PROBE_PROVENANCE = ("trajectory", "perturbation", "uniform-box")

# Above this many elements in the (points, supports, dim) evaluation tensor the
# probe-activity scan switches to a factored matmul form (same algebra,
# different rounding); see `active_support_mask`.
_EXACT_TENSOR_BUDGET = 32_000_000


def _as_vector(x, dim: int | None = None, name: str = "x") -> np.ndarray:
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1:
        raise DimensionMismatchError(f"{name} must be a 1-D vector, got shape {v.shape}")
    if dim is not None and v.shape[0] != dim:
        raise DimensionMismatchError(f"{name} has dimension {v.shape[0]}, expected {dim}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} contains non-finite entries")
    return v


def _frozen(a: np.ndarray) -> np.ndarray:
    out = np.array(a, dtype=np.float64)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class QuadraticSupport:
    """One concave quadratic supporting function.

    beta is the value at the anchor a, p the slope there, and c >= 0 the
    common curvature of the table the support belongs to.
    """

    beta: float
    p: np.ndarray
    a: np.ndarray
    c: float

    def __post_init__(self):
        p = _as_vector(self.p, name="p")
        a = _as_vector(self.a, p.shape[0], name="a")
        beta = float(self.beta)
        c = float(self.c)
        if not np.isfinite(beta):
            raise ValueError("beta must be finite")
        if not np.isfinite(c) or c < 0.0:
            raise ValueError(f"curvature must be finite and >= 0, got {c}")
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "p", _frozen(p))
        object.__setattr__(self, "a", _frozen(a))
        object.__setattr__(self, "c", c)

    @property
    def dim(self) -> int:
        return self.p.shape[0]


def _support_values(betas: np.ndarray, ps: np.ndarray, anchors: np.ndarray,
                    c: float, x_batch: np.ndarray) -> np.ndarray:
    """Exact per-support values at each query point, shape (m, r).

    Shared by every exact evaluation path so single-point and batched callers
    agree bitwise.
    """
    diff = x_batch[:, None, :] - anchors[None, :, :]
    lin = (ps[None, :, :] * diff).sum(axis=-1)
    sq = (diff * diff).sum(axis=-1)
    return betas[None, :] + lin - (0.5 * c) * sq


def eval_support(w: QuadraticSupport, x) -> float:
    """Value of a single support at x."""
    xv = _as_vector(x, w.dim)
    vals = _support_values(np.array([w.beta]), w.p[None, :], w.a[None, :], w.c, xv[None, :])
    return float(vals[0, 0])


def grad_support(w: QuadraticSupport, x) -> np.ndarray:
    """Gradient p - c (x - a) of a single support at x."""
    xv = _as_vector(x, w.dim)
    return w.p - w.c * (xv - w.a)


class MaxPlusValueTable:
    """Ordered collection of supports with one shared curvature.

    Insertion order is preserved and is what the lowest-index tie-break refers
    to. The stacked coefficient arrays are cached between insertions.
    """

    __slots__ = ("dim", "curvature", "_betas", "_ps", "_anchors", "_stack")

    def __init__(self, dim: int, curvature: float):
        if int(dim) < 1:
            raise DimensionMismatchError(f"dim must be >= 1, got {dim}")
        curvature = float(curvature)
        if not np.isfinite(curvature) or curvature < 0.0:
            raise ValueError(f"table curvature must be finite and >= 0, got {curvature}")
        self.dim = int(dim)
        self.curvature = curvature
        self._betas: list[float] = []
        self._ps: list[np.ndarray] = []
        self._anchors: list[np.ndarray] = []
        self._stack = None

    @classmethod
    def empty(cls, dim: int, curvature: float) -> "MaxPlusValueTable":
        return cls(dim, curvature)

    @classmethod
    def from_supports(cls, dim: int, curvature: float,
                      supports: "list[QuadraticSupport]") -> "MaxPlusValueTable":
        table = cls(dim, curvature)
        for w in supports:
            table.append(w)
        return table

    @property
    def rank(self) -> int:
        return len(self._betas)

    def support(self, j: int) -> QuadraticSupport:
        return QuadraticSupport(self._betas[j], self._ps[j], self._anchors[j], self.curvature)

    @property
    def supports(self) -> list[QuadraticSupport]:
        return [self.support(j) for j in range(self.rank)]

    def stacked(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(betas (r,), slopes (r, n), anchors (r, n)) as read-only arrays."""
        if self._stack is None:
            r = self.rank
            if r == 0:
                stack = (np.empty(0), np.empty((0, self.dim)), np.empty((0, self.dim)))
            else:
                stack = (np.array(self._betas), np.vstack(self._ps), np.vstack(self._anchors))
            for a in stack:
                a.setflags(write=False)
            self._stack = stack
        return self._stack

    def _check_support(self, w: QuadraticSupport):
        if w.dim != self.dim:
            raise DimensionMismatchError(
                f"support dimension {w.dim} does not match table dimension {self.dim}")
        if w.c != self.curvature:
            raise CurvatureMismatchError(
                f"support curvature {w.c!r} does not match table curvature {self.curvature!r}")

    def append(self, w: QuadraticSupport) -> int:
        """Unconditional insert; returns the new support's index."""
        self._check_support(w)
        self._betas.append(w.beta)
        self._ps.append(np.array(w.p))
        self._anchors.append(np.array(w.a))
        self._stack = None
        return self.rank - 1

    def is_duplicate(self, w: QuadraticSupport, tol: float) -> bool:
        """Relative L-inf test on the concatenated (beta, p, a) coefficients.

        The scale floor max(1, .) turns the test absolute for near-zero
        supports instead of dividing by almost nothing.
        """
        self._check_support(w)
        if self.rank == 0:
            return False
        betas, ps, anchors = self.stacked()
        cand = np.concatenate(([w.beta], w.p, w.a))
        members = np.concatenate([betas[:, None], ps, anchors], axis=1)
        dev = np.abs(members - cand[None, :]).max(axis=1)
        scale = np.maximum(np.abs(members).max(axis=1), np.abs(cand).max())
        return bool(np.any(dev <= tol * np.maximum(1.0, scale)))

    def insert(self, w: QuadraticSupport, tol: float = 1e-9) -> int | None:
        """Append unless a duplicate is already stored; returns index or None."""
        if self.is_duplicate(w, tol):
            return None
        return self.append(w)

    def evaluate(self, x) -> tuple[float, int | None]:
        """(max value, active index) at x; (-inf, None) when empty."""
        xv = _as_vector(x, self.dim)
        if self.rank == 0:
            return float("-inf"), None
        betas, ps, anchors = self.stacked()
        vals = _support_values(betas, ps, anchors, self.curvature, xv[None, :])[0]
        j = int(np.argmax(vals))
        return float(vals[j]), j

    def evaluate_batch(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Exact values and active indices at many points.

        points: (m, n). Returns (values (m,), indices (m,) with -1 where the
        table is empty). Chunked so the evaluation tensor stays bounded.
        """
        pts = np.asarray(points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != self.dim:
            raise DimensionMismatchError(
                f"points must have shape (m, {self.dim}), got {pts.shape}")
        m = pts.shape[0]
        if self.rank == 0:
            return np.full(m, -np.inf), np.full(m, -1, dtype=np.int64)
        betas, ps, anchors = self.stacked()
        values = np.empty(m)
        indices = np.empty(m, dtype=np.int64)
        step = max(1, _EXACT_TENSOR_BUDGET // max(1, self.rank * self.dim))
        for lo in range(0, m, step):
            hi = min(m, lo + step)
            vals = _support_values(betas, ps, anchors, self.curvature, pts[lo:hi])
            indices[lo:hi] = np.argmax(vals, axis=1)
            values[lo:hi] = vals[np.arange(hi - lo), indices[lo:hi]]
        return values, indices

    def subset(self, indices) -> "MaxPlusValueTable":
        """New table containing the listed supports, original order preserved."""
        out = MaxPlusValueTable(self.dim, self.curvature)
        for j in indices:
            out._betas.append(self._betas[j])
            out._ps.append(self._ps[j])
            out._anchors.append(self._anchors[j])
        return out

    def copy(self) -> "MaxPlusValueTable":
        return self.subset(range(self.rank))

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "curvature": self.curvature,
            "supports": [
                {"beta": self._betas[j], "p": self._ps[j].tolist(), "a": self._anchors[j].tolist()}
                for j in range(self.rank)
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MaxPlusValueTable":
        table = cls(int(data["dim"]), float(data["curvature"]))
        for entry in data["supports"]:
            table.append(QuadraticSupport(entry["beta"], entry["p"], entry["a"], table.curvature))
        return table


def eval_maxplus(table: MaxPlusValueTable, x) -> tuple[float, int | None]:
    """Pointwise max over the table's supports; lowest index wins ties."""
    return table.evaluate(x)


def insert_support(table: MaxPlusValueTable, w: QuadraticSupport,
                   tol: float = 1e-9) -> bool:
    """Insert with duplicate squashing; returns whether an append occurred."""
    return table.insert(w, tol) is not None


@dataclass(frozen=True)
class ProbeSet:
    """States used to measure which supports are active.

    provenance labels each point with how it was generated; one of
    'trajectory', 'perturbation', 'uniform-box'.
    """

    points: np.ndarray
    provenance: tuple[str, ...] = field(default=())

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2:
            raise DimensionMismatchError(f"probe points must be 2-D, got shape {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("probe points contain non-finite entries")
        prov = tuple(self.provenance)
        if len(prov) != pts.shape[0]:
            raise ValueError("provenance length must match the number of points")
        for label in prov:
            if label not in PROBE_PROVENANCE:
                raise ValueError(f"unknown probe provenance {label!r}")
        object.__setattr__(self, "points", _frozen(pts))
        object.__setattr__(self, "provenance", prov)

    @property
    def count(self) -> int:
        return self.points.shape[0]


def build_probe_set(states: np.ndarray, total: int, sigma: float,
                    rng: np.random.Generator,
                    box: tuple[np.ndarray, np.ndarray] | None = None,
                    n_uniform: int = 0) -> ProbeSet:
    """Trajectory states, Gaussian perturbations of them, optional box samples.

    All given states are always included (so contact points stay probed) even
    if that exceeds ``total``; perturbations fill the remainder.
    """
    base = np.asarray(states, dtype=np.float64)
    if base.ndim != 2:
        raise DimensionMismatchError("states must be (count, dim)")
    n = base.shape[1]
    parts = [base]
    labels = ["trajectory"] * base.shape[0]
    n_perturb = max(0, int(total) - base.shape[0] - int(n_uniform))
    if n_perturb > 0:
        picks = rng.integers(0, base.shape[0], size=n_perturb)
        noise = sigma * rng.standard_normal((n_perturb, n))
        parts.append(base[picks] + noise)
        labels += ["perturbation"] * n_perturb
    if n_uniform > 0:
        if box is None:
            raise ValueError("uniform probes requested but no box given")
        lo = np.broadcast_to(np.asarray(box[0], dtype=np.float64), (n,))
        hi = np.broadcast_to(np.asarray(box[1], dtype=np.float64), (n,))
        parts.append(rng.uniform(lo, hi, size=(int(n_uniform), n)))
        labels += ["uniform-box"] * int(n_uniform)
    return ProbeSet(np.vstack(parts), tuple(labels))


def active_support_mask(table: MaxPlusValueTable, probes: ProbeSet,
                        exact: bool | None = None) -> np.ndarray:
    """Boolean mask of supports that win the argmax (ties included) at >= 1 probe.

    exact=None picks the exact kernel unless the evaluation tensor is too
    large, in which case a factored single-matmul form is used. The factored
    form computes the same quadratic with different rounding, which can only
    matter for supports tied to within one ulp.
    """
    if probes.count == 0:
        raise ValueError("probe set is empty")
    if probes.points.shape[1] != table.dim:
        raise DimensionMismatchError(
            f"probe dimension {probes.points.shape[1]} != table dimension {table.dim}")
    r = table.rank
    if r == 0:
        return np.zeros(0, dtype=bool)
    betas, ps, anchors = table.stacked()
    c = table.curvature
    pts = probes.points
    use_exact = exact if exact is not None else (
        pts.shape[0] * r * table.dim <= _EXACT_TENSOR_BUDGET)
    mask = np.zeros(r, dtype=bool)
    if use_exact:
        step = max(1, _EXACT_TENSOR_BUDGET // max(1, r * table.dim))
        for lo in range(0, pts.shape[0], step):
            hi = min(pts.shape[0], lo + step)
            vals = _support_values(betas, ps, anchors, c, pts[lo:hi])
            rowmax = vals.max(axis=1)
            mask |= (vals == rowmax[:, None]).any(axis=0)
    else:
        lin = ps + c * anchors
        const = betas - (ps * anchors).sum(axis=1) - (0.5 * c) * (anchors * anchors).sum(axis=1)
        vals = pts @ lin.T + const[None, :] - (0.5 * c) * (pts * pts).sum(axis=1, keepdims=True)
        rowmax = vals.max(axis=1)
        mask = (vals == rowmax[:, None]).any(axis=0)
    return mask


def prune(table: MaxPlusValueTable, probes: ProbeSet,
          keep=frozenset(), exact: bool | None = None) -> MaxPlusValueTable:
    """Drop supports never active at any probe, except protected indices.

    The result is still a pointwise lower bound everywhere, and its value at
    every probe equals the original table's value there (all argmax winners,
    ties included, are retained).
    """
    mask = active_support_mask(table, probes, exact=exact)
    keep_set = set(int(j) for j in keep)
    for j in keep_set:
        if j < 0 or j >= table.rank:
            raise IndexError(f"protected index {j} out of range for rank {table.rank}")
    indices = [j for j in range(table.rank) if mask[j] or j in keep_set]
    return table.subset(indices)
