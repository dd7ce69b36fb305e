"""Independent verification engines for the trajectory solver.

Three references, each with different trust anchors:

- Riccati recursion: exact closed form for the decoupled quadratic problem
  (no pairwise interaction). Isotropic coefficients make every step's value
  (1/2) s_k ||x||^2 with a scalar backward recursion.
- Grid value iteration: brute-force dynamic programming over a state/control
  grid with multilinear interpolation, limited to state dimension <= 3.
  Reports a certified discretization tolerance estimate along with clip
  statistics so callers can reject untrustworthy runs.
- Direct max-plus propagation: the naive scheme that multiplies the number of
  separable terms by the interaction rank every step; exact on separable
  problems and the canonical demonstration of why the trajectory solver
  exists.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .control import ControlProblem
from .errors import (
    BudgetExceededError,
    ConfigError,
    DimensionMismatchError,
    GridBoxError,
)
from .maxplus import _as_vector


# ---------------------------------------------------------------------------
# Riccati recursion for the decoupled quadratic problem


@dataclass(frozen=True)
class RiccatiSolution:
    """Value v_k(x) = (1/2) s_k ||x||^2 and feedback u_k = gains[k] x.

    s has K+1 entries with s[K] = -k_T; gains has K entries. All coefficients
    are isotropic scalars (S_k = s_k I), which is exact for the trap problem
    because every ingredient is a multiple of the identity.
    """

    s: np.ndarray
    gains: np.ndarray
    h: float
    k_trap: float
    k_T: float
    r_control: float
    dim: int

    def __post_init__(self):
        s = np.asarray(self.s, dtype=np.float64)
        g = np.asarray(self.gains, dtype=np.float64)
        if s.ndim != 1 or g.ndim != 1 or s.shape[0] != g.shape[0] + 1:
            raise DimensionMismatchError(
                f"s {s.shape} and gains {g.shape} are not a (K+1, K) pair")
        s.setflags(write=False)
        g.setflags(write=False)
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "gains", g)

    @property
    def K(self) -> int:
        return self.gains.shape[0]

    def value(self, k: int, x) -> float:
        xv = _as_vector(x, self.dim)
        return 0.5 * float(self.s[k]) * float(xv @ xv)

    def control(self, k: int, x) -> np.ndarray:
        xv = _as_vector(x, self.dim)
        return float(self.gains[k]) * xv

    def recursion_residual(self) -> float:
        """Max deviation of the stored s from its own backward recursion."""
        worst = abs(float(self.s[self.K]) + self.k_T)
        for k in range(self.K):
            nxt = float(self.s[k + 1])
            expect = -self.h * self.k_trap + self.r_control * nxt / (
                self.r_control - self.h * nxt)
            worst = max(worst, abs(float(self.s[k]) - expect))
        return worst

    def rollout(self, x0) -> tuple[np.ndarray, np.ndarray, float]:
        """Feedback rollout from x0: (states (K+1, n), controls (K, n), realized)."""
        x0 = _as_vector(x0, self.dim)
        K, n, h = self.K, self.dim, self.h
        states = np.empty((K + 1, n))
        controls = np.empty((K, n))
        states[0] = x0
        total = 0.0
        for k in range(K):
            u = float(self.gains[k]) * states[k]
            controls[k] = u
            states[k + 1] = states[k] + h * u
            total += -0.5 * h * self.k_trap * float(states[k] @ states[k])
            total += -0.5 * h * self.r_control * float(u @ u)
        total += -0.5 * self.k_T * float(states[K] @ states[K])
        return states, controls, total


def riccati_solve(params=None, *, h: float | None = None, K: int | None = None,
                  k_trap: float | None = None, k_T: float | None = None,
                  r_control: float | None = None, dim: int = 1) -> RiccatiSolution:
    """Backward recursion s_K = -k_T, s_k = -h k_trap + R s_{k+1}/(R - h s_{k+1}).

    Derivation: with v_{k+1}(y) = (s'/2)||y||^2 and y = x + h u, first-order
    stationarity of -(h R/2)||u||^2 + v_{k+1}(x + h u) gives
    u* = s'/(R - h s') x, and substituting back completes the square to the
    stated s_k. Since s stays <= 0 and R > 0, the denominator never vanishes.

    Accepts either an NBodyParams-like object with kappa == 0 (interaction
    must be absent for the quadratic structure to be exact) or explicit scalar
    coefficients.
    """
    if params is not None:
        if params.kappa != 0.0:
            raise ConfigError(
                f"exact quadratic recursion needs kappa = 0, got {params.kappa}")
        h, K = params.h, params.K
        k_trap, k_T, r_control = params.k_trap, params.k_T, params.R_diag
        dim = params.state_dim
    if None in (h, K, k_trap, k_T, r_control):
        raise ValueError("pass params or all of h, K, k_trap, k_T, r_control")
    if not (h > 0 and r_control > 0 and k_trap >= 0 and k_T >= 0 and K >= 1):
        raise ValueError("need h > 0, r_control > 0, k_trap, k_T >= 0, K >= 1")
    s = np.empty(K + 1)
    gains = np.empty(K)
    s[K] = -k_T
    for k in range(K - 1, -1, -1):
        nxt = s[k + 1]
        gains[k] = nxt / (r_control - h * nxt)
        s[k] = -h * k_trap + r_control * nxt / (r_control - h * nxt)
    return RiccatiSolution(s=s, gains=gains, h=float(h), k_trap=float(k_trap),
                           k_T=float(k_T), r_control=float(r_control), dim=int(dim))


# ---------------------------------------------------------------------------
# grid value iteration


def _cartesian(axes: tuple[np.ndarray, ...]) -> np.ndarray:
    """All grid points of the product of 1-D axes, C order, shape (prod, n)."""
    grids = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.reshape(-1) for g in grids], axis=1)


def _axis_locate(ax: np.ndarray, x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Cell index, fraction within cell, and out-of-range flag for queries x."""
    oob = (x < ax[0]) | (x > ax[-1])
    xc = np.clip(x, ax[0], ax[-1])
    steps = np.diff(ax)
    if np.allclose(steps, steps[0], rtol=1e-12, atol=0.0):
        i = np.floor((xc - ax[0]) / steps[0]).astype(np.int64)
        i = np.clip(i, 0, ax.shape[0] - 2)
    else:
        i = np.searchsorted(ax, xc, side="right") - 1
        i = np.clip(i, 0, ax.shape[0] - 2)
    t = (xc - ax[i]) / (ax[i + 1] - ax[i])
    return i, t, oob


def _multilinear(values: np.ndarray, axes: tuple[np.ndarray, ...],
                 P: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Multilinear interpolation of a gridded array at query points P (M, n).

    Out-of-box queries are clipped to the boundary; the second return value
    flags which rows were clipped so the caller can apply its boundary rule.
    """
    n = len(axes)
    M = P.shape[0]
    idx, frac = [], []
    oob = np.zeros(M, dtype=bool)
    for dax in range(n):
        i, t, bad = _axis_locate(axes[dax], P[:, dax])
        idx.append(i)
        frac.append(t)
        oob |= bad
    out = np.zeros(M)
    for corner in range(2 ** n):
        weight = np.ones(M)
        multi = []
        for dax in range(n):
            bit = (corner >> dax) & 1
            weight = weight * (frac[dax] if bit else 1.0 - frac[dax])
            multi.append(idx[dax] + bit)
        out += weight * values[tuple(multi)]
    return out, oob


@dataclass(frozen=True, eq=False)
class GridValue:
    """Tabulated value functions from grid value iteration.

    values has shape (K+1, *grid shape). tolerance is the accumulated
    discretization estimate: per sweep, the multilinear interpolation error
    bound (max observed second difference / 8, summed over axes) plus the
    control-grid underestimation bound for a quadratic-in-u objective.
    winner_clip_count counts nodes whose winning control needed a clipped
    (out-of-box) successor; losing candidates may clip freely because the trap
    reward makes the clipped continuation an overestimate, so a clipped loser
    truly loses. Runs intended as upper references should have zero winner
    clips and zero control_boundary_hits.
    """

    axes: tuple[np.ndarray, ...]
    control_axes: tuple[np.ndarray, ...]
    values: np.ndarray
    h: float
    tolerance: float
    winner_clip_count: int
    control_boundary_hits: int
    boundary_rule: str

    @property
    def K(self) -> int:
        return self.values.shape[0] - 1

    @property
    def dim(self) -> int:
        return len(self.axes)

    def node_states(self) -> np.ndarray:
        return _cartesian(self.axes)

    def interpolate(self, k: int, X: np.ndarray) -> np.ndarray:
        pts = np.asarray(X, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != self.dim:
            raise DimensionMismatchError(
                f"query points must be (m, {self.dim}), got {pts.shape}")
        out, _ = _multilinear(self.values[k], self.axes, pts)
        return out

    def value_at(self, k: int, x) -> float:
        xv = _as_vector(x, self.dim)
        return float(self.interpolate(k, xv[None, :])[0])


def grid_value_iteration(problem: ControlProblem, state_box, state_steps,
                         control_box, control_steps,
                         boundary_rule: str = "clip") -> GridValue:
    """Backward dynamic programming on a box grid, state dimension <= 3.

    state_box and control_box are (lo, hi) pairs (scalars broadcast across
    dimensions); state_steps and control_steps are node counts per axis.
    boundary_rule 'clip' clamps out-of-box successors to the boundary and
    counts the clips that decided a node's winner; 'strict' raises on the
    first out-of-box successor, naming the offending state and control;
    'restrict' drops controls whose successor leaves the box (their candidate
    value is treated as -inf at the offending nodes).
    """
    n = problem.state_dim
    m = problem.dyn.control_dim
    if n > 3:
        raise DimensionMismatchError(
            f"grid value iteration is limited to state dimension <= 3, got {n}")
    if boundary_rule not in ("clip", "strict", "restrict"):
        raise ValueError(f"unknown boundary rule {boundary_rule!r}")
    K, h = problem.K, problem.dyn.h
    dyn, reward = problem.dyn, problem.reward

    def make_axes(box, steps, count):
        lo = np.broadcast_to(np.asarray(box[0], dtype=np.float64), (count,))
        hi = np.broadcast_to(np.asarray(box[1], dtype=np.float64), (count,))
        steps = np.broadcast_to(np.asarray(steps, dtype=np.int64), (count,))
        if np.any(lo >= hi) or np.any(steps < 2):
            raise ValueError("grid boxes need lo < hi and >= 2 nodes per axis")
        return tuple(np.linspace(lo[i], hi[i], int(steps[i])) for i in range(count))

    axes = make_axes(state_box, state_steps, n)
    control_axes = make_axes(control_box, control_steps, m)
    shape = tuple(ax.shape[0] for ax in axes)
    nodes = _cartesian(axes)
    controls = _cartesian(control_axes)
    G = nodes.shape[0]

    rho_nodes = np.array([reward.state_reward(x)[0] for x in nodes])
    Q = reward.control_quadratic
    ctrl_cost = 0.5 * h * np.einsum("ij,jk,ik->i", controls, Q, controls)
    on_ctrl_edge = np.zeros(controls.shape[0], dtype=bool)
    for dax in range(m):
        ax = control_axes[dax]
        on_ctrl_edge |= (controls[:, dax] == ax[0]) | (controls[:, dax] == ax[-1])

    values = np.empty((K + 1,) + shape)
    term_vals, _ = problem.terminal.evaluate_batch(nodes)
    values[K] = term_vals.reshape(shape)

    identity_A = dyn._identity_A
    tolerance = 0.0
    winner_clips = 0
    ctrl_hits = 0
    for k in range(K - 1, -1, -1):
        vnext = values[k + 1]
        best = np.full(G, -np.inf)
        best_idx = np.zeros(G, dtype=np.int64)
        best_clip = np.zeros(G, dtype=bool)
        for i in range(controls.shape[0]):
            u = controls[i]
            shift = dyn.B @ u + dyn.b
            F = nodes + shift[None, :] if identity_A else nodes @ dyn.A.T + shift[None, :]
            interp, oob = _multilinear(vnext, axes, F)
            if boundary_rule == "strict" and oob.any():
                row = int(np.flatnonzero(oob)[0])
                raise GridBoxError(
                    f"successor of state {nodes[row].tolist()} under control "
                    f"{u.tolist()} leaves the grid box at step {k}",
                    state=nodes[row], control=u)
            cand = h * rho_nodes - ctrl_cost[i] + interp
            if boundary_rule == "restrict":
                cand = np.where(oob, -np.inf, cand)
            better = cand > best
            best = np.where(better, cand, best)
            best_idx[better] = i
            best_clip[better] = oob[better]
        winner_clips += int(best_clip.sum())
        ctrl_hits += int(on_ctrl_edge[best_idx].sum())
        values[k] = best.reshape(shape)

        # accumulate the certified tolerance from the just-consumed v_{k+1}:
        # multilinear error <= max second difference / 8 per axis, control-grid
        # gap <= (du^2/8) |d^2/du^2 objective| with the value curvature read
        # off the same second differences.
        interp_err = 0.0
        vpp = 0.0
        for dax in range(n):
            if shape[dax] >= 3:
                d2 = float(np.abs(np.diff(vnext, n=2, axis=dax)).max())
                interp_err += d2 / 8.0
                spacing = axes[dax][1] - axes[dax][0]
                vpp = max(vpp, d2 / (spacing * spacing))
        ctrl_err = 0.0
        for dax in range(m):
            du = control_axes[dax][1] - control_axes[dax][0]
            bcol = dyn.B[:, dax]
            ctrl_err += (du * du / 8.0) * (h * Q[dax, dax] + float(bcol @ bcol) * vpp)
        tolerance += interp_err + ctrl_err

    return GridValue(axes=axes, control_axes=control_axes, values=values, h=h,
                     tolerance=float(tolerance), winner_clip_count=winner_clips,
                     control_boundary_hits=ctrl_hits, boundary_rule=boundary_rule)


# ---------------------------------------------------------------------------
# direct max-plus propagation


@dataclass(frozen=True, eq=False)
class SeparableQuadratic:
    """const + sum_i [lin_i . x_i - (quad_i / 2) ||x_i||^2] over particle blocks."""

    const: float
    lin: np.ndarray
    quad: np.ndarray

    def __post_init__(self):
        lin = np.asarray(self.lin, dtype=np.float64)
        quad = np.asarray(self.quad, dtype=np.float64)
        if lin.ndim != 2 or quad.ndim != 1 or quad.shape[0] != lin.shape[0]:
            raise DimensionMismatchError(
                f"lin must be (N, d) and quad (N,), got {lin.shape} and {quad.shape}")
        if not (np.isfinite(self.const) and np.all(np.isfinite(lin))
                and np.all(np.isfinite(quad))):
            raise ValueError("separable quadratic has non-finite coefficients")
        lin = lin.copy()
        quad = quad.copy()
        lin.setflags(write=False)
        quad.setflags(write=False)
        object.__setattr__(self, "const", float(self.const))
        object.__setattr__(self, "lin", lin)
        object.__setattr__(self, "quad", quad)

    @property
    def N(self) -> int:
        return self.lin.shape[0]

    @property
    def d(self) -> int:
        return self.lin.shape[1]

    def value(self, x) -> float:
        X = _as_vector(x, self.N * self.d).reshape(self.N, self.d)
        return (self.const + float((self.lin * X).sum())
                - 0.5 * float((self.quad * (X * X).sum(axis=1)).sum()))

    def coefficients(self) -> np.ndarray:
        return np.concatenate(([self.const], self.lin.reshape(-1), self.quad))


@dataclass(frozen=True, eq=False)
class DirectProblem:
    """Separable instance for direct propagation.

    terminal: list of separable quadratics whose max is the terminal reward.
    interaction: optional list of separable quadratics whose max is the
    non-trap part of the state running reward (rho(x) = -(k_trap/2)||x||^2 +
    max over interaction terms); None means that part is identically zero.
    """

    N: int
    d: int
    h: float
    K: int
    k_trap: float
    r_control: float
    terminal: tuple
    interaction: tuple | None = None
    budget: int = 100_000

    def __post_init__(self):
        if self.N < 1 or self.d < 1:
            raise ConfigError("N and d must be >= 1")
        if not (self.h > 0 and self.r_control > 0 and self.k_trap >= 0):
            raise ConfigError("need h > 0, r_control > 0, k_trap >= 0")
        if not (1 <= self.K <= 6):
            raise ConfigError(
                f"direct propagation is a demonstration; K must be in 1..6, got {self.K}")
        terminal = tuple(self.terminal)
        if not terminal:
            raise ConfigError("terminal term list must be nonempty")
        interaction = None if self.interaction is None else tuple(self.interaction)
        for term in terminal + (interaction or ()):
            if term.N != self.N or term.d != self.d:
                raise DimensionMismatchError("term block layout does not match N, d")
        object.__setattr__(self, "terminal", terminal)
        object.__setattr__(self, "interaction", interaction)

    @property
    def interaction_rank(self) -> int:
        return 1 if self.interaction is None else len(self.interaction)


def _combine(problem: DirectProblem, s: SeparableQuadratic | None,
             t: SeparableQuadratic) -> SeparableQuadratic:
    """One backward step of the closed-form inner maximization.

    For each particle, sup_u of -(h R/2)||u||^2 + t_i(x_i + h u_i) is again a
    quadratic in x_i with D_i = R + h quad_i > 0 required (strong concavity).
    """
    h, R, k_trap = problem.h, problem.r_control, problem.k_trap
    D = R + h * t.quad
    if np.any(D <= 0):
        raise ValueError("inner problem not strongly concave: R + h quad <= 0")
    ratio = R / D
    quad = h * k_trap + ratio * t.quad
    lin = ratio[:, None] * t.lin
    const = t.const + float((h * (t.lin * t.lin).sum(axis=1) / (2.0 * D)).sum())
    if s is not None:
        quad = quad + h * s.quad
        lin = lin + h * s.lin
        const = const + h * s.const
    return SeparableQuadratic(const=const, lin=lin, quad=quad)


def _dedup_terms(terms: list, tol: float) -> list:
    kept: list = []
    coeffs: list = []
    for term in terms:
        vec = term.coefficients()
        scale = max(1.0, float(np.abs(vec).max()))
        dup = False
        for other in coeffs:
            if float(np.abs(other - vec).max()) <= tol * max(
                    scale, 1.0, float(np.abs(other).max())):
                dup = True
                break
        if not dup:
            kept.append(term)
            coeffs.append(vec)
    return kept


@dataclass(frozen=True, eq=False)
class DirectPropagation:
    """Full expansion per time index plus the rank traces.

    ranks_pre_dedup[j] is the term count after j backward steps before
    deduplication (so index 0 is the terminal rank); ranks_post_dedup is the
    same after removing near-identical terms. terms_by_time[k] holds the
    retained terms of the value at time index k.
    """

    problem: DirectProblem
    terms_by_time: tuple
    ranks_pre_dedup: tuple
    ranks_post_dedup: tuple

    def evaluate(self, k: int, x) -> float:
        terms = self.terms_by_time[k]
        return max(term.value(x) for term in terms)


def direct_propagation(problem: DirectProblem,
                       dedup_tol: float = 1e-12) -> DirectPropagation:
    """Propagate every interaction-term/value-term combination backward.

    Rank multiplies by the interaction rank each step before dedup; exceeding
    the budget aborts with the trace accumulated so far.
    """
    interaction: tuple = problem.interaction or (None,)
    terms = list(problem.terminal)
    terms_by_time: dict[int, tuple] = {problem.K: tuple(terms)}
    ranks_pre = [len(terms)]
    ranks_post = [len(terms)]
    for j in range(1, problem.K + 1):
        pre = len(terms) * len(interaction)
        if pre > problem.budget:
            raise BudgetExceededError(
                f"direct propagation needs {pre} terms at step {j}, "
                f"budget is {problem.budget}",
                trace=tuple(ranks_pre) + (pre,))
        new_terms = [_combine(problem, s, t)
                     for s, t in itertools.product(interaction, terms)]
        ranks_pre.append(pre)
        terms = _dedup_terms(new_terms, dedup_tol)
        ranks_post.append(len(terms))
        terms_by_time[problem.K - j] = tuple(terms)
    ordered = tuple(terms_by_time[k] for k in range(problem.K + 1))
    return DirectPropagation(problem=problem, terms_by_time=ordered,
                             ranks_pre_dedup=tuple(ranks_pre),
                             ranks_post_dedup=tuple(ranks_post))
