"""Affine discrete dynamics, stage rewards, curvature recursion, inner argmax.

The one-step operator maximized here is

    J(u) = h l(x, u) + w(F(x, u)),      F(x, u) = A x + B u + b,

with h l(x, u) = h rho(x) - (h/2) u' Q_u u and w a concave quadratic support.
J is strongly concave in u (Q_u positive definite, curvature c >= 0), so the
unconstrained maximizer solves (h Q_u + c B'B) u = B' (p - c (A x + b - a)),
and for a box with diagonal Hessian the maximizer is the coordinate-wise clip
of the unconstrained one.

Curvature bookkeeping: if the target of a one-step profile is c_next-semiconvex
and the stage reward is gamma_h-semiconvex in x, the profile is semiconvex with
constant gamma_h + ||A||^2 c_next. Running that recursion backward from the
terminal curvature yields the per-step curvature schedule.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DimensionMismatchError, EmptyTableError
from .maxplus import MaxPlusValueTable, QuadraticSupport, _as_vector


def opnorm_upper_bound(A: np.ndarray, tol: float = 1e-10, max_iter: int = 20_000) -> float:
    """Spectral norm estimate by power iteration, nudged upward.

    The iteration converges from below; the final value is inflated by a small
    factor so the returned number can be used as an upper bound in the
    curvature recursion.
    """
    A = np.asarray(A, dtype=np.float64)
    n = A.shape[1]
    if A.size == 0:
        return 0.0
    v = np.ones(n) + np.arange(n) / max(1, n)
    v /= np.linalg.norm(v)
    prev = 0.0
    for _ in range(max_iter):
        w = A.T @ (A @ v)
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0
        v = w / norm
        est = float(np.sqrt(norm))
        if abs(est - prev) <= tol * max(1.0, est):
            break
        prev = est
    return est * (1.0 + 1e-8)


@dataclass(frozen=True, eq=False)
class AffineDynamics:
    """x+ = A x + B u + b with step size h and a certified bound on ||A||."""

    A: np.ndarray
    B: np.ndarray
    b: np.ndarray
    h: float
    opnorm_A: float

    def __post_init__(self):
        A = np.asarray(self.A, dtype=np.float64)
        B = np.asarray(self.B, dtype=np.float64)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise DimensionMismatchError(f"A must be square, got shape {A.shape}")
        n = A.shape[0]
        if B.ndim != 2 or B.shape[0] != n:
            raise DimensionMismatchError(f"B must be (n, m) with n={n}, got {B.shape}")
        bvec = _as_vector(self.b, n, name="b")
        if not (self.h > 0 and np.isfinite(self.h)):
            raise ValueError(f"h must be positive, got {self.h}")
        if not (np.isfinite(self.opnorm_A) and self.opnorm_A >= 0):
            raise ValueError("opnorm_A must be finite and >= 0")
        for arr in (A, B):
            if not np.all(np.isfinite(arr)):
                raise ValueError("dynamics matrices contain non-finite entries")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "b", bvec)
        object.__setattr__(self, "h", float(self.h))
        object.__setattr__(self, "opnorm_A", float(self.opnorm_A))
        # fast-path structure flags, fixed at construction
        object.__setattr__(self, "_identity_A", bool(np.array_equal(A, np.eye(n))))
        object.__setattr__(self, "_zero_b", bool(not bvec.any()))
        scalar = None
        if B.shape[0] == B.shape[1]:
            s = B[0, 0]
            if np.array_equal(B, s * np.eye(n)):
                scalar = float(s)
        object.__setattr__(self, "_scalar_B", scalar)

    @classmethod
    def velocity_integrator(cls, dim: int, h: float) -> "AffineDynamics":
        """x+ = x + h u; the kinematic model used by the swarm problems."""
        eye = np.eye(dim)
        return cls(A=eye, B=h * eye, b=np.zeros(dim), h=h, opnorm_A=1.0)

    @property
    def state_dim(self) -> int:
        return self.A.shape[0]

    @property
    def control_dim(self) -> int:
        return self.B.shape[1]

    def drift(self, x: np.ndarray) -> np.ndarray:
        """A x + b."""
        if self._identity_A and self._zero_b:
            return x
        return self.A @ x + self.b


def step_dynamics(dyn: AffineDynamics, x, u) -> np.ndarray:
    xv = _as_vector(x, dyn.state_dim)
    uv = _as_vector(u, dyn.control_dim, name="u")
    if dyn._identity_A and dyn._zero_b and dyn._scalar_B is not None:
        return xv + dyn._scalar_B * uv
    return dyn.A @ xv + dyn.B @ uv + dyn.b


@dataclass(frozen=True, eq=False)
class ControlSet:
    """Unconstrained controls or an axis-aligned box."""

    kind: str
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("unconstrained", "box"):
            raise ValueError(f"unknown control set kind {self.kind!r}")
        if self.kind == "box":
            lo = np.asarray(self.lower, dtype=np.float64)
            hi = np.asarray(self.upper, dtype=np.float64)
            if lo.shape != hi.shape or lo.ndim != 1:
                raise DimensionMismatchError("box bounds must be matching 1-D vectors")
            if not np.all(np.isfinite(lo)) or not np.all(np.isfinite(hi)):
                raise ValueError("box bounds must be finite")
            if np.any(lo > hi):
                raise ValueError("box lower bound exceeds upper bound")
            object.__setattr__(self, "lower", lo)
            object.__setattr__(self, "upper", hi)

    @classmethod
    def unconstrained(cls) -> "ControlSet":
        return cls(kind="unconstrained")

    @classmethod
    def box(cls, lower, upper) -> "ControlSet":
        return cls(kind="box", lower=lower, upper=upper)


@dataclass(frozen=True, eq=False)
class RewardModel:
    """Stage reward h l(x,u) = h rho(x) - (h/2) u' Q_u u.

    state_reward maps x to (rho(x), grad rho(x)). gamma_h is a semiconvexity
    constant of x -> h l(x, u), uniform in u; gamma_certified says that
    constant holds globally rather than being a heuristic, which is what
    licenses the smoothed curvature recursion. control_cost_scalar is set
    when Q_u is a positive multiple of the identity, which unlocks the
    closed-form batched argmax path.
    """

    state_reward: Callable[[np.ndarray], tuple[float, np.ndarray]]
    control_quadratic: np.ndarray
    gamma_h: float
    gamma_certified: bool = False

    def __post_init__(self):
        Q = np.asarray(self.control_quadratic, dtype=np.float64)
        if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
            raise DimensionMismatchError(f"Q_u must be square, got {Q.shape}")
        if not np.allclose(Q, Q.T):
            raise ValueError("Q_u must be symmetric")
        if not (np.isfinite(self.gamma_h) and self.gamma_h >= 0):
            raise ValueError("gamma_h must be finite and >= 0")
        object.__setattr__(self, "control_quadratic", Q)
        object.__setattr__(self, "gamma_h", float(self.gamma_h))
        scalar = None
        q = Q[0, 0]
        if q > 0 and np.array_equal(Q, q * np.eye(Q.shape[0])):
            scalar = float(q)
        object.__setattr__(self, "control_cost_scalar", scalar)

    @property
    def control_dim(self) -> int:
        return self.control_quadratic.shape[0]


@dataclass(frozen=True, eq=False)
class CurvatureSchedule:
    """Per-step support curvatures c[0..K], built backward from c[K]."""

    c: np.ndarray
    gamma_h: float
    opnorm_A: float

    def __post_init__(self):
        arr = np.asarray(self.c, dtype=np.float64)
        if arr.ndim != 1 or arr.shape[0] < 2:
            raise ValueError("schedule needs at least c[0] and c[K]")
        if np.any(arr < 0) or not np.all(np.isfinite(arr)):
            raise ValueError("curvatures must be finite and >= 0")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "c", arr)

    @property
    def K(self) -> int:
        return self.c.shape[0] - 1


def curvature_schedule(gamma_h: float, c_terminal: float, opnorm_A: float,
                       K: int) -> CurvatureSchedule:
    """Backward curvature recursion from the terminal constant."""
    if K < 1:
        raise ValueError(f"K must be >= 1, got {K}")
    if gamma_h < 0 or c_terminal < 0 or opnorm_A < 0:
        raise ValueError("gamma_h, c_terminal and opnorm_A must be >= 0")
    c = np.empty(K + 1)
    c[K] = c_terminal
    sq = opnorm_A * opnorm_A
    for k in range(K - 1, -1, -1):
        c[k] = gamma_h + sq * c[k + 1]
    return CurvatureSchedule(c=c, gamma_h=float(gamma_h), opnorm_A=float(opnorm_A))


def smoothed_curvature_schedule(gamma_h: float, c_terminal: float,
                                opnorm_A: float, K: int, *, h: float,
                                control_cost: float,
                                input_scale: float) -> CurvatureSchedule:
    """Backward curvature recursion with the exact control-smoothing term.

    With Q_u = q I, B = b I and unconstrained controls, maximizing the
    one-step objective over u is a quadratic smoothing that shrinks the
    propagated curvature exactly to

        c_k = gamma_h + |A|^2 c_{k+1} h q / (h q + c_{k+1} b^2),

    of which the plain affine recursion is the b = 0 limit (an upper bound).
    Both schedules certify every generated support; the smaller constants
    let supports carry more slope information per iteration.
    """
    if K < 1:
        raise ValueError(f"K must be >= 1, got {K}")
    if gamma_h < 0 or c_terminal < 0 or opnorm_A < 0:
        raise ValueError("gamma_h, c_terminal and opnorm_A must be >= 0")
    if not (h > 0 and control_cost > 0):
        raise ValueError("h and control_cost must be positive")
    if not np.isfinite(input_scale):
        raise ValueError("input_scale must be finite")
    c = np.empty(K + 1)
    c[K] = c_terminal
    sq = opnorm_A * opnorm_A
    hq = h * control_cost
    bb = input_scale * input_scale
    for k in range(K - 1, -1, -1):
        nxt = c[k + 1]
        c[k] = gamma_h + sq * nxt * hq / (hq + nxt * bb)
    return CurvatureSchedule(c=c, gamma_h=float(gamma_h), opnorm_A=float(opnorm_A))


def _box_qp_max(M: np.ndarray, g: np.ndarray, lo: np.ndarray, hi: np.ndarray,
                tol: float = 1e-13, max_sweeps: int = 500) -> np.ndarray:
    """Maximize g'u - 0.5 u'Mu over a box, M symmetric positive definite.

    Cyclic coordinate ascent with exact per-coordinate updates; converges to
    the unique maximizer of the strongly concave objective.
    """
    u = np.clip(np.linalg.solve(M, g), lo, hi)
    m = u.shape[0]
    for _ in range(max_sweeps):
        delta = 0.0
        for i in range(m):
            resid = g[i] - (M[i] @ u - M[i, i] * u[i])
            new = min(max(resid / M[i, i], lo[i]), hi[i])
            delta = max(delta, abs(new - u[i]))
            u[i] = new
        if delta <= tol * (1.0 + float(np.abs(u).max())):
            break
    return u


def _argmax_batch(dyn: AffineDynamics, reward: RewardModel,
                  betas: np.ndarray, ps: np.ndarray, anchors: np.ndarray, c: float,
                  ctrl: ControlSet, x: np.ndarray, rho: float
                  ) -> tuple[np.ndarray, np.ndarray]:
    """Per-support maximizers and objective values, shapes (r, m) and (r,).

    Fast path requires B and Q_u to be positive multiples of the identity,
    which makes the argmax Hessian diagonal; box constraints then reduce to a
    clip. The general path loops over supports and is bitwise identical to
    calling the single-support version per support.
    """
    h = dyn.h
    q = reward.control_cost_scalar
    sB = dyn._scalar_B
    y = dyn.drift(x)
    if q is not None and sB is not None:
        grads = ps - c * (y[None, :] - anchors)
        denom = h * q + c * (sB * sB)
        U = (sB / denom) * grads
        if ctrl.kind == "box":
            U = np.clip(U, ctrl.lower[None, :], ctrl.upper[None, :])
        F = y[None, :] + sB * U
        diff = F - anchors
        vals = (betas
                + (ps * diff).sum(axis=-1)
                - (0.5 * c) * (diff * diff).sum(axis=-1)
                - (0.5 * h * q) * (U * U).sum(axis=-1)
                + h * rho)
        return U, vals
    # general path: factor the Hessian once, solve per support
    Q = reward.control_quadratic
    M = h * Q + c * (dyn.B.T @ dyn.B)
    r = betas.shape[0]
    U = np.empty((r, dyn.control_dim))
    vals = np.empty(r)
    for j in range(r):
        g = dyn.B.T @ (ps[j] - c * (y - anchors[j]))
        if ctrl.kind == "box":
            u = _box_qp_max(M, g, ctrl.lower, ctrl.upper)
        else:
            u = np.linalg.solve(M, g)
        F = dyn.A @ x + dyn.B @ u + dyn.b
        diff = F - anchors[j]
        vals[j] = (betas[j]
                   + (ps[j] * diff).sum(axis=-1)
                   - (0.5 * c) * (diff * diff).sum(axis=-1)
                   - (0.5 * h) * float(u @ Q @ u)
                   + h * rho)
        U[j] = u
    return U, vals


def inner_argmax(dyn: AffineDynamics, reward: RewardModel, w_next: QuadraticSupport,
                 ctrl: ControlSet, x, rho: float | None = None
                 ) -> tuple[np.ndarray, float]:
    """Maximize the one-step profile against a single support.

    Returns (u*, attained objective). rho may be passed in when the caller has
    already evaluated the state reward at x.
    """
    xv = _as_vector(x, dyn.state_dim)
    if rho is None:
        rho = float(reward.state_reward(xv)[0])
    U, vals = _argmax_batch(dyn, reward,
                            np.array([w_next.beta]), w_next.p[None, :],
                            w_next.a[None, :], w_next.c, ctrl, xv, rho)
    return U[0].copy(), float(vals[0])


def greedy_control(dyn: AffineDynamics, reward: RewardModel, V_next: MaxPlusValueTable,
                   ctrl: ControlSet, x, rho: float | None = None
                   ) -> tuple[np.ndarray, float, int]:
    """Best (u, value, support index) over every support of V_next.

    Exchanging the sup over controls with the max over supports is exact, so
    the returned value is the one-step operator applied to the table at x.
    Ties resolve to the lowest support index.
    """
    if V_next.rank == 0:
        raise EmptyTableError("greedy control needs a nonempty successor table")
    xv = _as_vector(x, dyn.state_dim)
    if rho is None:
        rho = float(reward.state_reward(xv)[0])
    betas, ps, anchors = V_next.stacked()
    U, vals = _argmax_batch(dyn, reward, betas, ps, anchors, V_next.curvature,
                            ctrl, xv, rho)
    j = int(np.argmax(vals))
    return U[j].copy(), float(vals[j]), j


@dataclass(frozen=True, eq=False)
class ControlProblem:
    """Bundle of everything the solver needs: dynamics, reward, control set,
    terminal table, horizon, and the curvature schedule they imply."""

    dyn: AffineDynamics
    reward: RewardModel
    ctrl: ControlSet
    terminal: MaxPlusValueTable
    K: int

    def __post_init__(self):
        if self.K < 1:
            raise ValueError(f"K must be >= 1, got {self.K}")
        if self.terminal.dim != self.dyn.state_dim:
            raise DimensionMismatchError("terminal table dimension != state dimension")
        if self.reward.control_dim != self.dyn.control_dim:
            raise DimensionMismatchError("Q_u dimension != control dimension")
        q = self.reward.control_cost_scalar
        b = self.dyn._scalar_B
        if (q is not None and b is not None
                and self.ctrl.kind == "unconstrained"
                and self.reward.gamma_certified):
            # Scalar control cost, scalar input map, no control clipping, and
            # a globally valid gamma_h: the exact smoothed recursion applies.
            schedule = smoothed_curvature_schedule(
                self.reward.gamma_h, self.terminal.curvature,
                self.dyn.opnorm_A, self.K, h=self.dyn.h,
                control_cost=q, input_scale=b)
        else:
            schedule = curvature_schedule(self.reward.gamma_h,
                                          self.terminal.curvature,
                                          self.dyn.opnorm_A, self.K)
        object.__setattr__(self, "schedule", schedule)

    @property
    def state_dim(self) -> int:
        return self.dyn.state_dim

    def stage_reward(self, x, u) -> float:
        """h l(x, u)."""
        xv = _as_vector(x, self.dyn.state_dim)
        uv = _as_vector(u, self.dyn.control_dim, name="u")
        rho = float(self.reward.state_reward(xv)[0])
        q = self.reward.control_cost_scalar
        if q is not None:
            quad = q * float((uv * uv).sum())
        else:
            quad = float(uv @ self.reward.control_quadratic @ uv)
        return self.dyn.h * rho - 0.5 * self.dyn.h * quad

    def terminal_value(self, x) -> float:
        return self.terminal.evaluate(x)[0]

    def realized_reward(self, states: np.ndarray, controls: np.ndarray) -> float:
        """Sum of stage rewards along a rollout plus the terminal value."""
        total = 0.0
        for k in range(controls.shape[0]):
            total += self.stage_reward(states[k], controls[k])
        return total + self.terminal_value(states[-1])
