"""Trajectory-guided enrichment of max-plus lower bounds.

Each outer iteration runs a backward sweep followed by a forward pass:

backward sweep (k = K-1 .. 0): at the reference state x_k, pick the greedy
control and the active successor support, form the one-step profile
G(x) = h l(x, u) + w_next(F(x, u)) with u frozen, and insert its supporting
quadratic at x_k (value G(x_k), slope h grad_x l + A' grad w_next, curvature
from the schedule). The sweep reads tables[k+1] as already enriched earlier in
the same sweep, which is what makes the -inf initialization well defined; a
strict mode that only reads the previous iteration's tables is available and
then requires nonempty initial tables.

forward pass: greedy rollout from x0 through the freshly enriched tables; the
resulting trajectory provides the next sweep's reference states.

Tables only gain supports (pruning aside), so the approximation is pointwise
nondecreasing in the iteration and stays a lower bound of the true value
everywhere; the value recorded at x0 must never decrease and each table's rank
can exceed its initial rank by at most the iteration count. Violations of
either invariant dump a checkpoint and abort.
"""

from __future__ import annotations

import math
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .control import (
    ControlProblem,
    greedy_control,
    inner_argmax,
    step_dynamics,
)
from .errors import (
    DimensionMismatchError,
    EmptyTableError,
    InvariantViolationError,
)
from .maxplus import (
    MaxPlusValueTable,
    ProbeSet,
    QuadraticSupport,
    _as_vector,
    active_support_mask,
    build_probe_set,
    grad_support,
)


@dataclass(frozen=True)
class Trajectory:
    """A rollout: states (K+1, n), controls (K, m), and its realized reward."""

    states: np.ndarray
    controls: np.ndarray
    realized_reward: float

    def __post_init__(self):
        S = np.asarray(self.states, dtype=np.float64)
        U = np.asarray(self.controls, dtype=np.float64)
        if S.ndim != 2 or U.ndim != 2 or S.shape[0] != U.shape[0] + 1:
            raise DimensionMismatchError(
                f"states {S.shape} and controls {U.shape} are not a (K+1, K) pair")
        S.setflags(write=False)
        U.setflags(write=False)
        object.__setattr__(self, "states", S)
        object.__setattr__(self, "controls", U)
        object.__setattr__(self, "realized_reward", float(self.realized_reward))

    @property
    def K(self) -> int:
        return self.controls.shape[0]


@dataclass(frozen=True)
class SupportProvenance:
    """How a support was built: the frozen control and the parent support of
    the one-step profile it lower-bounds. Enables the validity audit."""

    k: int
    iteration: int
    control: np.ndarray
    parent: QuadraticSupport


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    value_at_x0: float
    action_at_x0: float
    wall_seconds: float
    rank_min: int
    rank_mean: float
    rank_max: int
    supports_added: int
    supports_pruned: int


@dataclass(frozen=True)
class ProbeSpec:
    """Probe generation policy for pruning.

    total is a target count including the trajectory states (which are always
    all included); the remainder is Gaussian perturbations of them plus
    optional uniform box samples.
    """

    total: int = 4096
    sigma: float = 0.5
    box: tuple | None = None
    n_uniform: int = 0


class SolverState:
    """Mutable run state: tables, reference trajectory, history, provenance."""

    def __init__(self, problem: ControlProblem, x0: np.ndarray,
                 tables: list[MaxPlusValueTable], trajectory: Trajectory,
                 probe_rng: np.random.Generator, dedup_tol: float,
                 init_mode: str, bound_mode: str,
                 strict_previous_tables: bool = False, seed: int | None = None):
        self.problem = problem
        self.x0 = x0
        self.tables = tables
        self.trajectory = trajectory
        self.probe_rng = probe_rng
        self.dedup_tol = float(dedup_tol)
        self.init_mode = init_mode
        self.bound_mode = bound_mode
        self.strict_previous_tables = bool(strict_previous_tables)
        self.seed = seed
        self.iteration = 0
        self.history: list[IterationRecord] = []
        self.rank0 = np.array([t.rank for t in tables], dtype=np.int64)
        self.provenance: list[list[SupportProvenance | None]] = [
            [None] * t.rank for t in tables]
        self.last_inserted: list[int | None] = [None] * len(tables)

    @property
    def K(self) -> int:
        return self.problem.K

    def value_at_x0(self) -> float:
        return self.tables[0].evaluate(self.x0)[0]

    def ranks(self) -> np.ndarray:
        return np.array([t.rank for t in self.tables], dtype=np.int64)


def _rollout(problem: ControlProblem, x0: np.ndarray,
             controls: np.ndarray) -> Trajectory:
    K = problem.K
    n = problem.state_dim
    states = np.empty((K + 1, n))
    states[0] = x0
    for k in range(K):
        states[k + 1] = step_dynamics(problem.dyn, states[k], controls[k])
    realized = problem.realized_reward(states, controls)
    return Trajectory(states=states, controls=controls, realized_reward=realized)


def init(problem: ControlProblem, x0, *, init_mode: str = "zero_control",
         constant_control=None, custom_trajectory: Trajectory | None = None,
         bound_mode: str = "minus_infinity",
         bound_value: float | None = None, seed: int = 0,
         probe_rng: np.random.Generator | None = None,
         dedup_tol: float = 1e-9,
         strict_previous_tables: bool = False) -> SolverState:
    """Build the initial state: nominal trajectory plus starting tables.

    init_mode 'zero_control', 'constant_control' (with the control vector or
    scalar to hold), or 'custom' (with a Trajectory whose rollout starts at
    x0). bound_mode 'minus_infinity' leaves the non-terminal tables empty;
    'certified_constant' seeds each with one support of value bound_value
    anchored at x0, which stays a valid lower bound provided the caller
    certifies bound_value minorizes the true value everywhere.
    """
    x0 = _as_vector(x0, problem.state_dim, name="x0")
    K, n, m = problem.K, problem.state_dim, problem.dyn.control_dim
    if init_mode == "zero_control":
        controls = np.zeros((K, m))
    elif init_mode == "constant_control":
        if constant_control is None:
            raise ValueError("constant_control init needs the control value")
        u = np.broadcast_to(np.asarray(constant_control, dtype=np.float64), (m,))
        controls = np.tile(u, (K, 1))
    elif init_mode == "custom":
        if custom_trajectory is None:
            raise ValueError("custom init needs custom_trajectory")
        if custom_trajectory.K != K:
            raise DimensionMismatchError(
                f"custom trajectory has K={custom_trajectory.K}, problem K={K}")
        if not np.array_equal(custom_trajectory.states[0], x0):
            raise ValueError("custom trajectory does not start at x0")
        controls = np.array(custom_trajectory.controls)
        rebuilt = _rollout(problem, x0, controls)
        dev = float(np.abs(rebuilt.states - custom_trajectory.states).max())
        if dev > 1e-9:
            raise ValueError(
                f"custom trajectory is not a rollout of its controls (max "
                f"state deviation {dev:.3e})")
    else:
        raise ValueError(f"unknown init mode {init_mode!r}")
    trajectory = _rollout(problem, x0, controls)

    schedule = problem.schedule
    tables = [MaxPlusValueTable.empty(n, schedule.c[k]) for k in range(K)]
    tables.append(problem.terminal.copy())
    if bound_mode == "certified_constant":
        if bound_value is None or not math.isfinite(bound_value):
            raise ValueError("certified_constant init needs a finite bound_value")
        for k in range(K):
            tables[k].append(QuadraticSupport(
                float(bound_value), np.zeros(n), x0, schedule.c[k]))
    elif bound_mode != "minus_infinity":
        raise ValueError(f"unknown bound mode {bound_mode!r}")

    if probe_rng is None:
        from .seeding import rng_substream
        probe_rng = rng_substream(seed, "probes")
    return SolverState(problem, x0, tables, trajectory, probe_rng, dedup_tol,
                       init_mode, bound_mode, strict_previous_tables, seed=seed)


def backward_sweep(state: SolverState) -> SolverState:
    """Insert (at most) one support per step along the reference trajectory."""
    problem = state.problem
    dyn, reward, ctrl = problem.dyn, problem.reward, problem.ctrl
    schedule = problem.schedule
    tables = state.tables
    if state.strict_previous_tables:
        read_tables = [t.copy() for t in tables]
        for k in range(1, len(read_tables)):
            if read_tables[k].rank == 0:
                raise EmptyTableError(
                    f"strict sweep needs nonempty tables; tables[{k}] is empty "
                    "(the -inf initialization requires same-sweep freshness)")
    else:
        read_tables = tables
    added = 0
    iteration = state.iteration + 1
    identity_A = dyn._identity_A
    for k in range(problem.K - 1, -1, -1):
        xbar = state.trajectory.states[k]
        rho, grad_rho = reward.state_reward(xbar)
        u, value, idx = greedy_control(dyn, reward, read_tables[k + 1], ctrl,
                                       xbar, rho=float(rho))
        parent = read_tables[k + 1].support(idx)
        g_next = grad_support(parent, step_dynamics(dyn, xbar, u))
        if identity_A:
            slope = dyn.h * grad_rho + g_next
        else:
            slope = dyn.h * grad_rho + dyn.A.T @ g_next
        w = QuadraticSupport(value, slope, xbar, schedule.c[k])
        new_index = tables[k].insert(w, state.dedup_tol)
        if new_index is not None:
            state.provenance[k].append(SupportProvenance(
                k=k, iteration=iteration, control=np.array(u), parent=parent))
            state.last_inserted[k] = new_index
            added += 1
    state._last_sweep_added = added
    return state


def forward_pass(state: SolverState) -> SolverState:
    """Greedy rollout from x0 through the current tables."""
    problem = state.problem
    dyn, reward, ctrl = problem.dyn, problem.reward, problem.ctrl
    K, n, m = problem.K, problem.state_dim, problem.dyn.control_dim
    for k in range(1, K + 1):
        if state.tables[k].rank == 0:
            raise EmptyTableError(f"forward pass needs nonempty tables[{k}]")
    h = dyn.h
    q = reward.control_cost_scalar
    Q = reward.control_quadratic
    states = np.empty((K + 1, n))
    controls = np.empty((K, m))
    states[0] = state.x0
    total = 0.0
    for k in range(K):
        rho, _ = reward.state_reward(states[k])
        u, _, _ = greedy_control(dyn, reward, state.tables[k + 1], ctrl,
                                 states[k], rho=float(rho))
        controls[k] = u
        states[k + 1] = step_dynamics(dyn, states[k], u)
        if q is not None:
            quad = q * float((u * u).sum())
        else:
            quad = float(u @ Q @ u)
        total += h * float(rho) - 0.5 * h * quad
    total += problem.terminal_value(states[K])
    state.trajectory = Trajectory(states=states, controls=controls,
                                  realized_reward=total)
    return state


def _dump_violation_checkpoint(state: SolverState, path) -> str:
    from .outputs import atomic_write_json
    if path is None:
        path = Path(tempfile.gettempdir()) / "maxplusdp-violation-checkpoint.json"
    path = Path(path)
    atomic_write_json(path, state_to_dict(state))
    return str(path)


def _protected_indices(state: SolverState, k: int) -> set[int]:
    """Supports pruning must keep: the most recent insert, anchors sitting on
    the current reference trajectory, and the argmax winner at the reference
    state (so contact values survive pruning exactly)."""
    table = state.tables[k]
    protected: set[int] = set()
    if state.last_inserted[k] is not None:
        protected.add(state.last_inserted[k])
    if table.rank:
        xk = state.trajectory.states[k]
        _, _, anchors = table.stacked()
        on_traj = np.flatnonzero((anchors == xk[None, :]).all(axis=1))
        protected.update(int(j) for j in on_traj)
        _, winner = table.evaluate(xk)
        if winner is not None:
            protected.add(winner)
    return protected


def prune_tables(state: SolverState, spec: ProbeSpec) -> int:
    """Prune every non-terminal table against a fresh probe set.

    Returns the number of supports removed. The terminal table is never
    pruned: it is the exact terminal reward, not an approximation.
    """
    probes = build_probe_set(state.trajectory.states, spec.total, spec.sigma,
                             state.probe_rng, box=spec.box,
                             n_uniform=spec.n_uniform)
    removed = 0
    for k in range(state.K):
        table = state.tables[k]
        if table.rank == 0:
            continue
        mask = active_support_mask(table, probes)
        for j in _protected_indices(state, k):
            mask[j] = True
        if mask.all():
            continue
        kept = [j for j in range(table.rank) if mask[j]]
        remap = {old: new for new, old in enumerate(kept)}
        removed += table.rank - len(kept)
        state.tables[k] = table.subset(kept)
        state.provenance[k] = [state.provenance[k][j] for j in kept]
        if state.last_inserted[k] is not None:
            state.last_inserted[k] = remap[state.last_inserted[k]]
    return removed


def run(state: SolverState, iterations: int, *, prune_every: int = 0,
        probe_spec: ProbeSpec | None = None,
        checkpoint_on_violation=None,
        early_stop: bool = False, early_stop_tol: float = 1e-10,
        early_stop_patience: int = 20,
        callback=None) -> tuple[SolverState, list[IterationRecord]]:
    """Alternate sweeps and passes, recording history and enforcing the
    monotonicity and rank-bound invariants.

    Returns the state together with its accumulated history records.
    """
    if iterations < 0:
        raise ValueError("iterations must be >= 0")
    spec = probe_spec or ProbeSpec()
    t_start = time.perf_counter()
    prev_value = state.history[-1].value_at_x0 if state.history else None
    stale = 0
    for _ in range(iterations):
        backward_sweep(state)
        forward_pass(state)
        state.iteration += 1
        m = state.iteration
        pruned = 0
        if prune_every and m % prune_every == 0:
            pruned = prune_tables(state, spec)
        over = np.flatnonzero(state.ranks() - state.rank0 > m)
        if over.size:
            path = _dump_violation_checkpoint(state, checkpoint_on_violation)
            raise InvariantViolationError(
                f"rank bound violated at steps {over.tolist()} on iteration {m}",
                checkpoint_path=path)
        value = state.value_at_x0()
        if prev_value is not None and value < prev_value:
            path = _dump_violation_checkpoint(state, checkpoint_on_violation)
            raise InvariantViolationError(
                f"value at x0 decreased from {prev_value!r} to {value!r} "
                f"on iteration {m}", checkpoint_path=path)
        ranks = state.ranks()[:-1]  # stats over the approximation tables only
        record = IterationRecord(
            iteration=m,
            value_at_x0=value,
            action_at_x0=-value,
            wall_seconds=time.perf_counter() - t_start,
            rank_min=int(ranks.min()),
            rank_mean=float(ranks.mean()),
            rank_max=int(ranks.max()),
            supports_added=int(getattr(state, "_last_sweep_added", 0)),
            supports_pruned=int(pruned),
        )
        state.history.append(record)
        if callback is not None:
            callback(state, record)
        if early_stop and prev_value is not None:
            if value - prev_value < early_stop_tol:
                stale += 1
                if stale >= early_stop_patience:
                    break
            else:
                stale = 0
        prev_value = value
    return state, state.history


# ---------------------------------------------------------------------------
# audits


@dataclass(frozen=True)
class AuditReport:
    profile_pairs_checked: int
    profile_violations: list = field(default_factory=list)
    profile_skipped: int = 0
    oracle_points_checked: int = 0
    oracle_violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.profile_violations and not self.oracle_violations

    def summary(self) -> dict:
        return {
            "ok": self.ok,
            "profile_pairs_checked": self.profile_pairs_checked,
            "profile_violation_count": len(self.profile_violations),
            "profile_skipped": self.profile_skipped,
            "oracle_points_checked": self.oracle_points_checked,
            "oracle_violation_count": len(self.oracle_violations),
        }


def _profile_values(problem: ControlProblem, parent: QuadraticSupport,
                    X: np.ndarray, rho_X: np.ndarray) -> np.ndarray:
    """G(x) = sup_u [h l(x, u) + parent(F(x, u))] at each row of X.

    The control is re-optimized per state, matching the maximization the
    sweep used when it built the support from this parent. Supports carry
    the smoothed curvature of this sup, so freezing the recorded control
    would understate the profile away from the anchor."""
    dyn, reward, ctrl = problem.dyn, problem.reward, problem.ctrl
    h = dyn.h
    q = reward.control_cost_scalar
    sB = dyn._scalar_B
    if dyn._identity_A:
        Y = X + dyn.b[None, :]
    else:
        Y = X @ dyn.A.T + dyn.b[None, :]
    if q is not None and sB is not None:
        grads = parent.p[None, :] - parent.c * (Y - parent.a[None, :])
        denom = h * q + parent.c * (sB * sB)
        U = (sB / denom) * grads
        if ctrl.kind == "box":
            U = np.clip(U, ctrl.lower[None, :], ctrl.upper[None, :])
        diff = Y + sB * U - parent.a[None, :]
        return (parent.beta
                + (parent.p[None, :] * diff).sum(axis=-1)
                - (0.5 * parent.c) * (diff * diff).sum(axis=-1)
                - (0.5 * h * q) * (U * U).sum(axis=-1)
                + h * rho_X)
    out = np.empty(X.shape[0])
    for i in range(X.shape[0]):
        _, out[i] = inner_argmax(dyn, reward, parent, ctrl, X[i],
                                 rho=float(rho_X[i]))
    return out


def support_validity_audit(state: SolverState, *, count: int = 1000,
                           box: tuple | None = None,
                           rng: np.random.Generator | None = None,
                           oracle=None, profile_tol: float = 1e-9) -> AuditReport:
    """Check stored supports against their recomputed one-step profiles, and
    optionally against a grid oracle upper reference.

    Each support with provenance must satisfy w <= G + tol at ``count``
    sampled states plus its own anchor, where G maximizes the one-step
    objective against the recorded parent support at each state; supports
    without provenance (terminal, constant bound) are skipped. With an
    oracle, every table value at every grid node must stay within the
    oracle's certified tolerance of it.
    """
    problem = state.problem
    n = problem.state_dim
    if rng is None:
        from .seeding import rng_substream
        rng = rng_substream(state.seed or 0, "audit")
    if box is None:
        lo = state.trajectory.states.min(axis=0) - 1.0
        hi = state.trajectory.states.max(axis=0) + 1.0
    else:
        lo = np.broadcast_to(np.asarray(box[0], dtype=np.float64), (n,))
        hi = np.broadcast_to(np.asarray(box[1], dtype=np.float64), (n,))
    X = rng.uniform(lo, hi, size=(count, n))
    rho_X = np.array([problem.reward.state_reward(x)[0] for x in X])

    checked = 0
    skipped = 0
    violations = []
    for k in range(state.K):
        table = state.tables[k]
        for j in range(table.rank):
            prov = state.provenance[k][j]
            if prov is None:
                skipped += 1
                continue
            w = table.support(j)
            pts = np.vstack([X, w.a[None, :]])
            rho_pts = np.concatenate([rho_X, [problem.reward.state_reward(w.a)[0]]])
            G = _profile_values(problem, prov.parent, pts, rho_pts)
            diff = pts - w.a[None, :]
            w_vals = (w.beta + (w.p[None, :] * diff).sum(axis=-1)
                      - (0.5 * w.c) * (diff * diff).sum(axis=-1))
            tol = profile_tol * np.maximum(1.0, np.abs(G))
            bad = np.flatnonzero(w_vals > G + tol)
            checked += 1
            for i in bad:
                violations.append({
                    "k": k, "support": j, "sample": int(i),
                    "support_value": float(w_vals[i]), "profile_value": float(G[i]),
                })

    oracle_checked = 0
    oracle_violations = []
    if oracle is not None:
        if oracle.values.shape[0] != state.K + 1:
            raise DimensionMismatchError("oracle horizon does not match the run")
        nodes = oracle.node_states()
        for k in range(state.K + 1):
            vals, _ = state.tables[k].evaluate_batch(nodes)
            ref = oracle.values[k].reshape(-1)
            bad = np.flatnonzero(vals > ref + oracle.tolerance)
            oracle_checked += nodes.shape[0]
            for i in bad:
                oracle_violations.append({
                    "k": k, "node": int(i), "table_value": float(vals[i]),
                    "oracle_value": float(ref[i]),
                })
    return AuditReport(
        profile_pairs_checked=checked,
        profile_violations=violations,
        profile_skipped=skipped,
        oracle_points_checked=oracle_checked,
        oracle_violations=oracle_violations,
    )


def bellman_slack(state: SolverState, points_per_step: int = 100,
                  rng: np.random.Generator | None = None,
                  box: tuple | None = None) -> float:
    """Largest amount by which any table exceeds the one-step operator applied
    to its successor table, over sampled states. Nonpositive (up to float
    noise) for insert-only runs."""
    problem = state.problem
    n = problem.state_dim
    if rng is None:
        from .seeding import rng_substream
        rng = rng_substream(state.seed or 0, "audit")
    if box is None:
        lo = state.trajectory.states.min(axis=0) - 1.0
        hi = state.trajectory.states.max(axis=0) + 1.0
    else:
        lo = np.broadcast_to(np.asarray(box[0], dtype=np.float64), (n,))
        hi = np.broadcast_to(np.asarray(box[1], dtype=np.float64), (n,))
    worst = -math.inf
    for k in range(state.K):
        if state.tables[k].rank == 0 or state.tables[k + 1].rank == 0:
            continue
        X = rng.uniform(lo, hi, size=(points_per_step, n))
        for x in X:
            lhs = state.tables[k].evaluate(x)[0]
            _, rhs, _ = greedy_control(problem.dyn, problem.reward,
                                       state.tables[k + 1], problem.ctrl, x)
            worst = max(worst, lhs - rhs)
    return worst


# ---------------------------------------------------------------------------
# checkpoint (de)serialization


def state_to_dict(state: SolverState, include_provenance: bool = True) -> dict:
    prov = None
    if include_provenance:
        prov = []
        for k in range(len(state.tables)):
            rows = []
            for rec in state.provenance[k]:
                if rec is None:
                    rows.append(None)
                else:
                    rows.append({
                        "k": rec.k, "iteration": rec.iteration,
                        "control": rec.control.tolist(),
                        "parent": {"beta": rec.parent.beta,
                                   "p": rec.parent.p.tolist(),
                                   "a": rec.parent.a.tolist(),
                                   "c": rec.parent.c},
                    })
            prov.append(rows)
    return {
        "format": "maxplusdp-checkpoint",
        "version": 1,
        "iteration": state.iteration,
        "seed": state.seed,
        "dedup_tol": state.dedup_tol,
        "dim": state.problem.state_dim,
        "K": state.K,
        "init_mode": state.init_mode,
        "bound_mode": state.bound_mode,
        "x0": state.x0.tolist(),
        "schedule": {
            "c": state.problem.schedule.c.tolist(),
            "gamma_h": state.problem.schedule.gamma_h,
            "opnorm_A": state.problem.schedule.opnorm_A,
        },
        "trajectory": {
            "states": state.trajectory.states.tolist(),
            "controls": state.trajectory.controls.tolist(),
            "realized_reward": state.trajectory.realized_reward,
        },
        "rank0": state.rank0.tolist(),
        "last_inserted": list(state.last_inserted),
        "tables": [t.to_dict() for t in state.tables],
        "provenance": prov,
        "probe_rng_state": state.probe_rng.bit_generator.state,
        "history": [vars(r) | {} for r in state.history],
    }


def state_from_dict(problem: ControlProblem, data: dict) -> SolverState:
    if data.get("format") != "maxplusdp-checkpoint":
        raise ValueError("not a solver checkpoint")
    if data.get("version") != 1:
        raise ValueError(f"unsupported checkpoint version {data.get('version')!r}")
    stored_c = np.asarray(data["schedule"]["c"], dtype=np.float64)
    if stored_c.shape != problem.schedule.c.shape or not np.array_equal(
            stored_c, problem.schedule.c):
        raise ValueError("checkpoint curvature schedule does not match the problem")
    tables = [MaxPlusValueTable.from_dict(t) for t in data["tables"]]
    trajectory = Trajectory(
        states=np.asarray(data["trajectory"]["states"], dtype=np.float64),
        controls=np.asarray(data["trajectory"]["controls"], dtype=np.float64),
        realized_reward=data["trajectory"]["realized_reward"],
    )
    probe_rng = np.random.default_rng()
    probe_rng.bit_generator.state = data["probe_rng_state"]
    state = SolverState(problem, np.asarray(data["x0"], dtype=np.float64),
                        tables, trajectory, probe_rng, data["dedup_tol"],
                        data["init_mode"], data["bound_mode"],
                        seed=data.get("seed"))
    state.iteration = int(data["iteration"])
    state.rank0 = np.asarray(data["rank0"], dtype=np.int64)
    state.last_inserted = [None if v is None else int(v)
                           for v in data["last_inserted"]]
    if data.get("provenance") is not None:
        prov = []
        for rows in data["provenance"]:
            out = []
            for rec in rows:
                if rec is None:
                    out.append(None)
                else:
                    out.append(SupportProvenance(
                        k=int(rec["k"]), iteration=int(rec["iteration"]),
                        control=np.asarray(rec["control"], dtype=np.float64),
                        parent=QuadraticSupport(rec["parent"]["beta"],
                                                rec["parent"]["p"],
                                                rec["parent"]["a"],
                                                rec["parent"]["c"])))
            prov.append(out)
        state.provenance = prov
    else:
        state.provenance = [[None] * t.rank for t in tables]
    state.history = [IterationRecord(**r) for r in data.get("history", [])]
    return state
