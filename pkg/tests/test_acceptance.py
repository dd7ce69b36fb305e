"""Acceptance runs covering the library's headline guarantees end to end.

Each test exercises one guarantee on a full-size instance and reports a
single PASS/FAIL line in the terminal summary. Fixtures are module scoped so
the expensive runs happen once and are shared by the checks that inspect
them.
"""

import json
import os
import subprocess
import sys
import time
from dataclasses import replace

import numpy as np
import pytest

from maxplusdp import solver
from maxplusdp.maxplus import MaxPlusValueTable, QuadraticSupport
from maxplusdp.nbody import NBodyParams, build_problem, initial_circle
from maxplusdp.oracles import (
    DirectProblem,
    SeparableQuadratic,
    direct_propagation,
    grid_value_iteration,
    riccati_solve,
)
from maxplusdp.runner import audit_bundle, load_bundle, reproduce_figure
from maxplusdp.solver import bellman_slack, run, support_validity_audit


PAPER = dict(k_trap=0.35, k_T=5.0, R_diag=0.5, eps=0.2)


@pytest.fixture(scope="module")
def two_body():
    """2-body interacting run, 50 iterations, no pruning, with per-iteration
    snapshots of table values at 100 fixed random states per step."""
    params = NBodyParams(N=2, d=2, kappa=1.5, T=10.0, h=0.05, K=200, **PAPER)
    problem = build_problem(params, curvature_mode="trap")
    x0 = initial_circle(params, 10.0)
    state = solver.init(problem, x0, seed=7)
    rank0 = state.ranks().copy()

    rng = np.random.default_rng(2024)
    probes = rng.uniform(-12.0, 12.0, size=(params.K + 1, 100, 4))
    value_snaps = []
    rank_snaps = []

    def snapshot(st, record):
        vals = np.stack([st.tables[k].evaluate_batch(probes[k])[0]
                         for k in range(params.K + 1)])
        value_snaps.append(vals)
        rank_snaps.append(st.ranks().copy())

    t0 = time.perf_counter()
    state, history = run(state, 50, callback=snapshot)
    elapsed = time.perf_counter() - t0
    return {"state": state, "history": history, "rank0": rank0,
            "value_snaps": value_snaps, "rank_snaps": rank_snaps,
            "elapsed": elapsed}


@pytest.fixture(scope="module")
def one_d():
    """1-D single particle run plus a certified grid reference."""
    params = NBodyParams(N=1, d=1, kappa=0.0, T=1.0, h=0.05, K=20, **PAPER)
    problem = build_problem(params)
    state = solver.init(problem, [3.0], seed=3)
    t0 = time.perf_counter()
    state, history = run(state, 50)
    grid = grid_value_iteration(problem, (-5.0, 5.0), 2001, (-40.0, 40.0), 801)
    elapsed = time.perf_counter() - t0
    return {"state": state, "history": history, "grid": grid,
            "params": params, "elapsed": elapsed}


@pytest.fixture(scope="module")
def no_interaction():
    """2-body run with the pair coupling switched off, against the exact
    linear-quadratic solution."""
    params = NBodyParams(N=2, d=2, kappa=0.0, T=10.0, h=0.05, K=200, **PAPER)
    problem = build_problem(params)
    x0 = initial_circle(params, 10.0)
    state = solver.init(problem, x0, seed=5)
    t0 = time.perf_counter()
    state, history = run(state, 100)
    elapsed = time.perf_counter() - t0
    return {"state": state, "history": history, "x0": x0, "params": params,
            "elapsed": elapsed}


@pytest.fixture(scope="module")
def circle5(tmp_path_factory):
    out = tmp_path_factory.mktemp("circle5") / "bundle"
    t0 = time.perf_counter()
    out_dir, _ = reproduce_figure("circle5", "desk", out)
    elapsed = time.perf_counter() - t0
    summary = json.loads((out_dir / "summary.json").read_text())
    return {"summary": summary, "elapsed": elapsed, "bundle": out_dir}


@pytest.fixture(scope="module")
def circle10(tmp_path_factory):
    out = tmp_path_factory.mktemp("circle10") / "bundle"
    t0 = time.perf_counter()
    out_dir, _ = reproduce_figure("circle10", "desk", out)
    elapsed = time.perf_counter() - t0
    summary = json.loads((out_dir / "summary.json").read_text())
    return {"summary": summary, "elapsed": elapsed, "bundle": out_dir}


def test_value_curve_monotone_at_x0_and_pointwise(two_body, criterion):
    with criterion("value at x0 and table values never decrease over 50 "
                   "iterations (2-body, no pruning)"):
        values = [rec.value_at_x0 for rec in two_body["history"]]
        assert len(values) == 50
        assert all(b >= a for a, b in zip(values, values[1:]))
        snaps = two_body["value_snaps"]
        assert np.all(np.isfinite(snaps[0]))
        for before, after in zip(snaps, snaps[1:]):
            assert np.all(after >= before)
        assert two_body["elapsed"] < 60.0


def test_rank_grows_at_most_one_support_per_iteration(two_body, criterion):
    with criterion("table rank grows by at most one support per iteration"):
        rank0 = two_body["rank0"]
        for m, ranks in enumerate(two_body["rank_snaps"], start=1):
            assert np.all(ranks <= rank0 + m), f"iteration {m}"


def test_tables_stay_below_certified_grid_values(one_d, criterion):
    with criterion("1-D tables sit below the grid reference plus its "
                   "certified tolerance at every node and step"):
        grid = one_d["grid"]
        state = one_d["state"]
        nodes = grid.node_states()
        violations = 0
        for k in range(grid.K + 1):
            vals, _ = state.tables[k].evaluate_batch(nodes)
            violations += int(
                (vals > grid.values[k].reshape(-1) + grid.tolerance).sum())
        assert violations == 0
        assert one_d["elapsed"] < 60.0


def test_matches_exact_lqr_value_and_trajectory(no_interaction, criterion):
    with criterion("interaction-free value and trajectory match the exact "
                   "recursion within 1e-4"):
        sol = riccati_solve(no_interaction["params"])
        x0 = no_interaction["x0"]
        v_exact = sol.value(0, x0)
        v_table = no_interaction["history"][-1].value_at_x0
        assert abs(v_table - v_exact) <= 1e-4
        states_exact, _, _ = sol.rollout(x0)
        deviation = np.max(np.abs(no_interaction["state"].trajectory.states
                                  - states_exact))
        assert deviation <= 1e-4
        assert no_interaction["elapsed"] < 60.0


def test_one_step_subsolution_slack(two_body, one_d, no_interaction,
                                    criterion):
    with criterion("final tables satisfy the one-step subsolution "
                   "inequality with slack <= 1e-8"):
        for fixture in (two_body, one_d, no_interaction):
            slack = bellman_slack(fixture["state"],
                                  rng=np.random.default_rng(11))
            assert slack <= 1e-8


def _with_bumped_support(table, index, delta):
    fresh = MaxPlusValueTable(table.dim, table.curvature)
    for j in range(table.rank):
        w = table.support(j)
        beta = w.beta + (delta if j == index else 0.0)
        fresh.append(QuadraticSupport(beta, w.p, w.a, w.c))
    return fresh


def test_supports_below_profiles_and_corruption_detected(one_d, criterion):
    with criterion("every stored support sits below its recomputed profile "
                   "at 1000 states; inflating any support is caught"):
        state = one_d["state"]
        report = support_validity_audit(state, count=1000,
                                        rng=np.random.default_rng(0))
        assert report.ok
        assert report.profile_violations == []
        assert report.profile_pairs_checked > 0

        rng = np.random.default_rng(13)
        candidates = [(k, j) for k in range(state.problem.K)
                      for j in range(state.tables[k].rank)]
        picks = rng.choice(len(candidates), size=10, replace=False)
        for pick in picks:
            k, j = candidates[int(pick)]
            original = state.tables[k]
            state.tables[k] = _with_bumped_support(original, j, 1e-3)
            try:
                bad = support_validity_audit(state, count=150,
                                             rng=np.random.default_rng(1))
                assert not bad.ok
                assert any(v["k"] == k and v["support"] == j
                           for v in bad.profile_violations)
            finally:
                state.tables[k] = original

        # the terminal support carries no provenance; the grid cross-check
        # still catches an inflated copy of it
        K = state.problem.K
        original = state.tables[K]
        state.tables[K] = _with_bumped_support(original, 0, 1.0)
        try:
            bad = support_validity_audit(state, count=50,
                                         rng=np.random.default_rng(2),
                                         oracle=one_d["grid"])
            assert not bad.ok
            assert any(v["k"] == K for v in bad.oracle_violations)
        finally:
            state.tables[K] = original


def test_decoupled_pair_value_is_sum_of_singles(criterion):
    with criterion("rank-1 interaction on decoupled particles keeps the "
                   "value a sum of single-particle values (1e-10)"):
        singles = [
            (SeparableQuadratic(const=-1.0, lin=np.array([[0.3]]),
                                quad=np.array([5.0])),
             SeparableQuadratic(const=0.2, lin=np.array([[0.1]]),
                                quad=np.array([0.5]))),
            (SeparableQuadratic(const=-2.0, lin=np.array([[-0.4]]),
                                quad=np.array([4.0])),
             SeparableQuadratic(const=-0.1, lin=np.array([[0.2]]),
                                quad=np.array([0.3]))),
        ]
        shared = dict(h=0.05, K=4, k_trap=0.35, r_control=1.0)
        props = [
            direct_propagation(DirectProblem(
                N=1, d=1, terminal=(term,), interaction=(inter,), **shared))
            for term, inter in singles
        ]
        pair_terminal = SeparableQuadratic(
            const=-3.0, lin=np.array([[0.3], [-0.4]]),
            quad=np.array([5.0, 4.0]))
        pair_interaction = SeparableQuadratic(
            const=0.1, lin=np.array([[0.1], [0.2]]),
            quad=np.array([0.5, 0.3]))
        pair = direct_propagation(DirectProblem(
            N=2, d=1, terminal=(pair_terminal,),
            interaction=(pair_interaction,), **shared))

        assert tuple(pair.ranks_pre_dedup) == (1, 1, 1, 1, 1)
        assert tuple(pair.ranks_post_dedup) == (1, 1, 1, 1, 1)

        rng = np.random.default_rng(4)
        points = rng.uniform(-3.0, 3.0, size=(20, 2))
        for x1, x2 in points:
            for k in range(shared["K"] + 1):
                joint = pair.evaluate(k, np.array([x1, x2]))
                split = (props[0].evaluate(k, np.array([x1]))
                         + props[1].evaluate(k, np.array([x2])))
                assert joint == pytest.approx(split, abs=1e-10)


def test_interaction_rank_trace(criterion):
    with criterion("rank 2 terminal with rank 3 interaction multiplies to "
                   "(2, 6, 18, 54) over three steps"):
        terminal = tuple(
            SeparableQuadratic(const=-float(i), lin=np.zeros((1, 1)),
                               quad=np.array([5.0 + 0.5 * i]))
            for i in range(2))
        interaction = tuple(
            SeparableQuadratic(const=0.1 * j,
                               lin=np.full((1, 1), 0.2 * (j + 1)),
                               quad=np.zeros(1))
            for j in range(3))
        result = direct_propagation(DirectProblem(
            N=1, d=1, h=0.05, K=3, k_trap=0.35, r_control=0.5,
            terminal=terminal, interaction=interaction))
        assert tuple(result.ranks_pre_dedup) == (2, 6, 18, 54)


def test_circle_swarms_settle_on_radius_plateau(circle5, circle10, criterion):
    with criterion("5- and 10-body circle runs settle on a radius plateau; "
                   "the 10-body plateau is wider"):
        for fixture in (circle5, circle10):
            summary = fixture["summary"]
            assert summary["dispersion_ratio"] < 0.10
            assert summary["final_mean_radius"] < summary["plateau_radius"]
            assert summary["value_curve_monotone"] is True
            assert fixture["elapsed"] < 300.0
        assert (circle10["summary"]["plateau_radius"]
                > circle5["summary"]["plateau_radius"])


def test_hundred_body_run_within_budget(tmp_path_factory, criterion):
    with criterion("100-body run finishes within 10 minutes with a monotone "
                   "value curve and a clean audit"):
        out = tmp_path_factory.mktemp("large100") / "bundle"
        t0 = time.perf_counter()
        out_dir, state = reproduce_figure("large100", "desk", out)
        elapsed = time.perf_counter() - t0
        assert elapsed <= 600.0
        summary = json.loads((out_dir / "summary.json").read_text())
        assert summary["value_curve_monotone"] is True
        _, loaded = load_bundle(out_dir)
        for rec in loaded.history:
            assert rec.rank_max <= rec.iteration
        report = audit_bundle(out_dir, count=1000)
        assert report.ok


DETERMINISM_TOML = """\
seed = 21

[problem]
N = 2
d = 2
k_trap = 0.35
k_T = 5.0
R_diag = 0.5
kappa = 1.5
eps = 0.2
h = 0.05
K = 50

[initial_state]
kind = "circle"
radius = 10.0

[solver]
iterations = 5
prune_every = 3
probe_total = 512
curvature_mode = "trap"
"""


def test_repeat_runs_produce_identical_csv_bytes(tmp_path, criterion):
    with criterion("same config, seed, and single thread give byte-identical "
                   "CSV outputs across two runs"):
        config = tmp_path / "det.toml"
        config.write_text(DETERMINISM_TOML)
        env = dict(os.environ, MAXPLUSDP_THREADS="1")
        outs = [tmp_path / "a", tmp_path / "b"]
        for out in outs:
            proc = subprocess.run(
                [sys.executable, "-m", "maxplusdp.cli", "solve",
                 "--config", str(config), "--out", str(out)],
                env=env, capture_output=True, text=True)
            assert proc.returncode == 0, proc.stderr

        for name in ("rank_vs_iteration.csv", "trajectory.csv", "radii.csv"):
            assert (outs[0] / name).read_bytes() == \
                (outs[1] / name).read_bytes(), name

        # the value curve carries a measured wall-clock column; every other
        # cell must agree byte for byte
        rows = []
        for out in outs:
            lines = (out / "value_vs_iteration.csv").read_text().splitlines()
            header = lines[0].split(",")
            drop = header.index("wall_seconds")
            rows.append([
                [cell for i, cell in enumerate(line.split(",")) if i != drop]
                for line in lines
            ])
        assert rows[0] == rows[1]
