"""Tests for config parsing, overrides, seeding, and file outputs."""

import json

import numpy as np
import pytest

from maxplusdp.config import (
    InitialState,
    OutputOptions,
    RunConfig,
    SolverOptions,
    apply_overrides,
    load_config,
    load_config_dict,
)
from maxplusdp.errors import ConfigError
from maxplusdp.outputs import (
    atomic_write_json,
    atomic_write_text,
    build_manifest,
    fmt,
    read_checkpoint,
    read_manifest,
    trajectory_columns,
    write_checkpoint,
    write_csv,
    write_radii,
    write_rank_history,
    write_trajectory,
    write_value_history,
)
from maxplusdp.seeding import SUBSTREAMS, rng_substream
from maxplusdp.solver import IterationRecord, Trajectory


BASE = {
    "seed": 42,
    "problem": {"N": 2, "d": 2, "k_trap": 0.35, "k_T": 5.0, "R_diag": 0.5,
                "kappa": 1.5, "eps": 0.2, "h": 0.05, "K": 40},
    "initial_state": {"kind": "circle", "radius": 10.0},
    "solver": {"iterations": 10, "curvature_mode": "trap"},
    "outputs": {"directory": "out"},
}


def base_dict():
    return json.loads(json.dumps(BASE))


class TestRunConfig:
    def test_basic_parse(self):
        config = RunConfig.from_dict(base_dict())
        assert config.seed == 42
        assert config.problem.N == 2
        assert config.problem.T == pytest.approx(2.0)
        assert config.solver.iterations == 10
        assert config.solver.prune_every == 25
        assert config.outputs.directory == "out"

    def test_round_trip(self):
        config = RunConfig.from_dict(base_dict())
        again = RunConfig.from_dict(config.to_dict())
        assert again == config

    def test_round_trip_with_optionals(self):
        data = base_dict()
        data["problem"]["control_box"] = 30.0
        data["solver"]["bound_mode"] = "certified_constant"
        data["solver"]["bound_value"] = -1e6
        data["initial_state"] = {"kind": "explicit",
                                 "points": [[1.0, 2.0], [3.0, 4.0]]}
        config = RunConfig.from_dict(data)
        again = RunConfig.from_dict(config.to_dict())
        assert again == config
        assert again.control_box == 30.0

    @pytest.mark.parametrize("given,missing", [
        ({"h": 0.05, "K": 40}, "T"),
        ({"T": 2.0, "K": 40}, "h"),
        ({"T": 2.0, "h": 0.05}, "K"),
    ])
    def test_two_of_three_horizon_fields(self, given, missing):
        data = base_dict()
        data["problem"].pop("h")
        data["problem"].pop("K")
        data["problem"].update(given)
        config = RunConfig.from_dict(data)
        assert config.problem.K == 40
        assert config.problem.h == pytest.approx(0.05)
        assert config.problem.T == pytest.approx(2.0)

    def test_single_horizon_field_rejected(self):
        data = base_dict()
        data["problem"].pop("h")  # leaves K only
        with pytest.raises(ConfigError):
            RunConfig.from_dict(data)

    def test_inconsistent_horizon_rejected(self):
        data = base_dict()
        data["problem"]["T"] = 3.0  # h * K = 2.0
        with pytest.raises(ConfigError):
            RunConfig.from_dict(data)

    def test_unknown_key_named_in_error(self):
        data = base_dict()
        data["problem"]["gravity"] = 9.8
        with pytest.raises(ConfigError, match="problem.gravity"):
            RunConfig.from_dict(data)

    def test_unknown_solver_key(self):
        data = base_dict()
        data["solver"]["warmup"] = 5
        with pytest.raises(ConfigError, match="solver.warmup"):
            RunConfig.from_dict(data)

    def test_missing_required_section(self):
        data = base_dict()
        del data["initial_state"]
        with pytest.raises(ConfigError, match="initial_state"):
            RunConfig.from_dict(data)

    def test_boolean_not_accepted_as_number(self):
        data = base_dict()
        data["problem"]["k_trap"] = True
        with pytest.raises(ConfigError):
            RunConfig.from_dict(data)

    def test_resolve_circle_x0(self):
        config = RunConfig.from_dict(base_dict())
        x0 = config.resolve_x0()
        np.testing.assert_allclose(np.linalg.norm(x0.reshape(2, 2), axis=1),
                                   [10.0, 10.0], rtol=1e-14)

    def test_resolve_annulus_x0_deterministic(self):
        data = base_dict()
        data["initial_state"] = {"kind": "annulus", "r_min": 1.0, "r_max": 2.0}
        c1 = RunConfig.from_dict(data)
        c2 = RunConfig.from_dict(json.loads(json.dumps(data)))
        np.testing.assert_array_equal(c1.resolve_x0(), c2.resolve_x0())
        radii = np.linalg.norm(c1.resolve_x0().reshape(2, 2), axis=1)
        assert np.all(radii >= 1.0) and np.all(radii <= 2.0)

    def test_resolve_explicit_x0_checks_length(self):
        data = base_dict()
        data["initial_state"] = {"kind": "explicit", "points": [[1.0, 2.0]]}
        config = RunConfig.from_dict(data)
        with pytest.raises(ConfigError):
            config.resolve_x0()

    def test_build_problem_uses_config_choices(self):
        data = base_dict()
        data["problem"]["control_box"] = 12.0
        config = RunConfig.from_dict(data)
        problem = config.build_problem()
        assert problem.K == 40
        assert problem.ctrl.kind == "box"
        assert problem.reward.gamma_h == pytest.approx(0.05 * 0.35)

    def test_probe_spec_reflects_options(self):
        data = base_dict()
        data["solver"].update({"probe_total": 512, "probe_sigma": 0.25})
        spec = RunConfig.from_dict(data).probe_spec()
        assert spec.total == 512
        assert spec.sigma == 0.25


class TestSolverOptionsValidation:
    def test_iterations_required_positive(self):
        with pytest.raises(ConfigError):
            SolverOptions(iterations=0)

    def test_constant_control_mode_needs_value(self):
        with pytest.raises(ConfigError):
            SolverOptions(iterations=1, init_mode="constant_control")

    def test_bound_mode_needs_value(self):
        with pytest.raises(ConfigError):
            SolverOptions(iterations=1, bound_mode="certified_constant")

    def test_unknown_curvature_mode(self):
        with pytest.raises(ConfigError):
            SolverOptions(iterations=1, curvature_mode="exact")

    def test_initial_state_kinds(self):
        with pytest.raises(ConfigError):
            InitialState(kind="grid")
        with pytest.raises(ConfigError):
            InitialState(kind="circle")
        with pytest.raises(ConfigError):
            InitialState(kind="annulus", r_min=2.0, r_max=1.0)
        with pytest.raises(ConfigError):
            InitialState(kind="explicit")


class TestLoadConfig:
    def test_toml(self, tmp_path):
        text = """
seed = 7
[problem]
N = 1
d = 1
k_trap = 0.35
k_T = 5.0
R_diag = 0.5
h = 0.05
K = 20
[initial_state]
kind = "explicit"
points = [[3.0]]
[solver]
iterations = 5
"""
        path = tmp_path / "run.toml"
        path.write_text(text)
        config = load_config(path)
        assert config.seed == 7
        assert config.problem.state_dim == 1
        np.testing.assert_array_equal(config.resolve_x0(), [3.0])

    def test_json(self, tmp_path):
        path = tmp_path / "run.json"
        path.write_text(json.dumps(BASE))
        config = load_config(path)
        assert config == RunConfig.from_dict(base_dict())

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_config(tmp_path / "nope.toml")

    def test_unknown_suffix(self, tmp_path):
        path = tmp_path / "run.yaml"
        path.write_text("seed: 1")
        with pytest.raises(ConfigError, match="toml or .json"):
            load_config_dict(path)


class TestOverrides:
    def test_scalar_override(self):
        out = apply_overrides(base_dict(), ["solver.iterations=3", "seed=9"])
        config = RunConfig.from_dict(out)
        assert config.solver.iterations == 3
        assert config.seed == 9

    def test_types_parse_as_json(self):
        out = apply_overrides(base_dict(), [
            "solver.early_stop=true",
            "problem.kappa=0.0",
            "outputs.directory=elsewhere",
        ])
        config = RunConfig.from_dict(out)
        assert config.solver.early_stop is True
        assert config.problem.kappa == 0.0
        assert config.outputs.directory == "elsewhere"

    def test_original_not_mutated(self):
        data = base_dict()
        apply_overrides(data, ["solver.iterations=99"])
        assert data["solver"]["iterations"] == 10

    def test_nested_creation(self):
        data = base_dict()
        del data["outputs"]
        out = apply_overrides(data, ["outputs.csv=false"])
        assert out["outputs"] == {"csv": False}

    def test_malformed_override(self):
        with pytest.raises(ConfigError):
            apply_overrides(base_dict(), ["solver.iterations"])
        with pytest.raises(ConfigError):
            apply_overrides(base_dict(), ["=5"])

    def test_descending_through_scalar_rejected(self):
        with pytest.raises(ConfigError):
            apply_overrides(base_dict(), ["seed.sub=1"])

    def test_overridden_config_still_validated(self):
        out = apply_overrides(base_dict(), ["solver.bogus=1"])
        with pytest.raises(ConfigError, match="solver.bogus"):
            RunConfig.from_dict(out)


class TestSeeding:
    def test_substream_names(self):
        assert SUBSTREAMS == ("initial_state", "probes", "curvature", "audit",
                              "demo")

    def test_reproducible(self):
        a = rng_substream(5, "probes").standard_normal(4)
        b = rng_substream(5, "probes").standard_normal(4)
        np.testing.assert_array_equal(a, b)

    def test_streams_differ_by_name_and_seed(self):
        a = rng_substream(5, "probes").standard_normal(4)
        b = rng_substream(5, "audit").standard_normal(4)
        c = rng_substream(6, "probes").standard_normal(4)
        assert not np.array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_unknown_substream(self):
        with pytest.raises(ValueError):
            rng_substream(5, "mystery")


class TestOutputs:
    def test_fmt_round_trips_floats(self):
        for x in (0.1, 1 / 3, -2.5e-17, 6.587308750742398, float(np.float64(np.pi))):
            assert float(fmt(x)) == x
        assert fmt(3) == "3"
        assert fmt(True) == "true"
        assert fmt(np.float64(0.25)) == "0.25"

    def test_write_csv(self, tmp_path):
        path = tmp_path / "t.csv"
        write_csv(path, ["a", "b"], [(1, 0.5), (2, None)])
        assert path.read_text() == "a,b\n1,0.5\n2,\n"

    def test_atomic_text_replaces(self, tmp_path):
        path = tmp_path / "x.txt"
        atomic_write_text(path, "one")
        atomic_write_text(path, "two")
        assert path.read_text() == "two"
        assert list(tmp_path.iterdir()) == [path]  # no temp leftovers

    def test_value_history_header(self, tmp_path):
        rec = IterationRecord(iteration=1, value_at_x0=-2.5, action_at_x0=2.5,
                              wall_seconds=0.1, rank_min=1, rank_mean=1.0,
                              rank_max=1, supports_added=3, supports_pruned=0)
        path = tmp_path / "value.csv"
        write_value_history(path, [rec])
        lines = path.read_text().splitlines()
        assert lines[0] == "iteration,v_at_x0,action_V_at_x0,wall_seconds"
        assert lines[1].startswith("1,-2.5,2.5,")

    def test_rank_history_header(self, tmp_path):
        rec = IterationRecord(iteration=2, value_at_x0=0.0, action_at_x0=0.0,
                              wall_seconds=0.1, rank_min=1, rank_mean=1.5,
                              rank_max=2, supports_added=1, supports_pruned=0)
        path = tmp_path / "rank.csv"
        write_rank_history(path, [rec])
        lines = path.read_text().splitlines()
        assert lines[0] == "iteration,rank_min,rank_mean,rank_max"
        assert lines[1] == "2,1,1.5,2"

    def test_trajectory_columns_planar(self):
        assert trajectory_columns(2, 2) == ["p0_x", "p0_y", "p1_x", "p1_y"]
        assert trajectory_columns(1, 3) == ["p0_c0", "p0_c1", "p0_c2"]

    def test_trajectory_csv_layout(self, tmp_path):
        states = np.array([[1.0, 0.0], [0.5, 0.0], [0.25, 0.0]])
        controls = np.array([[-1.0, 0.0], [-0.5, 0.0]])
        traj = Trajectory(states=states, controls=controls, realized_reward=0.0)
        path = tmp_path / "traj.csv"
        write_trajectory(path, traj, h=0.1, N=1, d=2)
        lines = path.read_text().splitlines()
        assert lines[0] == "k,t,p0_x,p0_y,u_norm"
        assert lines[1] == "0,0.0,1.0,0.0,1.0"
        assert lines[-1].endswith(",")  # terminal row has no control

    def test_radii_csv(self, tmp_path):
        path = tmp_path / "radii.csv"
        write_radii(path, np.array([2.0, 1.0]), np.array([3.0, 1.5]), h=0.5)
        lines = path.read_text().splitlines()
        assert lines[0] == "k,t,mean_radius,max_radius"
        assert lines[1] == "0,0.0,2.0,3.0"
        assert lines[2] == "1,0.5,1.0,1.5"

    def test_checkpoint_round_trip(self, tmp_path):
        payload = {"format": "maxplusdp-checkpoint", "values": [1.0, 0.5],
                   "nested": {"x": None}}
        path = tmp_path / "ck.json"
        write_checkpoint(path, payload)
        assert read_checkpoint(path) == payload

    def test_manifest_round_trip_and_labels(self, tmp_path):
        config = RunConfig.from_dict(base_dict())
        manifest = build_manifest(config.to_dict(), seed=42, gamma_h=0.0175,
                                  curvature_mode="trap", wall_seconds=1.5,
                                  output_files={"value_vs_iteration.csv": "..."},
                                  extra={"figure": "circle5"})
        path = tmp_path / "manifest.json"
        atomic_write_json(path, manifest)
        loaded = read_manifest(path)
        assert loaded["figure"] == "circle5"
        assert loaded["curvature"]["certified"] is False
        assert RunConfig.from_dict(loaded["config"]) == config

    def test_manifest_certified_flag(self):
        config = RunConfig.from_dict(base_dict())
        manifest = build_manifest(config.to_dict(), seed=1, gamma_h=3.7535,
                                  curvature_mode="analytic", wall_seconds=0.0,
                                  output_files={})
        assert manifest["curvature"]["certified"] is True
        assert "certified" in manifest["curvature"]["label"]

    def test_manifest_format_checked(self, tmp_path):
        path = tmp_path / "bad.json"
        atomic_write_json(path, {"format": "other"})
        with pytest.raises(ValueError):
            read_manifest(path)
