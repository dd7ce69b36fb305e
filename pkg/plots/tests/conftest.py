"""Shared fixtures: real bundles produced through the maxplusdp CLI."""

import shutil
import subprocess
import sys

import pytest

REDUCED = ["--override", "solver.iterations=3",
           "--override", "problem.K=25",
           "--override", "problem.h=0.8"]


def run_cli(args, **kwargs):
    return subprocess.run([sys.executable, "-m", "maxplusdp.cli", *args],
                          capture_output=True, text=True, **kwargs)


@pytest.fixture(scope="session")
def bundle(tmp_path_factory):
    """Reduced circle5 desk bundle (structure identical to the full one)."""
    out = tmp_path_factory.mktemp("bundles") / "circle5"
    proc = run_cli(["reproduce", "circle5", "--scale", "desk",
                    "--out", str(out), *REDUCED])
    assert proc.returncode == 0, proc.stderr
    return out


@pytest.fixture()
def bundle_copy(bundle, tmp_path):
    """Private mutable copy of the session bundle."""
    dest = tmp_path / "bundle"
    shutil.copytree(bundle, dest)
    return dest


ONE_D_TOML = """\
seed = 5

[problem]
N = 1
d = 1
k_trap = 0.35
k_T = 5.0
R_diag = 0.5
kappa = 0.0
h = 0.05
K = 20

[initial_state]
kind = "explicit"
points = [[3.0]]

[solver]
iterations = 3
prune_every = 0
"""


@pytest.fixture(scope="session")
def one_d_bundle(tmp_path_factory):
    """Plain solve bundle, one particle in one dimension, no baseline CSV."""
    root = tmp_path_factory.mktemp("one_d")
    config = root / "run.toml"
    config.write_text(ONE_D_TOML)
    out = root / "bundle"
    proc = run_cli(["solve", "--config", str(config), "--out", str(out)])
    assert proc.returncode == 0, proc.stderr
    return out
