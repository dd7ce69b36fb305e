"""Command line front end.

Verbs:
  solve             run a config file to an output bundle
  oracle riccati    exact LQR recursion for no-interaction configs
  oracle grid       grid value iteration cross-check (state dim <= 3)
  oracle direct     small-horizon direct propagation rank trace
  reproduce         run a named preset figure (circle5, circle10, annulus30, large100)
  audit             support validity audit of an existing bundle
  prune-checkpoint  prune the tables stored in a bundle checkpoint

BLAS thread pools are pinned before numpy is imported; use --threads or the
MAXPLUSDP_THREADS environment variable.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

_THREAD_VARS = (
    "OMP_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "NUMEXPR_NUM_THREADS",
    "VECLIB_MAXIMUM_THREADS",
)


def _pin_threads(threads: int | None) -> None:
    # must run before the first numpy import anywhere in the process
    if threads is None:
        env = os.environ.get("MAXPLUSDP_THREADS")
        if env is None:
            return
        threads = int(env)
    for var in _THREAD_VARS:
        os.environ[var] = str(threads)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="maxplusdp",
        description="max-plus low-rank lower bounds for N-body optimal control")
    parser.add_argument("--threads", type=int, default=None,
                        help="pin BLAS/OpenMP thread pools to this count")
    sub = parser.add_subparsers(dest="verb", required=True)

    p_solve = sub.add_parser("solve", help="run a config file")
    p_solve.add_argument("--config", required=True, help="TOML or JSON config")
    p_solve.add_argument("--out", default=None, help="output bundle directory")
    p_solve.add_argument("--override", action="append", default=[],
                         metavar="DOTTED.KEY=VALUE",
                         help="config override, repeatable")
    p_solve.add_argument("--seed", type=int, default=None,
                         help="replace the config seed")

    p_oracle = sub.add_parser("oracle", help="independent reference solvers")
    orc = p_oracle.add_subparsers(dest="oracle_kind", required=True)

    p_ric = orc.add_parser("riccati", help="exact LQR recursion (kappa = 0)")
    p_ric.add_argument("--config", required=True)
    p_ric.add_argument("--out", default=None)

    p_grid = orc.add_parser("grid", help="grid value iteration (state dim <= 3)")
    p_grid.add_argument("--config", required=True)
    p_grid.add_argument("--out", default=None)
    p_grid.add_argument("--state-box", type=float, nargs=2, default=(-5.0, 5.0),
                        metavar=("LO", "HI"))
    p_grid.add_argument("--state-nodes", type=int, default=2001)
    p_grid.add_argument("--control-box", type=float, nargs=2,
                        default=(-40.0, 40.0), metavar=("LO", "HI"))
    p_grid.add_argument("--control-nodes", type=int, default=801)
    p_grid.add_argument("--boundary-rule", default="clip",
                        choices=("clip", "strict", "restrict"))
    p_grid.add_argument("--checkpoint", default=None,
                        help="solver checkpoint to compare against the grid")

    p_dir = orc.add_parser("direct", help="direct propagation rank trace")
    p_dir.add_argument("--out", default=None)
    p_dir.add_argument("--bodies", type=int, default=1)
    p_dir.add_argument("--dim", type=int, default=1)
    p_dir.add_argument("--r0", type=int, default=2,
                       help="terminal table rank")
    p_dir.add_argument("--interaction-rank", type=int, default=3)
    p_dir.add_argument("--steps", type=int, default=3)

    p_rep = sub.add_parser("reproduce", help="run a preset figure")
    p_rep.add_argument("figure",
                       choices=("circle5", "circle10", "annulus30", "large100"))
    p_rep.add_argument("--scale", default="desk", choices=("desk", "paper"))
    p_rep.add_argument("--out", default=None)
    p_rep.add_argument("--override", action="append", default=[],
                       metavar="DOTTED.KEY=VALUE")
    p_rep.add_argument("--seed", type=int, default=None)

    p_audit = sub.add_parser("audit", help="support validity audit of a bundle")
    p_audit.add_argument("--bundle", required=True)
    p_audit.add_argument("--count", type=int, default=1000,
                         help="random states sampled per support")

    p_prune = sub.add_parser("prune-checkpoint",
                             help="prune the tables in a bundle checkpoint")
    p_prune.add_argument("--bundle", required=True)
    p_prune.add_argument("--out", default=None,
                         help="pruned checkpoint path")
    p_prune.add_argument("--probes", type=int, default=4096)
    p_prune.add_argument("--sigma", type=float, default=0.5)

    return parser


def _load_config(path: str, overrides: list[str], seed: int | None):
    from .config import RunConfig, apply_overrides, load_config_dict
    raw = load_config_dict(path)
    if overrides:
        raw = apply_overrides(raw, overrides)
    if seed is not None:
        raw["seed"] = int(seed)
    return raw, RunConfig.from_dict(raw)


def _cmd_solve(args) -> int:
    import json

    from . import runner
    raw, config = _load_config(args.config, args.override, args.seed)
    out = args.out or config.outputs.directory or "maxplusdp_run"
    src = Path(args.config)
    if args.override or args.seed is not None:
        echo = ("config_echo.json", (json.dumps(raw, indent=2) + "\n").encode())
    else:
        echo = ("config_echo" + src.suffix, src.read_bytes())
    out_dir, state = runner.execute_run(config, out, echo=echo)
    last = state.history[-1]
    print(f"bundle={out_dir}")
    print(f"iterations={len(state.history)}")
    print(f"v_at_x0={last.value_at_x0!r}")
    print(f"realized_reward={state.trajectory.realized_reward!r}")
    return 0


def _cmd_oracle_riccati(args) -> int:
    from . import runner
    _, config = _load_config(args.config, [], None)
    out = args.out or "riccati_oracle"
    out_dir = runner.riccati_oracle_run(config, out)
    print(f"bundle={out_dir}")
    return 0


def _cmd_oracle_grid(args) -> int:
    import json

    from . import runner
    _, config = _load_config(args.config, [], None)
    out = args.out or "grid_oracle"
    out_dir = runner.grid_oracle_run(
        config, out,
        state_box=tuple(args.state_box), state_nodes=args.state_nodes,
        control_box=tuple(args.control_box), control_nodes=args.control_nodes,
        boundary_rule=args.boundary_rule, checkpoint=args.checkpoint)
    meta = json.loads((out_dir / "grid_meta.json").read_text())
    print(f"bundle={out_dir}")
    print(f"tolerance={meta['tolerance']!r}")
    print(f"winner_clip_count={meta['winner_clip_count']}")
    if args.checkpoint is not None:
        comp = json.loads((out_dir / "comparison.json").read_text())
        print(f"max_ordering_violation={comp['max_ordering_violation']!r}")
        print(f"gap_at_x0={comp['gap_at_x0']!r}")
    return 0


def _cmd_oracle_direct(args) -> int:
    import numpy as np

    from . import outputs
    from .oracles import DirectProblem, SeparableQuadratic, direct_propagation
    N, d = args.bodies, args.dim
    terminal = tuple(
        SeparableQuadratic(const=-float(i), lin=np.zeros((N, d)),
                           quad=np.full(N, 5.0 + 0.5 * i))
        for i in range(args.r0))
    interaction = None
    if args.interaction_rank > 0:
        interaction = tuple(
            SeparableQuadratic(const=0.1 * j, lin=np.full((N, d), 0.2 * (j + 1)),
                               quad=np.zeros(N))
            for j in range(args.interaction_rank))
    problem = DirectProblem(N=N, d=d, h=0.05, K=args.steps, k_trap=0.35,
                            r_control=0.5, terminal=terminal,
                            interaction=interaction)
    result = direct_propagation(problem)
    out = Path(args.out or "direct_oracle")
    out.mkdir(parents=True, exist_ok=True)
    rows = [[k, pre, post] for k, (pre, post) in
            enumerate(zip(result.ranks_pre_dedup, result.ranks_post_dedup))]
    outputs.write_csv(out / "direct_ranks.csv",
                      ["step", "rank_pre_dedup", "rank_post_dedup"], rows)
    print(f"bundle={out}")
    print("ranks_pre_dedup=" + ",".join(str(r) for r in result.ranks_pre_dedup))
    return 0


def _cmd_reproduce(args) -> int:
    import json

    from . import runner
    out = args.out or f"{args.figure}_{args.scale}"
    out_dir, _ = runner.reproduce_figure(args.figure, args.scale, out,
                                         overrides=args.override,
                                         seed=args.seed)
    summary = json.loads((out_dir / "summary.json").read_text())
    print(f"bundle={out_dir}")
    for key in ("v_at_x0", "plateau_radius", "plateau_dispersion",
                "final_mean_radius", "value_curve_monotone",
                "wall_seconds_total"):
        print(f"{key}={summary[key]!r}")
    return 0


def _cmd_audit(args) -> int:
    from . import runner
    report = runner.audit_bundle(args.bundle, count=args.count)
    for key, value in report.summary().items():
        print(f"{key}={value!r}")
    if not report.ok:
        print("audit=FAIL")
        return 1
    print("audit=PASS")
    return 0


def _cmd_prune(args) -> int:
    from . import runner
    summary = runner.prune_bundle(args.bundle, args.out,
                                  probes=args.probes, sigma=args.sigma)
    for key, value in summary.items():
        print(f"{key}={value!r}" if isinstance(value, float) else f"{key}={value}")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _pin_threads(args.threads)

    from .errors import (BudgetExceededError, ConfigError, GridBoxError,
                         InvariantViolationError)
    try:
        if args.verb == "solve":
            return _cmd_solve(args)
        if args.verb == "oracle":
            if args.oracle_kind == "riccati":
                return _cmd_oracle_riccati(args)
            if args.oracle_kind == "grid":
                return _cmd_oracle_grid(args)
            return _cmd_oracle_direct(args)
        if args.verb == "reproduce":
            return _cmd_reproduce(args)
        if args.verb == "audit":
            return _cmd_audit(args)
        return _cmd_prune(args)
    except InvariantViolationError as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        if exc.checkpoint_path is not None:
            print(f"checkpoint={exc.checkpoint_path}", file=sys.stderr)
        return 3
    except (ConfigError, GridBoxError, BudgetExceededError,
            FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
