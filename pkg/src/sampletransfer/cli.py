"""Command-line front end: ``sampletransfer {run,sweep-tau,catalog,validate,oracle}``.

Exit status: 0 on success, 2 on configuration errors (error list on stderr,
one JSON document), 1 on runtime failures.
"""

from __future__ import annotations

import argparse
import json
import os
import platform
import sys
from pathlib import Path

import numpy as np
import scipy
import yaml

from . import __version__, harness, kernels, mdp, oracle
from .mdp import ConfigError

OUT_ENV = "SAMPLETRANSFER_OUT"

_KEY_HELP = {
    "name": "label stored in the manifest",
    "algorithm": "one of " + ", ".join(harness.ALGORITHMS),
    "task_set": "built-in task set (1 or 2); target first",
    "tasks_file": "YAML task file instead of task_set",
    "budgets": "strictly increasing list of target-sample budgets",
    "L": "source samples drawn per iteration (ast, bat)",
    "lam": "task proportions for ast (default: uniform over sources)",
    "T": "next states per task and auxiliary pair",
    "tau": "tradeoff weight for btt",
    "source_caps": "samples available per source task (btt)",
    "runs": "independent runs per budget",
    "seed": "master seed",
    "iterations": "FQI iterations",
    "gamma": "discount factor",
    "n_centers": "Gaussian centers per action",
    "sigma2": "Gaussian width parameter",
    "width_convention": "'variance' exp(-d^2/(2 s2)) or 'raw' exp(-d^2/s2)",
    "sampling": "'uniform' over the state bounds or 'episodes' from x0 = 0",
    "episode_horizon": "episode length for sampling = episodes",
    "aux_noise": "'shared' or 'independent' random draws across tasks in the auxiliary set",
    "single_task_resample": "redraw the single-task training set every iteration",
    "eval_episodes": "greedy rollouts per evaluation",
    "eval_horizon": "steps per rollout",
}


def _config_epilog() -> str:
    lines = ["config keys (YAML mapping):"]
    for key in harness.CONFIG_KEYS:
        default = getattr(harness.ExperimentConfig, key, None)
        lines.append(f"  {key:22s} {_KEY_HELP.get(key, '')} [default: {default}]")
    return "\n".join(lines)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sampletransfer",
        description="Sample transfer with fitted Q-iteration on the continuous chain walk.",
        epilog=_config_epilog(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", required=True, type=Path, help="experiment YAML")
        p.add_argument("--seed", type=int, default=None, help="overrides the config seed")
        p.add_argument("--out", type=Path, default=None,
                       help=f"output directory (default: ${OUT_ENV} or ./results)")
        p.add_argument("--jobs", type=int, default=1, help="concurrent (budget, run) cells")

    for name, text in (("run", "run one experiment"), ("sweep-tau", "run one experiment per tau")):
        p = sub.add_parser(name, help=text, epilog=_config_epilog(),
                           formatter_class=argparse.RawDescriptionHelpFormatter)
        common(p)
        if name == "sweep-tau":
            p.add_argument("--taus", type=float, nargs="+", default=[0.25, 0.5, 0.75, 1.0])
    sub.add_parser("catalog", help="print the built-in task sets")
    p = sub.add_parser("validate", help="check a config and print the normalized form")
    p.add_argument("--config", required=True, type=Path)
    p = sub.add_parser("oracle", help="compare optimizers with exhaustive grid search")
    p.add_argument("instance", type=Path, help="YAML instance file")
    return parser


def _config_error(exc: ConfigError) -> int:
    print(json.dumps({"errors": exc.errors}), file=sys.stderr)
    return 2


def _load(args) -> harness.ExperimentConfig:
    cfg = harness.load_config(args.config)
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("--seed must be non-negative")
        cfg = cfg.with_(seed=args.seed)
    return cfg


def _outdir(args) -> Path:
    out = args.out or Path(os.environ.get(OUT_ENV, "results"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _manifest(cfg, command, extra=None) -> dict:
    try:
        import numba
        numba_version = numba.__version__
    except ImportError:
        numba_version = None
    man = {
        "command": command,
        "config": harness.config_to_dict(cfg),
        "config_sha256": harness.config_hash(cfg),
        "seed": cfg.seed,
        "backend": kernels.BACKEND,
        "versions": {"sampletransfer": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "scipy": scipy.__version__,
                     "numba": numba_version},
    }
    man.update(extra or {})
    return man


def _write_outputs(rt, cfg, out: Path, command, extra=None):
    harness.emit_csv(rt, out / "results.csv")
    harness.emit_plot_data(rt, out)
    (out / "manifest.json").write_text(json.dumps(_manifest(cfg, command, extra), indent=2) + "\n")


def cmd_run(args) -> int:
    cfg = _load(args)
    out = _outdir(args)
    rt = harness.run_experiment(cfg, jobs=args.jobs)
    _write_outputs(rt, cfg, out, "run")
    for s in rt.summary():
        print(f"{s['algorithm']:16s} budget={s['budget']:<7d} mean={s['mean']:.4f} std={s['std']:.4f}")
    return 0


def cmd_sweep_tau(args) -> int:
    cfg = _load(args)
    out = _outdir(args)
    rt = harness.sweep_tau(cfg, args.taus, jobs=args.jobs)
    _write_outputs(rt, cfg, out, "sweep-tau", {"taus": list(args.taus)})
    for s in rt.summary():
        print(f"tau={s['tau']:<5g} budget={s['budget']:<7d} mean={s['mean']:.4f} std={s['std']:.4f}")
    return 0


def format_catalog() -> str:
    lines = []
    for set_id, names in mdp.TASK_SETS.items():
        lines.append(f"task set {set_id}")
        lines.append(f"  {'task':4s} {'p':>4s} {'l':>4s} {'eta':>4s}  reward")
        for task in mdp.task_catalog(set_id):
            pr = task.params
            regions = " U ".join(f"[{lo:g},{hi:g}]" for lo, hi, _ in pr.reward_regions)
            value = pr.reward_regions[0][2]
            lines.append(f"  {pr.name:4s} {pr.p:4g} {pr.l:4g} {pr.eta:4g}  {value:+g} in {regions}")
    seen = sorted({t.name for s in mdp.TASK_SETS for t in mdp.task_catalog(s)})
    lines.append(f"{len(seen)} distinct tasks; state bounds [-20, 20] (clamped); gamma 0.9")
    return "\n".join(lines)


def cmd_catalog(args) -> int:
    print(format_catalog())
    return 0


def cmd_validate(args) -> int:
    cfg = harness.load_config(args.config)
    sys.stdout.write(harness.dump_config(cfg))
    return 0


def cmd_oracle(args) -> int:
    try:
        text = args.instance.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read instance: {exc}") from None
    result = oracle.run_oracle(oracle.load_instance(text))
    sys.stdout.write(yaml.safe_dump(result, sort_keys=False))
    return 0


COMMANDS = {"run": cmd_run, "sweep-tau": cmd_sweep_tau, "catalog": cmd_catalog,
            "validate": cmd_validate, "oracle": cmd_oracle}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        return _config_error(exc)
    except Exception as exc:  # noqa: BLE001 - reported, mapped to exit status 1
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
