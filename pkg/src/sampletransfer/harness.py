"""Seeded multi-run experiments, tau sweeps and CSV / plot-data output.

The x-axis budget means different things per algorithm: the training-set size
for single-task FQI, the auxiliary-set size S for BAT variants, and the
target-task cap N_1 for BTT. AST ignores it (its rows repeat per budget so
every algorithm yields runs x len(budgets) rows).
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml
from scipy.stats import binomtest

from . import mdp
from .fqi import FqiConfig, evaluate_policy
from .linear import FeatureMap
from .mdp import ConfigError
from .transfer import (
    EpisodeSampler,
    UniformSampler,
    run_ast,
    run_bat,
    run_btt,
    run_single_task,
)

ALGORITHMS = ("single_task", "ast", "bat", "bat_plus_target", "btt")


@dataclass(frozen=True)
class ExperimentConfig:
    name: str = "experiment"
    algorithm: str = "single_task"
    task_set: int | None = 1
    tasks_file: str | None = None
    budgets: tuple[int, ...] = (100,)
    L: int = 10000
    lam: tuple[float, ...] | None = None
    T: int = 1
    tau: float = 0.75
    source_caps: tuple[int, ...] = (5000,)
    runs: int = 20
    seed: int = 0
    iterations: int = 13
    gamma: float = 0.9
    n_centers: int = 9
    sigma2: float = 16.0
    width_convention: str = "variance"
    sampling: str = "uniform"
    episode_horizon: int = 10
    aux_noise: str = "shared"
    single_task_resample: bool = False
    eval_episodes: int = 50
    eval_horizon: int = 50

    def violations(self) -> list[str]:
        errs = []
        if self.algorithm not in ALGORITHMS:
            errs.append(f"algorithm: {self.algorithm!r} not in {list(ALGORITHMS)}")
        if (self.task_set is None) == (self.tasks_file is None):
            errs.append("exactly one of task_set / tasks_file must be given")
        elif self.task_set is not None and self.task_set not in mdp.TASK_SETS:
            errs.append(f"task_set: unknown set {self.task_set!r}")
        elif self.tasks_file is not None and not Path(self.tasks_file).exists():
            errs.append(f"tasks_file: {self.tasks_file} does not exist")
        if not self.budgets:
            errs.append("budgets: schedule is empty")
        elif any(b < 1 for b in self.budgets):
            errs.append("budgets: every budget must be >= 1")
        elif any(b2 <= b1 for b1, b2 in zip(self.budgets, self.budgets[1:])):
            errs.append("budgets: schedule must be strictly increasing")
        for key in ("L", "T", "runs", "iterations", "n_centers", "episode_horizon",
                    "eval_episodes", "eval_horizon"):
            if getattr(self, key) < 1:
                errs.append(f"{key}: must be >= 1")
        if self.seed < 0:
            errs.append("seed: must be non-negative")
        if not 0.0 < self.gamma < 1.0:
            errs.append("gamma: must lie in (0, 1)")
        if self.sigma2 <= 0:
            errs.append("sigma2: must be positive")
        if self.tau < 0:
            errs.append("tau: must be non-negative")
        if self.width_convention not in ("variance", "raw"):
            errs.append("width_convention: must be 'variance' or 'raw'")
        if self.sampling not in ("uniform", "episodes"):
            errs.append("sampling: must be 'uniform' or 'episodes'")
        if self.aux_noise not in ("shared", "independent"):
            errs.append("aux_noise: must be 'shared' or 'independent'")
        if not self.source_caps or any(c < 1 for c in self.source_caps):
            errs.append("source_caps: caps must be >= 1")
        if self.lam is not None:
            lam = np.asarray(self.lam, dtype=float)
            if np.any(lam < 0) or abs(lam.sum() - 1.0) > 1e-9:
                errs.append("lam: must be a probability vector")
        return errs

    def validate(self) -> "ExperimentConfig":
        errs = self.violations()
        if not errs:
            try:
                tasks = self.tasks()
            except ConfigError as exc:
                errs.extend(exc.errors)
            else:
                if len(tasks) < 2 and self.algorithm != "single_task":
                    errs.append(f"{self.algorithm} needs at least one source task")
                if self.lam is not None and len(self.lam) != len(tasks):
                    errs.append(f"lam: expected {len(tasks)} entries, got {len(self.lam)}")
                if len(self.source_caps) not in (1, len(tasks) - 1):
                    errs.append(f"source_caps: give 1 or {len(tasks) - 1} values")
        if errs:
            raise ConfigError(errs)
        return self

    def tasks(self) -> list:
        if self.tasks_file is not None:
            return mdp.load_tasks(Path(self.tasks_file))
        return mdp.task_catalog(self.task_set)

    def with_(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


CONFIG_KEYS = tuple(f.name for f in dataclasses.fields(ExperimentConfig))
_TUPLE_KEYS = ("budgets", "lam", "source_caps")


def config_to_dict(cfg: ExperimentConfig) -> dict:
    d = dataclasses.asdict(cfg)
    for k in _TUPLE_KEYS:
        if d[k] is not None:
            d[k] = list(d[k])
    return d


def config_from_dict(d: dict) -> ExperimentConfig:
    if not isinstance(d, dict):
        raise ConfigError("config must be a mapping")
    errs = [f"unknown key {k!r}" for k in d if k not in CONFIG_KEYS]
    kwargs = {}
    types = {f.name: f.default for f in dataclasses.fields(ExperimentConfig)}
    for k, v in d.items():
        if k not in CONFIG_KEYS:
            continue
        try:
            if k in _TUPLE_KEYS:
                kwargs[k] = None if v is None else tuple(
                    float(x) if k == "lam" else int(x) for x in (v if isinstance(v, list) else [v]))
            elif v is None:
                kwargs[k] = None
            elif isinstance(types[k], bool):
                if not isinstance(v, bool):
                    raise TypeError(f"expected true/false, got {v!r}")
                kwargs[k] = v
            elif isinstance(types[k], int) or k == "task_set":
                if isinstance(v, bool) or (isinstance(v, float) and not v.is_integer()):
                    raise TypeError(f"expected an integer, got {v!r}")
                kwargs[k] = int(v)
            elif isinstance(types[k], float):
                kwargs[k] = float(v)
            else:
                kwargs[k] = str(v)
        except (TypeError, ValueError) as exc:
            errs.append(f"{k}: {exc}")
    if "tasks_file" in kwargs and kwargs["tasks_file"] is not None and "task_set" not in d:
        kwargs["task_set"] = None
    if errs:
        raise ConfigError(errs)
    return ExperimentConfig(**kwargs)


def dump_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=False)


def load_config(source) -> ExperimentConfig:
    """Parse and validate a YAML config given as a path or as text."""
    if isinstance(source, Path):
        try:
            source = source.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
    try:
        data = yaml.safe_load(source)
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed YAML: {exc}") from None
    return config_from_dict(data or {}).validate()


# --------------------------------------------------------------------------
# results


RESULT_COLUMNS = ("algorithm", "tau", "budget", "run_id", "performance")
DIAG_COLUMNS = ("algorithm", "tau", "budget", "run_id", "iteration", "loss", "alpha_norm",
                "omega", "n_samples")
TRAJ_COLUMNS = ("algorithm", "tau", "budget", "run_id", "iteration", "kind", "m", "value", "count")
SUMMARY_COLUMNS = ("algorithm", "tau", "budget", "runs", "mean", "std")


def _r9(v: float) -> float:
    return float(f"{v:.9g}")


@dataclass
class ResultTable:
    rows: list = field(default_factory=list)
    diagnostics: list = field(default_factory=list)
    trajectories: list = field(default_factory=list)

    def extend(self, other: "ResultTable"):
        self.rows += other.rows
        self.diagnostics += other.diagnostics
        self.trajectories += other.trajectories

    def sort(self):
        key = lambda r: (r["algorithm"], r["tau"], r["budget"], r["run_id"])  # noqa: E731
        self.rows.sort(key=key)
        self.diagnostics.sort(key=lambda r: key(r) + (r["iteration"],))
        self.trajectories.sort(key=lambda r: key(r) + (r["iteration"], r["kind"], r["m"]))
        return self

    def performance(self, algorithm, budget, tau=None) -> np.ndarray:
        """Performance ordered by run_id."""
        sel = [r for r in self.rows if r["algorithm"] == algorithm and r["budget"] == budget
               and (tau is None or r["tau"] == tau)]
        sel.sort(key=lambda r: r["run_id"])
        return np.array([r["performance"] for r in sel])

    def summary(self) -> list[dict]:
        groups: dict = {}
        for r in self.rows:
            groups.setdefault((r["algorithm"], r["tau"], r["budget"]), []).append(r["performance"])
        out = []
        for (alg, tau, budget), vals in sorted(groups.items()):
            v = np.array(vals)
            out.append({"algorithm": alg, "tau": tau, "budget": budget, "runs": len(v),
                        "mean": float(v.mean()), "std": float(v.std(ddof=1)) if len(v) > 1 else 0.0})
        return out


def child_seed(master: int, algorithm: str, budget: int, run_id: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(master), zlib.crc32(algorithm.encode()), int(budget), int(run_id)])


def _sampler(cfg, tasks):
    if cfg.sampling == "episodes":
        return EpisodeSampler(tasks[0], horizon=cfg.episode_horizon)
    lo, hi = tasks[0].state_bounds
    return UniformSampler(lo, hi)


def fqi_config(cfg: ExperimentConfig, tasks) -> FqiConfig:
    lo, hi = tasks[0].state_bounds
    fmap = FeatureMap.uniform(cfg.n_centers, lo, hi, sigma2=cfg.sigma2,
                              width_convention=cfg.width_convention)
    return FqiConfig.for_tasks(tasks, iterations=cfg.iterations, gamma=cfg.gamma, feature_map=fmap)


def run_cell(cfg: ExperimentConfig, budget: int, run_id: int) -> ResultTable:
    """One (budget, run) cell: data generation, learning and evaluation."""
    tasks = cfg.tasks()
    fcfg = fqi_config(cfg, tasks)
    mu = _sampler(cfg, tasks)
    learn_seq, eval_seq = child_seed(cfg.seed, cfg.algorithm, budget, run_id).spawn(2)
    rng = np.random.default_rng(learn_seq)
    shared = cfg.aux_noise == "shared"
    M = len(tasks)
    alg = cfg.algorithm
    kind = "lambda"
    if alg == "single_task":
        run = run_single_task(tasks[0], budget, fcfg, rng, mu, fresh=cfg.single_task_resample)
        kind = None
    elif alg == "ast":
        lam = np.asarray(cfg.lam) if cfg.lam is not None else np.r_[0.0, np.full(M - 1, 1.0 / (M - 1))]
        run = run_ast(tasks, lam, cfg.L, fcfg, rng, mu)
    elif alg in ("bat", "bat_plus_target"):
        run = run_bat(tasks, budget, cfg.T, cfg.L, fcfg, rng, mu,
                      include_aux_target=alg == "bat_plus_target", shared_noise=shared)
    else:
        caps = list(cfg.source_caps) * (M - 1) if len(cfg.source_caps) == 1 else list(cfg.source_caps)
        run = run_btt(tasks, [budget] + caps, cfg.tau, fcfg, rng, mu, T=cfg.T, shared_noise=shared)
        kind = "beta"
    perf = evaluate_policy(run.iterates[-1], tasks[0], np.random.default_rng(eval_seq),
                           episodes=cfg.eval_episodes, horizon=cfg.eval_horizon, gamma=cfg.gamma)
    base = {"algorithm": alg, "tau": _r9(cfg.tau), "budget": int(budget), "run_id": int(run_id)}
    rt = ResultTable(rows=[{**base, "performance": _r9(perf)}])
    for k, fi in enumerate(run.fit_info, start=1):
        rt.diagnostics.append({**base, "iteration": k, "loss": _r9(fi.loss),
                               "alpha_norm": _r9(fi.alpha_norm), "omega": _r9(fi.omega),
                               "n_samples": int(fi.n_samples)})
    if kind is not None:
        for k, (w, cnt) in enumerate(zip(run.weights, run.counts), start=1):
            for m in range(M):
                rt.trajectories.append({**base, "iteration": k, "kind": kind, "m": m + 1,
                                        "value": _r9(w[m]), "count": int(cnt[m])})
    return rt


def _cell_job(args):
    return run_cell(*args)


def run_experiment(cfg: ExperimentConfig, jobs: int = 1) -> ResultTable:
    cfg.validate()
    cells = [(cfg, b, r) for b in cfg.budgets for r in range(cfg.runs)]
    out = ResultTable()
    if jobs > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for part in pool.map(_cell_job, cells):
                out.extend(part)
    else:
        for c in cells:
            out.extend(run_cell(*c))
    return out.sort()


def sweep_tau(cfg: ExperimentConfig, taus, jobs: int = 1) -> ResultTable:
    if not taus:
        raise ValueError("taus must be non-empty")
    out = ResultTable()
    for tau in taus:
        out.extend(run_experiment(cfg.with_(tau=float(tau)), jobs=jobs))
    return out.sort()


def sign_test(better, worse) -> float:
    """One-sided sign test p-value for ``better > worse`` over paired runs (ties dropped)."""
    diff = np.asarray(better) - np.asarray(worse)
    wins, losses = int(np.sum(diff > 0)), int(np.sum(diff < 0))
    if wins + losses == 0:
        return 1.0
    return float(binomtest(wins, wins + losses, 0.5, alternative="greater").pvalue)


# --------------------------------------------------------------------------
# output


def _fmt(v, digits=9):
    if isinstance(v, float):
        return f"{v:.{digits}g}"
    return str(v)


def _write_rows(path, columns, rows, digits=9):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r[c], digits) for c in columns])
    try:
        Path(path).write_text(buf.getvalue())
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def emit_csv(rt: ResultTable, path) -> list[Path]:
    """Write raw rows to ``path`` plus ``<stem>_summary.csv`` with mean and std.

    Raw files use 9 significant digits; the summary keeps full double precision
    so it can be checked against recomputation from the raw rows.
    """
    path = Path(path)
    written = [path, path.with_name(path.stem + "_summary.csv")]
    _write_rows(path, RESULT_COLUMNS, rt.rows)
    _write_rows(written[1], SUMMARY_COLUMNS, rt.summary(), digits=17)
    if rt.diagnostics:
        written.append(path.with_name(path.stem + "_diagnostics.csv"))
        _write_rows(written[-1], DIAG_COLUMNS, rt.diagnostics)
    if rt.trajectories:
        written.append(path.with_name(path.stem + "_trajectories.csv"))
        _write_rows(written[-1], TRAJ_COLUMNS, rt.trajectories)
    return written


_INT_COLS = {"budget", "run_id", "iteration", "n_samples", "m", "count", "runs"}
_STR_COLS = {"algorithm", "kind"}


def _read_rows(path):
    with open(path, newline="") as fh:
        rows = []
        for r in csv.DictReader(fh):
            rows.append({k: (v if k in _STR_COLS else int(v) if k in _INT_COLS else float(v))
                         for k, v in r.items()})
        return rows


def read_csv(path) -> ResultTable:
    path = Path(path)
    rt = ResultTable(rows=_read_rows(path))
    for suffix, attr in (("_diagnostics.csv", "diagnostics"), ("_trajectories.csv", "trajectories")):
        p = path.with_name(path.stem + suffix)
        if p.exists():
            setattr(rt, attr, _read_rows(p))
    return rt


def read_summary(path) -> list[dict]:
    return _read_rows(path)


def emit_plot_data(rt: ResultTable, directory) -> list[Path]:
    """gnuplot-style data: one block per series, blocks separated by two blank lines.

    ``performance.dat`` has x = budget, y = mean, yerr = std per (algorithm, tau).
    ``trajectories.dat`` (when present) has x = iteration, y = mean weight over
    runs, yerr = std, one block per (algorithm, tau, budget, task).
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    blocks = []
    series: dict = {}
    for s in rt.summary():
        series.setdefault((s["algorithm"], s["tau"]), []).append(s)
    for (alg, tau), pts in series.items():
        lines = [f"# algorithm={alg} tau={_fmt(tau)}", "# budget mean std"]
        lines += [f"{p['budget']} {_fmt(p['mean'])} {_fmt(p['std'])}" for p in pts]
        blocks.append("\n".join(lines))
    out = [directory / "performance.dat"]
    out[0].write_text("\n\n\n".join(blocks) + "\n")
    if rt.trajectories:
        groups: dict = {}
        for r in rt.trajectories:
            key = (r["algorithm"], r["tau"], r["budget"], r["kind"], r["m"])
            groups.setdefault(key, {}).setdefault(r["iteration"], []).append(r["value"])
        blocks = []
        for (alg, tau, budget, kind, m), by_it in sorted(groups.items()):
            lines = [f"# algorithm={alg} tau={_fmt(tau)} budget={budget} {kind}_{m}",
                     "# iteration mean std"]
            for it in sorted(by_it):
                v = np.array(by_it[it])
                lines.append(f"{it} {_fmt(float(v.mean()))} {_fmt(float(v.std()))}")
            blocks.append("\n".join(lines))
        out.append(directory / "trajectories.dat")
        out[1].write_text("\n\n\n".join(blocks) + "\n")
    return out


def config_hash(cfg: ExperimentConfig) -> str:
    return hashlib.sha256(json.dumps(config_to_dict(cfg), sort_keys=True).encode()).hexdigest()

