"""Continuous chain-walk tasks exposed through a generative model.

A task moves a scalar state left or right. With probability ``p`` the step goes
in the intended direction, otherwise in the opposite one; the step length is
``l + u`` with ``u ~ Uniform[-eta, eta]`` and the result is clamped to the state
bounds. Rewards are deterministic, piecewise constant in the state, and are
observed at the current state-action pair before the transition.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import kernels

LEFT, RIGHT = 0, 1
NUM_ACTIONS = 2


class ConfigError(ValueError):
    """Invalid configuration; ``errors`` lists every violation found."""

    def __init__(self, errors):
        if isinstance(errors, str):
            errors = [errors]
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass(frozen=True)
class ChainParams:
    p: float
    l: float  # noqa: E741 - step length, named as in the task tables
    eta: float
    reward_regions: tuple[tuple[float, float, float], ...]
    state_bounds: tuple[float, float] = (-20.0, 20.0)
    gamma: float = 0.9
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "reward_regions",
                           tuple(tuple(float(v) for v in reg) for reg in self.reward_regions))
        object.__setattr__(self, "state_bounds", tuple(float(v) for v in self.state_bounds))
        errors = self.violations()
        if errors:
            raise ConfigError(errors)

    def violations(self) -> list[str]:
        tag = self.name or "task"
        errs = []
        if not (0.0 <= self.p <= 1.0):
            errs.append(f"{tag}: p={self.p} not in [0, 1]")
        if not self.l > 0:
            errs.append(f"{tag}: l={self.l} must be > 0")
        if not self.eta >= 0:
            errs.append(f"{tag}: eta={self.eta} must be >= 0")
        for reg in self.reward_regions:
            if len(reg) != 3:
                errs.append(f"{tag}: region {reg} is not a (lo, hi, value) triple")
            elif not reg[0] < reg[1]:
                errs.append(f"{tag}: region {reg} needs lo < hi")
        if len(self.state_bounds) != 2 or not self.state_bounds[0] < self.state_bounds[1]:
            errs.append(f"{tag}: state_bounds {self.state_bounds} needs lo < hi")
        if not (0.0 < self.gamma < 1.0):
            errs.append(f"{tag}: gamma={self.gamma} not in (0, 1)")
        for v in (self.p, self.l, self.eta, self.gamma, *self.state_bounds):
            if not math.isfinite(v):
                errs.append(f"{tag}: non-finite parameter {v}")
                break
        return errs


@dataclass(frozen=True)
class Transitions:
    """Arrays of (state, action, next state, reward) tuples."""

    x: np.ndarray
    a: np.ndarray
    y: np.ndarray
    r: np.ndarray

    def __len__(self):
        return int(self.x.shape[0])

    def tuples(self):
        return list(zip(self.x.tolist(), self.a.tolist(), self.y.tolist(), self.r.tolist()))


@dataclass(frozen=True)
class TaskModel:
    params: ChainParams
    _regions: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        regs = np.asarray(self.params.reward_regions, dtype=np.float64).reshape(-1, 3)
        object.__setattr__(self, "_regions", (regs[:, 0].copy(), regs[:, 1].copy(), regs[:, 2].copy()))

    @property
    def name(self) -> str:
        return self.params.name

    @property
    def gamma(self) -> float:
        return self.params.gamma

    @property
    def state_bounds(self) -> tuple[float, float]:
        return self.params.state_bounds

    @property
    def r_max(self) -> float:
        return max((abs(v) for _, _, v in self.params.reward_regions), default=0.0)

    def reward(self, x, a=None):
        """Deterministic reward; the action is accepted but does not matter."""
        scalar = np.ndim(x) == 0
        r = kernels.chain_reward(np.atleast_1d(np.asarray(x, dtype=np.float64)), *self._regions)
        return float(r[0]) if scalar else r

    def apply_noise(self, x, a, u_dir, u_noise):
        """Next state as a deterministic function of two Uniform[0, 1) draws.

        Feeding the same draws to several tasks couples their transitions
        while leaving each task's own transition law intact.
        """
        pr = self.params
        x = np.atleast_1d(np.asarray(x, dtype=np.float64))
        a = np.broadcast_to(np.asarray(a, dtype=np.int64), x.shape).copy()
        u_dir = np.broadcast_to(np.asarray(u_dir, dtype=np.float64), x.shape).copy()
        u_noise = np.broadcast_to(np.asarray(u_noise, dtype=np.float64), x.shape).copy()
        return kernels.chain_step(x, a, u_dir, u_noise, pr.p, pr.l, pr.eta, *pr.state_bounds)

    def next_state(self, x, a, rng: np.random.Generator):
        scalar = np.ndim(x) == 0
        n = 1 if scalar else np.shape(x)[0]
        u_dir = rng.random(n)
        u_noise = rng.random(n)
        y = self.apply_noise(x, a, u_dir, u_noise)
        return float(y[0]) if scalar else y

    def sample(self, x, a, rng: np.random.Generator) -> Transitions:
        x = np.asarray(x, dtype=np.float64)
        a = np.asarray(a, dtype=np.int64)
        return Transitions(x, a, self.next_state(x, a, rng), self.reward(x, a))


def reward(task: TaskModel, x, a=None):
    return task.reward(x, a)


def next_state(task: TaskModel, x, a, rng: np.random.Generator):
    return task.next_state(x, a, rng)


def collect_episodes(task: TaskModel, n_episodes: int, horizon: int,
                     rng: np.random.Generator, start: float = 0.0) -> Transitions:
    """Uniform-random-action episodes from ``start``, concatenated episode by episode."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    pr = task.params
    actions = rng.integers(0, NUM_ACTIONS, size=(n_episodes, horizon))
    u_dir = rng.random((n_episodes, horizon))
    u_noise = rng.random((n_episodes, horizon))
    xs = kernels.random_walks(float(start), actions, u_dir, u_noise,
                              pr.p, pr.l, pr.eta, *pr.state_bounds)
    x = xs[:, :-1].ravel()
    return Transitions(x, actions.ravel(), xs[:, 1:].ravel(), task.reward(x))


def collect_episode(task: TaskModel, start: float, horizon: int,
                    rng: np.random.Generator) -> Transitions:
    return collect_episodes(task, 1, horizon, rng, start=start)


_OUTER = ((-11.0, -9.0), (9.0, 11.0))
_INNER = ((-6.0, -4.0), (4.0, 6.0))


def _chain(name, p, l, eta, value, where):  # noqa: E741
    return TaskModel(ChainParams(p=p, l=l, eta=eta, name=name,
                                 reward_regions=tuple((lo, hi, value) for lo, hi in where)))


def _catalog():
    return {
        "M1": _chain("M1", 0.9, 1.0, 0.1, 1.0, _OUTER),
        "M2": _chain("M2", 0.9, 2.0, 0.1, -5.0, _OUTER),
        "M3": _chain("M3", 0.9, 1.0, 0.1, 5.0, _OUTER),
        "M4": _chain("M4", 0.9, 1.0, 0.1, 1.0, _INNER),
        "M5": _chain("M5", 0.9, 1.0, 0.1, -1.0, _INNER),
        "M6": _chain("M6", 0.7, 1.0, 0.1, 1.0, _OUTER),
        "M7": _chain("M7", 0.1, 1.0, 0.1, 1.0, _OUTER),
        "M8": _chain("M8", 0.9, 1.0, 0.1, -5.0, _OUTER),
        "M9": _chain("M9", 0.7, 1.0, 0.5, 5.0, _OUTER),
    }


TASK_SETS = {1: ("M1", "M2", "M3", "M4", "M5"), 2: ("M1", "M6", "M7", "M8", "M9")}


def task_catalog(set_id: int) -> list[TaskModel]:
    """Target first, then the four sources of the requested set."""
    if set_id not in TASK_SETS:
        raise ConfigError(f"unknown task set {set_id!r}; expected one of {sorted(TASK_SETS)}")
    cat = _catalog()
    return [cat[name] for name in TASK_SETS[set_id]]


def all_tasks() -> list[TaskModel]:
    return list(_catalog().values())


def task_to_dict(task: TaskModel) -> dict:
    pr = task.params
    return {
        "name": pr.name,
        "p": pr.p,
        "l": pr.l,
        "eta": pr.eta,
        "regions": [list(reg) for reg in pr.reward_regions],
        "bounds": list(pr.state_bounds),
        "gamma": pr.gamma,
    }


TASK_KEYS = ("name", "p", "l", "eta", "regions", "bounds", "gamma")


def task_from_dict(d: dict, index: int = 0) -> TaskModel:
    errors = []
    if not isinstance(d, dict):
        raise ConfigError(f"task #{index}: expected a mapping, got {type(d).__name__}")
    unknown = set(d) - set(TASK_KEYS)
    if unknown:
        errors.append(f"task #{index}: unknown keys {sorted(unknown)}")
    for key in ("p", "l", "eta", "regions"):
        if key not in d:
            errors.append(f"task #{index}: missing key {key!r}")
    if errors:
        raise ConfigError(errors)
    try:
        params = ChainParams(
            p=float(d["p"]), l=float(d["l"]), eta=float(d["eta"]),
            reward_regions=tuple(tuple(reg) for reg in d["regions"]),
            state_bounds=tuple(d.get("bounds", (-20.0, 20.0))),
            gamma=float(d.get("gamma", 0.9)),
            name=str(d.get("name", f"task{index}")),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"task #{index}: {exc}") from None
    return TaskModel(params)


def dump_tasks(tasks, path=None) -> str:
    text = yaml.safe_dump({"tasks": [task_to_dict(t) for t in tasks]}, sort_keys=False)
    if path is not None:
        Path(path).write_text(text)
    return text


def load_tasks(source) -> list[TaskModel]:
    """Read tasks from a YAML file path or from YAML text."""
    if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source
                                    and Path(source).exists()):
        source = Path(source).read_text()
    data = yaml.safe_load(source)
    if not isinstance(data, dict) or not isinstance(data.get("tasks"), list):
        raise ConfigError("task file must contain a 'tasks' list")
    errors, tasks = [], []
    for i, d in enumerate(data["tasks"]):
        try:
            tasks.append(task_from_dict(d, i))
        except ConfigError as exc:
            errors.extend(exc.errors)
    if errors:
        raise ConfigError(errors)
    return tasks
