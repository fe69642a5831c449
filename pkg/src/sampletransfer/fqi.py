"""Fitted Q-iteration with linear function spaces and greedy-policy evaluation."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import kernels
from .linear import FeatureMap, LinearQ, least_squares_fit
from .mdp import TaskModel, Transitions


@dataclass(frozen=True)
class TrainingSet:
    """Transitions plus the index of the task that generated each one (0 = target)."""

    x: np.ndarray
    a: np.ndarray
    y: np.ndarray
    r: np.ndarray
    task: np.ndarray

    def __post_init__(self):
        n = np.shape(self.x)[0]
        for name in ("a", "y", "r", "task"):
            if np.shape(getattr(self, name))[0] != n:
                raise ValueError(f"TrainingSet: column {name!r} has wrong length")

    def __len__(self):
        return int(np.shape(self.x)[0])

    @classmethod
    def from_transitions(cls, tr: Transitions, task_index: int = 0) -> "TrainingSet":
        return cls(tr.x, tr.a, tr.y, tr.r, np.full(len(tr), task_index, dtype=np.int64))

    @classmethod
    def concat(cls, parts) -> "TrainingSet":
        parts = [p for p in parts if len(p)]
        if not parts:
            return cls(*(np.zeros(0) for _ in range(3)), np.zeros(0), np.zeros(0, dtype=np.int64))
        return cls(*(np.concatenate([getattr(p, k) for p in parts]) for k in ("x", "a", "y", "r", "task")))

    def counts(self, n_tasks: int) -> np.ndarray:
        return np.bincount(self.task, minlength=n_tasks)


@dataclass(frozen=True)
class FqiConfig:
    iterations: int = 13
    gamma: float = 0.9
    v_max: float = 10.0
    feature_map: FeatureMap = field(default_factory=FeatureMap)

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")

    @classmethod
    def for_tasks(cls, tasks, **kwargs):
        """v_max from the largest reward magnitude among ``tasks``."""
        gamma = kwargs.pop("gamma", tasks[0].gamma)
        r_max = max(t.r_max for t in tasks)
        return cls(gamma=gamma, v_max=r_max / (1.0 - gamma), **kwargs)


def bellman_targets(ts: TrainingSet, q_prev: LinearQ, gamma: float) -> np.ndarray:
    nxt, _ = q_prev.greedy(ts.y)
    return ts.r + gamma * nxt


@dataclass(frozen=True)
class FitInfo:
    loss: float
    alpha_norm: float
    n_samples: int
    omega: float


def fqi_iterate(ts: TrainingSet, q_prev: LinearQ, cfg: FqiConfig,
                info: list | None = None) -> LinearQ:
    """One regression step onto the Bellman targets of ``q_prev``."""
    if len(ts) == 0:
        raise ValueError("fqi_iterate: empty training set")
    targets = bellman_targets(ts, q_prev, cfg.gamma)
    phi = cfg.feature_map.features(ts.x, ts.a)
    alpha = least_squares_fit(phi, targets)
    if info is not None:
        resid = phi @ alpha - targets
        omega = float(np.linalg.eigvalsh(phi.T @ phi / len(ts))[0])
        info.append(FitInfo(float(np.mean(resid ** 2)), float(np.linalg.norm(alpha)), len(ts), omega))
    return LinearQ(alpha, cfg.feature_map, cfg.v_max)


class FqiError(RuntimeError):
    def __init__(self, iteration, cause):
        self.iteration = iteration
        super().__init__(f"FQI iteration {iteration}: {cause}")


Provider = Callable[[int, LinearQ], TrainingSet]


def run_fqi(provider: Provider, cfg: FqiConfig, q0: LinearQ | None = None,
            info: list | None = None) -> list[LinearQ]:
    """Run ``cfg.iterations`` FQI steps.

    ``provider(k, q_prev)`` returns the training set for iteration ``k``
    (1-based); adaptive schemes use ``q_prev`` to pick their sample mix.
    """
    q = q0 if q0 is not None else LinearQ.zero(cfg.feature_map, cfg.v_max)
    iterates = []
    for k in range(1, cfg.iterations + 1):
        try:
            ts = provider(k, q)
        except Exception as exc:
            raise FqiError(k, exc) from exc
        q = fqi_iterate(ts, q, cfg, info)
        iterates.append(q)
    return iterates


def fixed_provider(ts: TrainingSet) -> Provider:
    return lambda k, q: ts


@dataclass(frozen=True)
class EvalConfig:
    episodes: int = 50
    horizon: int = 50
    start: float = 0.0


def evaluate_policy(q: LinearQ, task: TaskModel, rng: np.random.Generator,
                    episodes: int = 50, horizon: int = 50, start: float = 0.0,
                    gamma: float | None = None) -> float:
    """Mean discounted return of the greedy policy of ``q`` from ``start``."""
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    gamma = task.gamma if gamma is None else gamma
    u_dir = rng.random((episodes, horizon))
    u_noise = rng.random((episodes, horizon))
    pr = task.params
    fm = q.feature_map
    if isinstance(fm, FeatureMap):
        returns = kernels.rollout_returns(
            float(start), float(gamma), q.alpha, fm._centers, fm.inv_scale, fm.num_actions,
            float(q.v_max), pr.p, pr.l, pr.eta, *pr.state_bounds, *task._regions, u_dir, u_noise)
    else:
        x = np.full(episodes, float(start))
        returns = np.zeros(episodes)
        disc = 1.0
        for t in range(horizon):
            _, act = q.greedy(x)
            returns += disc * task.reward(x)
            x = task.apply_noise(x, act, u_dir[:, t], u_noise[:, t])
            disc *= gamma
    return float(np.mean(returns))
