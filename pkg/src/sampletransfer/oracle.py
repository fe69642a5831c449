"""Exhaustive grid oracles for the proportion and sample-fraction optimizers.

Both oracles run on the numba/numpy kernels and are meant for small instances
(at most 5 tasks). An instance is described by the matrix of backed-up values
c[s, m]; it can be given explicitly or generated from a task set with Q = 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import yaml

from . import kernels, mdp
from .mdp import ConfigError
from .transfer import (
    TransferErrorEstimator,
    UniformSampler,
    btt_optimize,
    build_auxiliary_set,
    minimize_on_sources,
    tradeoff_batch,
)

MAX_TASKS = 5
MAX_GRID_POINTS = 120_000_000
# allowance for floating-point and ridge effects when comparing against a grid
GRID_GAP_REL = 1e-9


def simplex_grid_size(n_tasks: int, steps: int) -> int:
    return math.comb(steps + n_tasks - 2, n_tasks - 2)


def box_grid_size(n_tasks: int, steps: int) -> int:
    return (steps + 1) ** n_tasks


def _steps(resolution: float) -> int:
    steps = int(round(1.0 / resolution))
    if steps < 1 or abs(steps * resolution - 1.0) > 1e-9:
        raise ConfigError(f"resolution {resolution} must divide 1")
    return steps


def bat_grid_oracle(gram, resolution=0.01):
    """(min value, argmin lambda) over the source simplex at the given resolution."""
    gram = np.ascontiguousarray(gram, dtype=np.float64)
    steps = _steps(resolution)
    if simplex_grid_size(gram.shape[0], steps) > MAX_GRID_POINTS:
        raise ConfigError("instance too large for the simplex grid oracle")
    val, lam = kernels.simplex_grid_min(gram, steps)
    return float(val), np.asarray(lam)


def btt_grid_oracle(gram, caps, tau, dim, resolution=0.01):
    """(min value, argmin beta) over {0, h, .., 1}^M."""
    gram = np.ascontiguousarray(gram, dtype=np.float64)
    steps = _steps(resolution)
    if box_grid_size(gram.shape[0], steps) > MAX_GRID_POINTS:
        raise ConfigError("instance too large for the box grid oracle")
    val, beta = kernels.box_grid_min(gram, np.asarray(caps, dtype=np.float64), float(tau),
                                     float(dim), steps)
    return float(val), np.asarray(beta)


def grid_gap(gram) -> float:
    """Slack allowed between a solver value and the grid optimum."""
    return GRID_GAP_REL * max(1.0, float(np.max(np.abs(gram))))


@dataclass
class OracleInstance:
    c: np.ndarray
    caps: np.ndarray | None = None
    tau: float = 0.75
    dim: int = 20
    resolution: float = 0.01
    kind: str = "both"


INSTANCE_KEYS = ("kind", "c", "task_set", "S", "T", "seed", "caps", "tau", "d", "resolution")


def load_instance(text: str) -> OracleInstance:
    data = yaml.safe_load(text)
    if not isinstance(data, dict):
        raise ConfigError("instance must be a mapping")
    errs = [f"unknown key {k!r}" for k in data if k not in INSTANCE_KEYS]
    kind = data.get("kind", "both")
    if kind not in ("bat", "btt", "both"):
        errs.append(f"kind: {kind!r} not in ['bat', 'btt', 'both']")
    if ("c" in data) == ("task_set" in data):
        errs.append("give exactly one of 'c' or 'task_set'")
    if errs:
        raise ConfigError(errs)
    if "c" in data:
        c = np.asarray(data["c"], dtype=np.float64)
        if c.ndim != 2 or c.shape[0] < 1 or c.shape[1] < 2:
            raise ConfigError("c must be an S x M matrix with S >= 1, M >= 2")
    else:
        tasks = mdp.task_catalog(int(data["task_set"]))
        rng = np.random.default_rng(int(data.get("seed", 0)))
        lo, hi = tasks[0].state_bounds
        aux = build_auxiliary_set(tasks, int(data.get("S", 1000)), int(data.get("T", 1)),
                                  UniformSampler(lo, hi), rng)
        c = aux.rewards.copy()
    M = c.shape[1]
    if M > MAX_TASKS:
        raise ConfigError(f"instance too large: {M} tasks (max {MAX_TASKS})")
    res = float(data.get("resolution", 0.01))
    if res < 0.01 - 1e-12:
        raise ConfigError("resolution must be >= 0.01")
    caps = np.asarray(data.get("caps", [1000] * M), dtype=np.float64)
    if caps.shape != (M,) or np.any(caps <= 0):
        raise ConfigError(f"caps must hold {M} positive values")
    return OracleInstance(c, caps, float(data.get("tau", 0.75)), int(data.get("d", 20)), res, kind)


def run_oracle(inst: OracleInstance) -> dict:
    est = TransferErrorEstimator.from_values(inst.c)
    out = {}
    if inst.kind in ("bat", "both"):
        lam = minimize_on_sources(est.gram)
        oval, olam = bat_grid_oracle(est.gram, inst.resolution)
        sval = est(lam)
        out["bat"] = {"oracle_value": oval, "oracle_lambda": olam.tolist(),
                      "solver_value": sval, "solver_lambda": lam.tolist(),
                      "grid_gap": grid_gap(est.gram), "ok": sval <= oval + grid_gap(est.gram)}
    if inst.kind in ("btt", "both"):
        beta, sval = btt_optimize(est, inst.caps, inst.tau, inst.dim)
        oval, obeta = btt_grid_oracle(est.gram, inst.caps, inst.tau, inst.dim, inst.resolution)
        sval = float(tradeoff_batch(est.gram, beta[None, :], inst.caps, inst.tau, inst.dim)[0])
        out["btt"] = {"oracle_value": oval, "oracle_beta": obeta.tolist(),
                      "solver_value": sval, "solver_beta": beta.tolist(),
                      "grid_gap": grid_gap(est.gram), "ok": sval <= oval + grid_gap(est.gram)}
    return out
