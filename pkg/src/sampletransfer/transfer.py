"""Sample transfer across tasks: AST, BAT and BTT on top of fitted Q-iteration.

Task index 0 is always the target; indices 1..M-1 are sources. Training sets are
built under the random-tasks design: state-action pairs come from a sampling
distribution ``mu`` and each pair is labelled by a task drawn from a
multinomial over task proportions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .fqi import FqiConfig, TrainingSet, fqi_iterate, run_fqi
from .linear import LinearQ
from .mdp import NUM_ACTIONS, TaskModel, Transitions, collect_episodes

# --------------------------------------------------------------------------
# sampling distributions over state-action pairs


@dataclass(frozen=True)
class UniformSampler:
    lo: float = -20.0
    hi: float = 20.0
    num_actions: int = NUM_ACTIONS

    def __call__(self, n, rng):
        return rng.uniform(self.lo, self.hi, n), rng.integers(0, self.num_actions, n)


@dataclass(frozen=True)
class EpisodeSampler:
    """State-action pairs visited by random-action episodes of ``task``."""

    task: TaskModel
    horizon: int = 10
    start: float = 0.0

    def __call__(self, n, rng):
        n_ep = max(1, math.ceil(n / self.horizon))
        tr = collect_episodes(self.task, n_ep, self.horizon, rng, start=self.start)
        return tr.x[:n], tr.a[:n]


def _check_proportions(lam, n_tasks):
    lam = np.asarray(lam, dtype=np.float64)
    if lam.shape != (n_tasks,):
        raise ValueError(f"proportions have shape {lam.shape}, expected ({n_tasks},)")
    if np.any(lam < -1e-12) or abs(lam.sum() - 1.0) > 1e-9:
        raise ValueError(f"proportions {lam} are not on the simplex")
    lam = np.clip(lam, 0.0, None)
    return lam / lam.sum()


def sample_random_tasks_design(tasks, lam, n, mu, rng) -> TrainingSet:
    """Draw ``n`` pairs from ``mu``; label each with a task drawn from ``lam``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    lam = _check_proportions(lam, len(tasks))
    x, a = mu(n, rng)
    idx = rng.choice(len(tasks), size=n, p=lam)
    u_dir = rng.random(n)
    u_noise = rng.random(n)
    y = np.empty(n)
    r = np.empty(n)
    for m, task in enumerate(tasks):
        sel = idx == m
        if np.any(sel):
            y[sel] = task.apply_noise(x[sel], a[sel], u_dir[sel], u_noise[sel])
            r[sel] = task.reward(x[sel])
    return TrainingSet(np.asarray(x, dtype=np.float64), np.asarray(a, dtype=np.int64), y, r, idx)


# --------------------------------------------------------------------------
# auxiliary set and the estimated transfer error


@dataclass(frozen=True)
class AuxiliarySet:
    """Shared pairs with every task's reward and ``T`` next states per task.

    ``rewards`` has shape (S, M); ``next_states`` has shape (S, M, T).
    """

    x: np.ndarray
    a: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray

    @property
    def size(self) -> int:
        return int(self.x.shape[0])

    @property
    def n_tasks(self) -> int:
        return int(self.rewards.shape[1])

    def task_transitions(self, m: int, t: int = 0) -> Transitions:
        return Transitions(self.x, self.a, self.next_states[:, m, t], self.rewards[:, m])


def build_auxiliary_set(tasks, S, T, mu, rng, shared_noise=True) -> AuxiliarySet:
    """With ``shared_noise`` every task consumes the same uniforms for its draws."""
    if S < 1 or T < 1:
        raise ValueError("S and T must be >= 1")
    M = len(tasks)
    x, a = mu(S, rng)
    x = np.asarray(x, dtype=np.float64)
    a = np.asarray(a, dtype=np.int64)
    rewards = np.column_stack([task.reward(x) for task in tasks])
    ys = np.empty((S, M, T))
    if shared_noise:
        u = rng.random((2, T, S))
    for m, task in enumerate(tasks):
        for t in range(T):
            if shared_noise:
                ys[:, m, t] = task.apply_noise(x, a, u[0, t], u[1, t])
            else:
                ys[:, m, t] = task.apply_noise(x, a, rng.random(S), rng.random(S))
    return AuxiliarySet(x, a, rewards, ys)


class TransferErrorEstimator:
    """Backed-up values c[s, m] for a fixed (auxiliary set, Q) pair.

    c[s, m] = R[s, m] + gamma / T * sum_t max_a' Q(Y[s, m, t], a'). For a full
    proportion vector ``lam`` (target included) the estimated error is the
    mean over s of (c[s, 0] - sum_m lam[m] c[s, m])^2; with lam[0] = 0 this is
    the usual source-only estimate.
    """

    def __init__(self, aux: AuxiliarySet, q: LinearQ, gamma: float):
        if aux.size < 1:
            raise ValueError("auxiliary set is empty")
        S, M, T = aux.next_states.shape
        vals, _ = q.greedy(aux.next_states.reshape(-1))
        cont = vals.reshape(S, M, T).mean(axis=2)
        self.c = aux.rewards + gamma * cont
        self.gram = self.c.T @ self.c / S

    @classmethod
    def from_values(cls, c) -> "TransferErrorEstimator":
        self = cls.__new__(cls)
        self.c = np.asarray(c, dtype=np.float64)
        if self.c.ndim != 2 or self.c.shape[0] < 1:
            raise ValueError("need an (S, M) matrix with S >= 1")
        self.gram = self.c.T @ self.c / self.c.shape[0]
        return self

    @property
    def n_tasks(self) -> int:
        return self.c.shape[1]

    def __call__(self, lam) -> float:
        w = -np.asarray(lam, dtype=np.float64)
        w[0] += 1.0
        resid = self.c @ w
        return float(np.mean(resid * resid))

    def batch(self, lams) -> np.ndarray:
        """Vectorized evaluation for many proportion vectors (rows of ``lams``)."""
        W = -np.atleast_2d(np.asarray(lams, dtype=np.float64))
        W[:, 0] += 1.0
        return np.einsum("ij,jk,ik->i", W, self.gram, W)


def estimated_transfer_error(aux: AuxiliarySet, q: LinearQ, lam, gamma: float) -> float:
    return TransferErrorEstimator(aux, q, gamma)(lam)


# --------------------------------------------------------------------------
# simplex-constrained quadratic program


def project_simplex(v):
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    k = np.arange(1, v.shape[0] + 1)
    rho = np.nonzero(u - css / k > 0)[0][-1]
    return np.maximum(v - css[rho] / (rho + 1), 0.0)


def _projected_gradient(H, g, x0, iters=20_000, tol=1e-14):
    step = 1.0 / max(np.linalg.eigvalsh(H)[-1], 1e-300)
    x = y = x0.copy()
    t = 1.0
    for _ in range(iters):
        x_new = project_simplex(y - step * (H @ y + g))
        t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        y = x_new + (t - 1.0) / t_new * (x_new - x)
        if np.max(np.abs(x_new - x)) < tol:
            return x_new
        x, t = x_new, t_new
    return x


def solve_simplex_qp(H, g, max_iter=500, tol=1e-13):
    """Minimize 0.5 x'Hx + g'x over the probability simplex.

    Primal active-set method on the nonnegativity constraints, each step solving
    the equality-constrained subproblem on the free coordinates. Falls back to
    accelerated projected gradient if the subproblem turns singular or the
    iteration cap is hit. ``H`` must be positive definite.
    """
    H = np.asarray(H, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    n = g.shape[0]
    if n == 1:
        return np.ones(1)
    x = np.full(n, 1.0 / n)
    fixed = np.zeros(n, dtype=bool)
    scale = max(1.0, float(np.max(np.abs(H))), float(np.max(np.abs(g))))
    for _ in range(max_iter):
        free = np.flatnonzero(~fixed)
        k = free.shape[0]
        grad = H @ x + g
        kkt = np.zeros((k + 1, k + 1))
        kkt[:k, :k] = H[np.ix_(free, free)]
        kkt[:k, k] = 1.0
        kkt[k, :k] = 1.0
        try:
            sol = np.linalg.solve(kkt, np.concatenate([-grad[free], [0.0]]))
        except np.linalg.LinAlgError:
            break
        p, nu = sol[:k], sol[k]
        if np.max(np.abs(p)) <= tol:
            if not fixed.any():
                return _clean(x)
            mult = grad[fixed] + nu
            j = int(np.argmin(mult))
            if mult[j] >= -tol * scale:
                return _clean(x)
            fixed[np.flatnonzero(fixed)[j]] = False
            continue
        neg = p < 0
        ratios = np.where(neg, -x[free] / np.where(neg, p, -1.0), np.inf)
        j = int(np.argmin(ratios))
        if ratios[j] < 1.0:
            x[free] += ratios[j] * p
            x[free[j]] = 0.0
            fixed[free[j]] = True
        else:
            x[free] += p
    return _clean(_projected_gradient(H, g, x))


def _clean(x):
    x = np.clip(x, 0.0, None)
    return x / x.sum()


RIDGE = 1e-10


def minimize_on_sources(gram) -> np.ndarray:
    """Proportions with lam[0] = 0 minimizing w'Gw, w = e_0 - lam.

    A ridge of ``RIDGE`` times the mean source diagonal picks the
    minimum-norm member when the minimizer is not unique.
    """
    gram = np.asarray(gram, dtype=np.float64)
    M = gram.shape[0]
    if M < 2:
        raise ValueError("need at least one source task")
    lam = np.zeros(M)
    if M == 2:
        lam[1] = 1.0
        return lam
    Gss = gram[1:, 1:]
    ridge = RIDGE * max(float(np.trace(Gss)) / (M - 1), 1e-12)
    lam[1:] = solve_simplex_qp(2.0 * Gss + 2.0 * ridge * np.eye(M - 1), -2.0 * gram[0, 1:])
    return lam


def bat_minimize(aux: AuxiliarySet, q: LinearQ, gamma: float) -> np.ndarray:
    if aux.size < 1:
        raise ValueError("degenerate auxiliary set (S = 0)")
    return minimize_on_sources(TransferErrorEstimator(aux, q, gamma).gram)


# --------------------------------------------------------------------------
# tradeoff objective over per-task sample fractions


def induced_proportions(beta, caps) -> np.ndarray:
    beta = np.asarray(beta, dtype=np.float64)
    caps = np.asarray(caps, dtype=np.float64)
    n = float(beta @ caps)
    if n <= 0:
        raise ValueError("beta selects no samples")
    return beta * caps / n


def tradeoff_batch(gram, B, caps, tau, dim) -> np.ndarray:
    """Tradeoff objective for each row of ``B``; +inf where no sample is selected."""
    B = np.atleast_2d(np.asarray(B, dtype=np.float64))
    caps = np.asarray(caps, dtype=np.float64)
    n = B @ caps
    out = np.full(B.shape[0], np.inf)
    ok = n > 0
    if np.any(ok):
        W = -B[ok] * caps / n[ok, None]
        W[:, 0] += 1.0
        out[ok] = np.einsum("ij,jk,ik->i", W, gram, W) + tau * np.sqrt(dim / n[ok])
    return out


def btt_objective(est: TransferErrorEstimator, beta, caps, tau, dim) -> float:
    """Estimated error at the induced proportions plus tau * sqrt(d / n_selected)."""
    lam = induced_proportions(beta, caps)
    n = float(np.asarray(beta, dtype=np.float64) @ np.asarray(caps, dtype=np.float64))
    return est(lam) + tau * math.sqrt(dim / n)


def _lex_better(val, beta, best_val, best):
    if val < best_val:
        return True
    return val == best_val and best is not None and tuple(beta) < tuple(best)


def btt_optimize(est: TransferErrorEstimator, caps, tau, dim, coarse=0.25, fine=0.01,
                 n_starts=8, max_sweeps=200):
    """Approximate minimizer of the tradeoff objective over [0, 1]^M.

    Coarse grid, then coordinate descent on the fine grid from the
    ``n_starts`` best coarse points, then a bounded quasi-Newton polish of the
    best descent result. The returned objective is never above any grid
    point evaluated along the way. Returns (beta, objective).
    """
    caps = np.asarray(caps, dtype=np.float64)
    if np.any(caps <= 0):
        raise ValueError("caps must be positive")
    gram = est.gram
    M = gram.shape[0]
    levels = np.linspace(0.0, 1.0, int(round(1.0 / coarse)) + 1)
    grid = np.stack(np.meshgrid(*([levels] * M), indexing="ij"), axis=-1).reshape(-1, M)
    vals = tradeoff_batch(gram, grid, caps, tau, dim)
    order = np.lexsort(tuple(grid[:, ::-1].T) + (vals,))
    fine_levels = np.linspace(0.0, 1.0, int(round(1.0 / fine)) + 1)

    best, best_val = None, np.inf
    for start in order[:n_starts]:
        b = grid[start].copy()
        cur = float(vals[start])
        if not np.isfinite(cur):
            continue
        for _ in range(max_sweeps):
            moved = False
            for m in range(M):
                cand = np.tile(b, (fine_levels.shape[0], 1))
                cand[:, m] = fine_levels
                cv = tradeoff_batch(gram, cand, caps, tau, dim)
                j = int(np.argmin(cv))
                if cv[j] < cur:
                    b[m], cur, moved = fine_levels[j], float(cv[j]), True
            if not moved:
                break
        if _lex_better(cur, b, best_val, best):
            best, best_val = b.copy(), cur
    if best is None:
        raise ValueError("tradeoff objective is infinite everywhere")

    def f(b):
        v = tradeoff_batch(gram, b[None, :], caps, tau, dim)[0]
        return float(v) if np.isfinite(v) else 1e300

    res = minimize(f, best, method="L-BFGS-B", bounds=[(0.0, 1.0)] * M,
                   options={"ftol": 1e-15, "gtol": 1e-12})
    if res.fun < best_val:
        best, best_val = np.clip(res.x, 0.0, 1.0), f(np.clip(res.x, 0.0, 1.0))
    return best, best_val


# --------------------------------------------------------------------------
# capped sample pools


@dataclass(frozen=True)
class SamplePool:
    reservoirs: tuple

    @property
    def caps(self) -> np.ndarray:
        return np.array([len(r) for r in self.reservoirs], dtype=np.float64)

    @classmethod
    def generate(cls, tasks, caps, mu, rng, target=None):
        """Fresh reservoirs of ``caps[m]`` transitions per task; ``target``
        replaces the first reservoir when given."""
        res = []
        for m, (task, n) in enumerate(zip(tasks, caps)):
            if m == 0 and target is not None:
                res.append(target)
                continue
            x, a = mu(int(n), rng)
            res.append(task.sample(x, a, rng))
        return cls(tuple(res))


def selected_counts(beta, caps) -> np.ndarray:
    """round-half-up of beta_m * N_m."""
    return np.floor(np.asarray(beta, dtype=np.float64) * np.asarray(caps, dtype=np.float64) + 0.5).astype(np.int64)


def draw_capped_training_set(pool: SamplePool, beta, rng) -> TrainingSet:
    counts = selected_counts(beta, pool.caps)
    parts = []
    for m, (res, k) in enumerate(zip(pool.reservoirs, counts)):
        if k > len(res):
            raise ValueError(f"task {m}: requested {k} samples but the reservoir holds {len(res)}")
        if k <= 0:
            continue
        pick = rng.choice(len(res), size=int(k), replace=False)
        pick.sort()
        parts.append(TrainingSet(res.x[pick], res.a[pick], res.y[pick], res.r[pick],
                                 np.full(int(k), m, dtype=np.int64)))
    return TrainingSet.concat(parts)


# --------------------------------------------------------------------------
# algorithms


@dataclass
class TransferRun:
    """Iterates of one run plus the per-iteration choices that produced them.

    ``weights`` holds lambda (AST, BAT) or beta (BTT) per iteration, shape (K, M);
    ``counts`` holds the realized per-task sample counts, shape (K, M).
    """

    iterates: list
    weights: np.ndarray
    counts: np.ndarray
    fit_info: list


def run_ast(tasks, lam, n, cfg: FqiConfig, rng, mu=None) -> TransferRun:
    mu = mu or UniformSampler()
    lam = _check_proportions(lam, len(tasks))
    counts, info = [], []

    def provider(k, q):
        ts = sample_random_tasks_design(tasks, lam, n, mu, rng)
        counts.append(ts.counts(len(tasks)))
        return ts

    iterates = run_fqi(provider, cfg, info=info)
    return TransferRun(iterates, np.tile(lam, (cfg.iterations, 1)), np.array(counts), info)


def run_bat(tasks, S, T, n, cfg: FqiConfig, rng, mu=None, include_aux_target=False,
            shared_noise=True, aux: AuxiliarySet | None = None) -> TransferRun:
    """Per iteration: fit proportions on the auxiliary set, then one AST step."""
    if len(tasks) < 2:
        raise ValueError("BAT needs at least one source task")
    mu = mu or UniformSampler()
    if aux is None:
        aux = build_auxiliary_set(tasks, S, T, mu, rng, shared_noise=shared_noise)
    extra = TrainingSet.from_transitions(aux.task_transitions(0), 0) if include_aux_target else None
    lams, counts, info = [], [], []

    def provider(k, q):
        lam = minimize_on_sources(TransferErrorEstimator(aux, q, cfg.gamma).gram)
        lams.append(lam)
        ts = sample_random_tasks_design(tasks, lam, n, mu, rng)
        if extra is not None:
            ts = TrainingSet.concat([extra, ts])
        counts.append(ts.counts(len(tasks)))
        return ts

    iterates = run_fqi(provider, cfg, info=info)
    return TransferRun(iterates, np.array(lams), np.array(counts), info)


def run_btt(tasks, caps, tau, cfg: FqiConfig, rng, mu=None, S=None, T=1,
            shared_noise=True) -> TransferRun:
    """Per iteration: pick sample fractions by the tradeoff objective, draw from
    the capped pools and run one AST step.

    The auxiliary set has ``S`` pairs (default: the target cap); when ``S``
    equals the target cap its target transitions double as the target pool.
    """
    mu = mu or UniformSampler()
    caps = np.asarray(caps, dtype=np.float64)
    if caps.shape != (len(tasks),):
        raise ValueError("one cap per task required")
    S = int(caps[0]) if S is None else int(S)
    aux = build_auxiliary_set(tasks, S, T, mu, rng, shared_noise=shared_noise)
    target = aux.task_transitions(0) if S == int(caps[0]) else None
    pool = SamplePool.generate(tasks, caps.astype(int), mu, rng, target=target)
    dim = cfg.feature_map.dim
    betas, counts, info = [], [], []

    def provider(k, q):
        est = TransferErrorEstimator(aux, q, cfg.gamma)
        beta, _ = btt_optimize(est, pool.caps, tau, dim)
        betas.append(beta)
        ts = draw_capped_training_set(pool, beta, rng)
        counts.append(ts.counts(len(tasks)))
        return ts

    iterates = run_fqi(provider, cfg, info=info)
    return TransferRun(iterates, np.array(betas), np.array(counts), info)


def run_single_task(task, n, cfg: FqiConfig, rng, mu=None, fresh=False) -> TransferRun:
    """Plain FQI on ``n`` target transitions (one fixed set unless ``fresh``)."""
    mu = mu or UniformSampler()

    def draw():
        x, a = mu(n, rng)
        return TrainingSet.from_transitions(task.sample(x, a, rng), 0)

    fixed = None if fresh else draw()
    info = []
    iterates = run_fqi(lambda k, q: draw() if fresh else fixed, cfg, info=info)
    K = cfg.iterations
    return TransferRun(iterates, np.tile([1.0], (K, 1)), np.full((K, 1), n), info)


__all__ = [
    "AuxiliarySet", "EpisodeSampler", "SamplePool", "TransferErrorEstimator", "TransferRun",
    "UniformSampler", "bat_minimize", "btt_objective", "btt_optimize", "build_auxiliary_set",
    "draw_capped_training_set", "estimated_transfer_error", "fqi_iterate", "induced_proportions",
    "minimize_on_sources", "run_ast", "run_bat", "run_btt", "run_single_task",
    "sample_random_tasks_design", "solve_simplex_qp",
]
