"""Pure-numpy versions of the hot kernels.

Every function here has a twin in ``_kernels_nb`` with the same signature and
the same random-number consumption, so both backends produce identical
trajectories given identical pre-drawn uniforms.
"""

from itertools import combinations

import numpy as np


def rbf_features(x, a, centers, inv_scale, num_actions):
    x = np.asarray(x, dtype=np.float64)
    a = np.asarray(a, dtype=np.int64)
    n = x.shape[0]
    nc = centers.shape[0]
    block = nc + 1
    phi = np.zeros((n, block * num_actions))
    g = np.exp(-((x[:, None] - centers[None, :]) ** 2) * inv_scale)
    rows = np.arange(n)
    cols = a[:, None] * block + np.arange(nc)[None, :]
    phi[rows[:, None], cols] = g
    phi[rows, a * block + nc] = 1.0
    return phi


def greedy_backup(y, alpha, centers, inv_scale, num_actions, v_max):
    """Truncated max over actions at states ``y``; ties go to the lower action."""
    y = np.asarray(y, dtype=np.float64)
    nc = centers.shape[0]
    block = nc + 1
    g = np.exp(-((y[:, None] - centers[None, :]) ** 2) * inv_scale)
    q = np.empty((y.shape[0], num_actions))
    for act in range(num_actions):
        w = alpha[act * block:(act + 1) * block]
        q[:, act] = g @ w[:nc] + w[nc]
    np.clip(q, -v_max, v_max, out=q)
    actions = np.argmax(q, axis=1)
    return q[np.arange(y.shape[0]), actions], actions


def chain_step(x, a, u_dir, u_noise, p, step, eta, lo, hi):
    direction = np.where(np.asarray(a) == 1, 1.0, -1.0)
    direction = np.where(u_dir < p, direction, -direction)
    disp = step + eta * (2.0 * u_noise - 1.0)
    return np.clip(x + direction * disp, lo, hi)


def chain_reward(x, reg_lo, reg_hi, reg_val):
    x = np.asarray(x, dtype=np.float64)
    r = np.zeros_like(x)
    # reversed so that the first listed region wins on overlap
    for k in range(reg_lo.shape[0] - 1, -1, -1):
        inside = (x >= reg_lo[k]) & (x <= reg_hi[k])
        r = np.where(inside, reg_val[k], r)
    return r


def random_walks(x0, actions, u_dir, u_noise, p, step, eta, lo, hi):
    """States visited by episodes driven by pre-drawn actions; shape (E, H+1)."""
    n_ep, horizon = actions.shape
    xs = np.empty((n_ep, horizon + 1))
    xs[:, 0] = x0
    for t in range(horizon):
        xs[:, t + 1] = chain_step(xs[:, t], actions[:, t], u_dir[:, t], u_noise[:, t],
                                  p, step, eta, lo, hi)
    return xs


def rollout_returns(x0, gamma, alpha, centers, inv_scale, num_actions, v_max,
                    p, step, eta, lo, hi, reg_lo, reg_hi, reg_val, u_dir, u_noise):
    n_ep, horizon = u_dir.shape
    x = np.full(n_ep, float(x0))
    ret = np.zeros(n_ep)
    disc = 1.0
    for t in range(horizon):
        _, act = greedy_backup(x, alpha, centers, inv_scale, num_actions, v_max)
        ret += disc * chain_reward(x, reg_lo, reg_hi, reg_val)
        x = chain_step(x, act, u_dir[:, t], u_noise[:, t], p, step, eta, lo, hi)
        disc *= gamma
    return ret


def _quad_forms(W, G):
    return np.einsum("ij,jk,ik->i", W, G, W)


def simplex_grid_min(G, steps, chunk=200_000):
    """Exhaustive search of w^T G w, w = e_0 - lambda, over lambda on the source
    simplex (lambda_0 = 0) at resolution 1/steps. Lexicographic tie-break."""
    m = G.shape[0]
    k = m - 1
    best_val = np.inf
    best = None
    combos = combinations(range(steps + k - 1), k - 1)
    while True:
        bars = np.fromiter((c for cc in _take(combos, chunk) for c in cc), dtype=np.int64)
        if bars.size == 0 and k > 1:
            break
        if k == 1:
            parts = np.array([[steps]])
        else:
            bars = bars.reshape(-1, k - 1)
            edges = np.hstack([np.full((bars.shape[0], 1), -1), bars,
                               np.full((bars.shape[0], 1), steps + k - 1)])
            parts = np.diff(edges, axis=1) - 1
        lam = parts / steps
        W = -np.hstack([np.zeros((lam.shape[0], 1)), lam])
        W[:, 0] += 1.0
        vals = _quad_forms(W, G)
        i = int(np.argmin(vals))
        if vals[i] < best_val:
            best_val = float(vals[i])
            best = np.concatenate([[0.0], lam[i]])
        if k == 1:
            break
    return best_val, best


def _take(it, n):
    for _ in range(n):
        try:
            yield next(it)
        except StopIteration:
            return


def box_grid_min(G, caps, tau, dim, steps):
    """Exhaustive search of the tradeoff objective over the grid {0, 1/steps, .., 1}^M."""
    m = G.shape[0]
    levels = np.arange(steps + 1) / steps
    best_val = np.inf
    best = None
    # chunk over the first coordinate; remaining coordinates as a full mesh
    rest = np.stack(np.meshgrid(*([levels] * (m - 1)), indexing="ij"), axis=-1).reshape(-1, m - 1) \
        if m > 1 else np.zeros((1, 0))
    for b0 in levels:
        B = np.hstack([np.full((rest.shape[0], 1), b0), rest])
        n = B @ caps
        ok = n > 0
        vals = np.full(B.shape[0], np.inf)
        if np.any(ok):
            lam = B[ok] * caps / n[ok, None]
            W = -lam
            W[:, 0] += 1.0
            vals[ok] = _quad_forms(W, G) + tau * np.sqrt(dim / n[ok])
        i = int(np.argmin(vals))
        if vals[i] < best_val:
            best_val = float(vals[i])
            best = B[i].copy()
    return best_val, best
