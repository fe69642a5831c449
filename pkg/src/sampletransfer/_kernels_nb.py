"""numba-compiled versions of the hot kernels (see ``_kernels_np`` for the reference path)."""

import math

import numpy as np
from numba import njit


@njit(cache=True)
def rbf_features(x, a, centers, inv_scale, num_actions):
    n = x.shape[0]
    nc = centers.shape[0]
    block = nc + 1
    phi = np.zeros((n, block * num_actions))
    for i in range(n):
        off = a[i] * block
        for j in range(nc):
            diff = x[i] - centers[j]
            phi[i, off + j] = math.exp(-diff * diff * inv_scale)
        phi[i, off + nc] = 1.0
    return phi


@njit(cache=True)
def _greedy_one(y, alpha, centers, inv_scale, num_actions, v_max, g):
    nc = centers.shape[0]
    block = nc + 1
    for j in range(nc):
        diff = y - centers[j]
        g[j] = math.exp(-diff * diff * inv_scale)
    best = -np.inf
    best_a = 0
    for act in range(num_actions):
        off = act * block
        q = alpha[off + nc]
        for j in range(nc):
            q += g[j] * alpha[off + j]
        if q > v_max:
            q = v_max
        elif q < -v_max:
            q = -v_max
        if q > best:
            best = q
            best_a = act
    return best, best_a


@njit(cache=True)
def greedy_backup(y, alpha, centers, inv_scale, num_actions, v_max):
    n = y.shape[0]
    values = np.empty(n)
    actions = np.empty(n, dtype=np.int64)
    g = np.empty(centers.shape[0])
    for i in range(n):
        v, act = _greedy_one(y[i], alpha, centers, inv_scale, num_actions, v_max, g)
        values[i] = v
        actions[i] = act
    return values, actions


@njit(cache=True)
def _step_one(x, a, u_dir, u_noise, p, step, eta, lo, hi):
    direction = 1.0 if a == 1 else -1.0
    if not u_dir < p:
        direction = -direction
    y = x + direction * (step + eta * (2.0 * u_noise - 1.0))
    if y < lo:
        return lo
    if y > hi:
        return hi
    return y


@njit(cache=True)
def chain_step(x, a, u_dir, u_noise, p, step, eta, lo, hi):
    n = x.shape[0]
    y = np.empty(n)
    for i in range(n):
        y[i] = _step_one(x[i], a[i], u_dir[i], u_noise[i], p, step, eta, lo, hi)
    return y


@njit(cache=True)
def _reward_one(x, reg_lo, reg_hi, reg_val):
    for k in range(reg_lo.shape[0]):
        if reg_lo[k] <= x <= reg_hi[k]:
            return reg_val[k]
    return 0.0


@njit(cache=True)
def chain_reward(x, reg_lo, reg_hi, reg_val):
    n = x.shape[0]
    r = np.empty(n)
    for i in range(n):
        r[i] = _reward_one(x[i], reg_lo, reg_hi, reg_val)
    return r


@njit(cache=True)
def random_walks(x0, actions, u_dir, u_noise, p, step, eta, lo, hi):
    n_ep, horizon = actions.shape
    xs = np.empty((n_ep, horizon + 1))
    for e in range(n_ep):
        x = x0
        xs[e, 0] = x
        for t in range(horizon):
            x = _step_one(x, actions[e, t], u_dir[e, t], u_noise[e, t], p, step, eta, lo, hi)
            xs[e, t + 1] = x
    return xs


@njit(cache=True)
def rollout_returns(x0, gamma, alpha, centers, inv_scale, num_actions, v_max,
                    p, step, eta, lo, hi, reg_lo, reg_hi, reg_val, u_dir, u_noise):
    n_ep, horizon = u_dir.shape
    ret = np.zeros(n_ep)
    g = np.empty(centers.shape[0])
    for e in range(n_ep):
        x = x0
        disc = 1.0
        acc = 0.0
        for t in range(horizon):
            _, act = _greedy_one(x, alpha, centers, inv_scale, num_actions, v_max, g)
            acc += disc * _reward_one(x, reg_lo, reg_hi, reg_val)
            x = _step_one(x, act, u_dir[e, t], u_noise[e, t], p, step, eta, lo, hi)
            disc *= gamma
        ret[e] = acc
    return ret


@njit(cache=True)
def _quad(w, G):
    m = w.shape[0]
    s = 0.0
    for i in range(m):
        row = 0.0
        for j in range(m):
            row += G[i, j] * w[j]
        s += w[i] * row
    return s


@njit(cache=True)
def simplex_grid_min(G, steps):
    m = G.shape[0]
    k = m - 1
    parts = np.zeros(k, dtype=np.int64)
    parts[k - 1] = steps
    w = np.zeros(m)
    best_val = np.inf
    best = np.zeros(m)
    while True:
        w[0] = 1.0
        for i in range(k):
            w[i + 1] = -parts[i] / steps
        val = _quad(w, G)
        if val < best_val:
            best_val = val
            for i in range(k):
                best[i + 1] = parts[i] / steps
        # advance to the next composition in lexicographic order of parts[:k-1]
        j = k - 2
        while j >= 0:
            used = 0
            for i in range(j):
                used += parts[i]
            if used + parts[j] < steps:
                parts[j] += 1
                for i in range(j + 1, k - 1):
                    parts[i] = 0
                break
            j -= 1
        if j < 0:
            break
        used = 0
        for i in range(k - 1):
            used += parts[i]
        parts[k - 1] = steps - used
    return best_val, best


@njit(cache=True)
def box_grid_min(G, caps, tau, dim, steps):
    m = G.shape[0]
    idx = np.zeros(m, dtype=np.int64)
    w = np.zeros(m)
    beta = np.zeros(m)
    best_val = np.inf
    best = np.zeros(m)
    while True:
        n = 0.0
        for i in range(m):
            beta[i] = idx[i] / steps
            n += beta[i] * caps[i]
        if n > 0.0:
            for i in range(m):
                w[i] = -beta[i] * caps[i] / n
            w[0] += 1.0
            val = _quad(w, G) + tau * math.sqrt(dim / n)
            if val < best_val:
                best_val = val
                best[:] = beta
        j = m - 1
        while j >= 0 and idx[j] == steps:
            idx[j] = 0
            j -= 1
        if j < 0:
            break
        idx[j] += 1
    return best_val, best
