import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sampletransfer import mdp, oracle, transfer
from sampletransfer.fqi import FqiConfig
from sampletransfer.linear import FeatureMap, LinearQ
from sampletransfer.mdp import ChainParams, TaskModel
from sampletransfer.transfer import (
    SamplePool,
    TransferErrorEstimator,
    UniformSampler,
    build_auxiliary_set,
)

MU = UniformSampler()


def set1():
    return mdp.task_catalog(1)


def zero_q():
    return LinearQ.zero(FeatureMap(), 50.0)


def copies(n):
    m1 = set1()[0]
    return [TaskModel(ChainParams(**{**m1.params.__dict__, "name": f"C{i}"})) for i in range(n)]


# --------------------------------------------------------------------------
# random tasks design


def test_unit_mass_uses_one_task():
    ts = transfer.sample_random_tasks_design(set1(), [0, 0, 1, 0, 0], 500, MU, np.random.default_rng(0))
    assert np.all(ts.task == 2)
    np.testing.assert_array_equal(ts.r, set1()[2].reward(ts.x))


def test_pure_transfer_has_no_target_samples():
    ts = transfer.sample_random_tasks_design(set1(), [0, 0.25, 0.25, 0.25, 0.25], 2000, MU,
                                             np.random.default_rng(1))
    assert not np.any(ts.task == 0)


def test_multinomial_counts_within_three_sigma():
    L = 10_000
    ts = transfer.sample_random_tasks_design(set1(), [0, 0.25, 0.25, 0.25, 0.25], L, MU,
                                             np.random.default_rng(2))
    counts = ts.counts(5)[1:]
    sigma = math.sqrt(L * 0.25 * 0.75)
    assert np.all(np.abs(counts - L / 4) <= 3 * sigma)


def test_samples_follow_their_task():
    tasks = set1()
    ts = transfer.sample_random_tasks_design(tasks, [0.2] * 5, 3000, MU, np.random.default_rng(3))
    for m, task in enumerate(tasks):
        sel = ts.task == m
        np.testing.assert_array_equal(ts.r[sel], task.reward(ts.x[sel]))
        step = np.abs(ts.y[sel] - ts.x[sel])
        inside = np.abs(ts.x[sel]) < 20 - 2.2
        lo, hi = task.params.l - task.params.eta, task.params.l + task.params.eta
        assert np.all((step[inside] >= lo - 1e-12) & (step[inside] <= hi + 1e-12))


def test_bad_proportions_rejected():
    with pytest.raises(ValueError):
        transfer.sample_random_tasks_design(set1(), [0.5, 0.6, 0, 0, 0], 10, MU, np.random.default_rng(0))
    with pytest.raises(ValueError):
        transfer.sample_random_tasks_design(set1(), [1, 0, 0, 0, 0], 0, MU, np.random.default_rng(0))


# --------------------------------------------------------------------------
# auxiliary set and estimator


def test_auxiliary_shapes():
    aux = build_auxiliary_set(set1()[:2], 1, 1, MU, np.random.default_rng(0))
    assert aux.rewards.shape == (1, 2) and aux.next_states.shape == (1, 2, 1)
    aux = build_auxiliary_set(set1(), 30, 3, MU, np.random.default_rng(0), shared_noise=False)
    assert aux.rewards.shape == (30, 5) and aux.next_states.shape == (30, 5, 3)


def test_identical_tasks_identical_columns():
    aux = build_auxiliary_set(copies(3), 200, 2, MU, np.random.default_rng(4))
    assert np.all(aux.rewards[:, 0:1] == aux.rewards)
    assert np.all(aux.next_states[:, 0:1] == aux.next_states)


def test_identical_tasks_zero_error():
    rng = np.random.default_rng(5)
    aux = build_auxiliary_set(copies(4), 300, 1, MU, rng)
    q = LinearQ(rng.normal(size=20), FeatureMap(), 10.0)
    est = TransferErrorEstimator(aux, q, 0.9)
    for lam in rng.dirichlet(np.ones(3), size=20):
        assert est(np.r_[0.0, lam]) == pytest.approx(0.0, abs=1e-20)


def test_reward_identity_member_has_zero_error():
    aux = build_auxiliary_set(set1(), 1000, 1, MU, np.random.default_rng(6))
    assert transfer.estimated_transfer_error(aux, zero_q(), [0, 0.2, 0.4, 0.2, 0.2], 0.9) < 1e-24


def direct_error(aux, q, lam, gamma):
    """Plain loops over pairs, tasks and next states."""
    S, M, T = aux.next_states.shape
    total = 0.0
    for s in range(S):
        c = []
        for m in range(M):
            cont = 0.0
            for t in range(T):
                y = aux.next_states[s, m, t]
                cont += max(float(q(y, a)[0]) for a in (0, 1))
            c.append(aux.rewards[s, m] + gamma * cont / T)
        resid = c[0] - sum(lam[m] * c[m] for m in range(1, M))
        total += resid * resid
    return total / S


def test_estimator_matches_direct_loop():
    rng = np.random.default_rng(7)
    aux = transfer.AuxiliarySet(np.array([-10.0, 4.0]), np.array([1, 0]),
                                np.array([[1.0, -5.0, 5.0], [0.0, 1.0, -1.0]]),
                                rng.uniform(-20, 20, size=(2, 3, 2)))
    q = LinearQ(rng.normal(size=20) * 4, FeatureMap(), 5.0)
    est = TransferErrorEstimator(aux, q, 0.9)
    for lam in rng.dirichlet(np.ones(2), size=10):
        full = np.r_[0.0, lam]
        assert abs(est(full) - direct_error(aux, q, full, 0.9)) < 1e-12
        assert abs(est.batch(full[None])[0] - est(full)) < 1e-12


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 100_000))
def test_estimator_cache_matches_loop(seed):
    rng = np.random.default_rng(seed)
    aux = build_auxiliary_set(set1()[:3], 6, 2, MU, rng, shared_noise=False)
    q = LinearQ(rng.normal(size=20) * 5, FeatureMap(), 50.0)
    lam = np.r_[0.0, rng.dirichlet(np.ones(2))]
    assert abs(TransferErrorEstimator(aux, q, 0.9)(lam) - direct_error(aux, q, lam, 0.9)) < 1e-12


def test_convexity_random_triples():
    rng = np.random.default_rng(8)
    for _ in range(100):
        est = TransferErrorEstimator.from_values(rng.normal(size=(20, 5)) * rng.uniform(0.1, 10))
        a, b = rng.dirichlet(np.ones(5), size=2)
        th = rng.uniform()
        assert est(th * a + (1 - th) * b) <= th * est(a) + (1 - th) * est(b) + 1e-10


# --------------------------------------------------------------------------
# simplex minimization


def test_single_source_forced():
    est = TransferErrorEstimator.from_values(np.random.default_rng(0).normal(size=(10, 2)))
    np.testing.assert_array_equal(transfer.minimize_on_sources(est.gram), [0.0, 1.0])


def test_bat_recovers_reward_family():
    aux = build_auxiliary_set(set1(), 1000, 1, MU, np.random.default_rng(9))
    lam = transfer.bat_minimize(aux, zero_q(), 0.9)
    assert transfer.estimated_transfer_error(aux, zero_q(), lam, 0.9) <= 1e-6
    assert abs(5 * (lam[2] - lam[1]) - 1) <= 0.02 and abs(lam[3] - lam[4]) <= 0.02
    # minimum-norm member: lam2 = 0.15, lam3 = 0.35, lam4 = lam5 = 0.25
    np.testing.assert_allclose(lam, [0, 0.15, 0.35, 0.25, 0.25], atol=1e-6)


def test_simplex_qp_known_solution():
    # min |x - (0.7, 0.3, -0.5)|^2 on the simplex; projection gives (0.7, 0.3, 0)
    x = transfer.solve_simplex_qp(2 * np.eye(3), -2 * np.array([0.7, 0.3, -0.5]))
    np.testing.assert_allclose(x, [0.7, 0.3, 0.0], atol=1e-12)


def test_project_simplex():
    np.testing.assert_allclose(transfer.project_simplex(np.array([2.0, 0.0, 0.0])), [1, 0, 0])
    np.testing.assert_allclose(transfer.project_simplex(np.array([0.5, 0.5, 0.5])), [1 / 3] * 3)


def first_order_ok(est, lam, step=1e-4, tol=1e-8):
    """No move of mass between two coordinates lowers the objective by more than tol."""
    f0 = est(lam)
    M = lam.shape[0]
    for i, j in itertools.permutations(range(1, M), 2):
        if lam[i] <= 0:
            continue
        d = min(step, lam[i])
        moved = lam.copy()
        moved[i] -= d
        moved[j] += d
        if est(moved) < f0 - tol:
            return False
    return True


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 100_000), M=st.integers(2, 7), S=st.integers(2, 50))
def test_simplex_solution_valid_and_stationary(seed, M, S):
    rng = np.random.default_rng(seed)
    est = TransferErrorEstimator.from_values(rng.normal(size=(S, M)) + rng.normal(size=M))
    lam = transfer.minimize_on_sources(est.gram)
    assert lam[0] == 0.0 and np.all(lam >= 0) and abs(lam.sum() - 1) <= 1e-9
    assert first_order_ok(est, lam)


def test_bat_matches_grid_oracle_m4():
    rng = np.random.default_rng(10)
    for _ in range(10):
        est = TransferErrorEstimator.from_values(rng.normal(size=(15, 4)))
        lam = transfer.minimize_on_sources(est.gram)
        val, _ = oracle.bat_grid_oracle(est.gram, 0.01)
        assert est(lam) <= val + oracle.grid_gap(est.gram)


def test_qp_fallback_projected_gradient():
    rng = np.random.default_rng(11)
    A = rng.normal(size=(6, 6))
    H = A @ A.T + 0.1 * np.eye(6)
    g = rng.normal(size=6)
    x_as = transfer.solve_simplex_qp(H, g)
    x_pg = transfer._projected_gradient(H, g, np.full(6, 1 / 6))
    f = lambda x: 0.5 * x @ H @ x + g @ x  # noqa: E731
    assert abs(f(x_as) - f(x_pg)) < 1e-10


def test_degenerate_aux_rejected():
    with pytest.raises(ValueError):
        TransferErrorEstimator.from_values(np.zeros((0, 3)))


# --------------------------------------------------------------------------
# tradeoff objective


def test_btt_objective_identical_tasks():
    est = TransferErrorEstimator.from_values(np.tile(np.random.default_rng(0).normal(size=(30, 1)), (1, 3)))
    caps = np.array([100.0, 200.0, 300.0])
    beta = np.array([0.5, 0.25, 1.0])
    n = beta @ caps
    assert transfer.btt_objective(est, beta, caps, 0.75, 20) == pytest.approx(0.75 * math.sqrt(20 / n), abs=1e-14)


def test_btt_objective_two_terms():
    rng = np.random.default_rng(1)
    c = rng.normal(size=(7, 3))
    est = TransferErrorEstimator.from_values(c)
    caps = np.array([50.0, 80.0, 120.0])
    beta = np.array([0.3, 0.6, 0.1])
    n = 0.3 * 50 + 0.6 * 80 + 0.1 * 120
    lam = [0.3 * 50 / n, 0.6 * 80 / n, 0.1 * 120 / n]
    err = sum((c[s, 0] - sum(lam[m] * c[s, m] for m in range(3))) ** 2 for s in range(7)) / 7
    expected = err + 1.25 * math.sqrt(20 / n)
    assert abs(transfer.btt_objective(est, beta, caps, 1.25, 20) - expected) < 1e-12
    assert transfer.btt_objective(est, beta, caps, 0.0, 20) == pytest.approx(err, abs=1e-14)
    assert abs(transfer.tradeoff_batch(est.gram, beta, caps, 1.25, 20)[0] - expected) < 1e-12


def test_btt_objective_rejects_zero_beta():
    est = TransferErrorEstimator.from_values(np.ones((3, 2)))
    with pytest.raises(ValueError):
        transfer.btt_objective(est, [0, 0], [10, 10], 0.75, 20)


def test_target_alone_has_zero_error():
    est = TransferErrorEstimator.from_values(np.random.default_rng(2).normal(size=(9, 4)))
    assert est([1.0, 0, 0, 0]) == 0.0


def test_btt_identical_tasks_takes_everything():
    est = TransferErrorEstimator.from_values(np.tile(np.random.default_rng(3).normal(size=(30, 1)), (1, 3)))
    beta, _ = transfer.btt_optimize(est, [100, 1000, 1000], 0.75, 20)
    np.testing.assert_allclose(beta, 1.0)


def test_btt_beats_every_coarse_point():
    rng = np.random.default_rng(4)
    est = TransferErrorEstimator.from_values(rng.normal(size=(20, 4)))
    caps = np.array([100.0, 5000, 5000, 5000])
    beta, val = transfer.btt_optimize(est, caps, 0.75, 20)
    levels = np.linspace(0, 1, 5)
    grid = np.array(list(itertools.product(levels, repeat=4)))
    assert val <= np.min(transfer.tradeoff_batch(est.gram, grid, caps, 0.75, 20)) + 1e-15
    assert np.all((beta >= 0) & (beta <= 1))


def test_btt_matches_grid_oracle_m3():
    rng = np.random.default_rng(5)
    for _ in range(5):
        est = TransferErrorEstimator.from_values(rng.normal(size=(12, 3)) * rng.uniform(0.1, 3))
        caps = rng.integers(10, 5000, size=3).astype(float)
        tau = float(rng.uniform(0, 2))
        beta, val = transfer.btt_optimize(est, caps, tau, 20)
        oval, _ = oracle.btt_grid_oracle(est.gram, caps, tau, 20, 0.01)
        assert val <= oval + oracle.grid_gap(est.gram)


def test_btt_deterministic():
    est = TransferErrorEstimator.from_values(np.random.default_rng(6).normal(size=(20, 4)))
    a = transfer.btt_optimize(est, [100, 500, 500, 500], 0.5, 20)
    b = transfer.btt_optimize(est, [100, 500, 500, 500], 0.5, 20)
    np.testing.assert_array_equal(a[0], b[0])


def test_induced_proportions():
    np.testing.assert_allclose(transfer.induced_proportions([1, 0.5, 0], [100, 200, 300]), [0.5, 0.5, 0])
    with pytest.raises(ValueError):
        transfer.induced_proportions([0, 0], [1, 1])


# --------------------------------------------------------------------------
# capped pools


def pool(caps, seed=0):
    return SamplePool.generate(set1()[:len(caps)], caps, MU, np.random.default_rng(seed))


def test_capped_draw_counts():
    p = pool([100, 200, 50])
    rng = np.random.default_rng(1)
    ts = transfer.draw_capped_training_set(p, [1, 0.5, 0], rng)
    np.testing.assert_array_equal(ts.counts(3), [100, 100, 0])
    ts = transfer.draw_capped_training_set(p, [1, 0, 0], rng)
    np.testing.assert_array_equal(np.sort(ts.x), np.sort(p.reservoirs[0].x))
    ts = transfer.draw_capped_training_set(p, [1, 1, 1], rng)
    assert len(ts) == 350


def test_round_half_up():
    np.testing.assert_array_equal(transfer.selected_counts([0.5, 0.25, 0.015], [3, 2, 100]), [2, 1, 2])


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), beta=st.lists(st.floats(0, 1), min_size=3, max_size=3))
def test_capped_draws_never_repeat(seed, beta):
    p = pool([40, 60, 30], seed % 7)
    ts = transfer.draw_capped_training_set(p, beta, np.random.default_rng(seed))
    for m, res in enumerate(p.reservoirs):
        sel = ts.task == m
        assert sel.sum() <= len(res)
        assert len(np.unique(ts.x[sel])) == sel.sum()
        assert np.all(np.isin(ts.x[sel], res.x))


def test_capped_draw_over_request():
    p = pool([10, 10])
    with pytest.raises(ValueError):
        transfer.draw_capped_training_set(p, [1.2, 0], np.random.default_rng(0))


# --------------------------------------------------------------------------
# algorithms


def cfg(tasks, k=13):
    return FqiConfig.for_tasks(tasks, iterations=k)


def test_bat_one_source_equals_ast():
    tasks = set1()[:2]
    a = transfer.run_bat(tasks, 100, 1, 500, cfg(tasks, 3), np.random.default_rng(0))
    assert np.all(a.weights == [[0.0, 1.0]] * 3)


def test_bat_lambda_two_drops():
    tasks = set1()
    lam2 = [transfer.run_bat(tasks, 300, 1, 3000, cfg(tasks), np.random.default_rng(s)).weights[-1, 1]
            for s in range(3)]
    assert np.mean(lam2) <= 0.05


def test_bat_deterministic_and_valid():
    tasks = set1()
    a = transfer.run_bat(tasks, 100, 1, 500, cfg(tasks, 4), np.random.default_rng(7))
    b = transfer.run_bat(tasks, 100, 1, 500, cfg(tasks, 4), np.random.default_rng(7))
    np.testing.assert_array_equal(a.weights, b.weights)
    assert np.all(a.weights >= 0) and np.allclose(a.weights.sum(axis=1), 1, atol=1e-9)
    assert np.all(a.weights[:, 0] == 0)


def test_bat_plus_target_adds_aux_samples():
    tasks = set1()
    run = transfer.run_bat(tasks, 100, 1, 500, cfg(tasks, 2), np.random.default_rng(0), include_aux_target=True)
    assert np.all(run.counts[:, 0] == 100) and np.all(run.counts.sum(axis=1) == 600)


def test_ast_unit_target_is_single_task():
    tasks = set1()
    run = transfer.run_ast(tasks, [1, 0, 0, 0, 0], 400, cfg(tasks, 3), np.random.default_rng(0))
    assert np.all(run.counts[:, 1:] == 0)


def test_btt_keeps_target_and_caps():
    tasks = mdp.task_catalog(2)
    run = transfer.run_btt(tasks, [100, 500, 500, 500, 500], 0.75, cfg(tasks, 4), np.random.default_rng(0))
    assert np.all(run.weights[:, 0] >= 0.99)
    assert np.all(run.counts <= [100, 500, 500, 500, 500])


def test_btt_similar_sources_stay_high():
    tasks = copies(3)
    run = transfer.run_btt(tasks, [50, 2000, 2000], 0.75, cfg(tasks, 3), np.random.default_rng(1))
    assert np.all(run.weights[:2, 1:] >= 0.99)


def test_single_task_fixed_and_fresh():
    m1 = set1()[0]
    run = transfer.run_single_task(m1, 50, cfg([m1], 2), np.random.default_rng(0))
    assert run.counts.tolist() == [[50], [50]]
    run = transfer.run_single_task(m1, 50, cfg([m1], 2), np.random.default_rng(0), fresh=True)
    assert len(run.iterates) == 2


def test_episode_sampler():
    sampler = transfer.EpisodeSampler(set1()[0], horizon=10)
    x, a = sampler(35, np.random.default_rng(0))
    assert x.shape == (35,) and a.shape == (35,)
    assert x[0] == 0.0 and x[10] == 0.0
