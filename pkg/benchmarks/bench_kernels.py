"""Time the numba kernels against their numpy fallbacks on realistic sizes.

    python benchmarks/bench_kernels.py [--repeat N]

Compilation happens on the first call and is excluded from the timings.
"""

import argparse
import time

import numpy as np

from sampletransfer import _kernels_np as npk

try:
    from sampletransfer import _kernels_nb as nbk
except ImportError:  # numba not installed
    nbk = None

CENTERS = np.linspace(-20.0, 20.0, 9)
REGIONS = (np.array([-11.0, 9.0]), np.array([-9.0, 11.0]), np.array([1.0, 1.0]))


def cases(rng):
    n = 10_000
    x = rng.uniform(-20, 20, n)
    a = rng.integers(0, 2, n)
    alpha = rng.normal(size=20)
    u1, u2 = rng.random(n), rng.random(n)
    ud, un = rng.random((50, 50)), rng.random((50, 50))
    acts = rng.integers(0, 2, (1000, 10))
    wd, wn = rng.random((1000, 10)), rng.random((1000, 10))
    c = rng.normal(size=(200, 4))
    G4 = c.T @ c / 200
    G3 = G4[:3, :3]
    caps = np.array([100.0, 5000.0, 5000.0])
    return {
        "rbf_features (10k)": lambda k: k.rbf_features(x, a, CENTERS, 1 / 32, 2),
        "greedy_backup (10k)": lambda k: k.greedy_backup(x, alpha, CENTERS, 1 / 32, 2, 50.0),
        "chain_step (10k)": lambda k: k.chain_step(x, a, u1, u2, 0.9, 1.0, 0.1, -20.0, 20.0),
        "random_walks (1000x10)": lambda k: k.random_walks(0.0, acts, wd, wn, 0.9, 1.0, 0.1, -20.0, 20.0),
        "rollout_returns (50x50)": lambda k: k.rollout_returns(
            0.0, 0.9, alpha, CENTERS, 1 / 32, 2, 50.0, 0.9, 1.0, 0.1, -20.0, 20.0, *REGIONS, ud, un),
        "simplex_grid_min (M=4, 0.01)": lambda k: k.simplex_grid_min(G4, 100),
        "box_grid_min (M=3, 0.02)": lambda k: k.box_grid_min(G3, caps, 0.75, 20.0, 50),
    }


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)
    if nbk is None:
        print("numba is not installed; nothing to compare")
        return
    print(f"{'kernel':32s} {'numpy ms':>10s} {'numba ms':>10s} {'speedup':>8s}")
    for name, call in cases(np.random.default_rng(0)).items():
        call(nbk)  # compile
        t_np = best_of(lambda: call(npk), args.repeat)
        t_nb = best_of(lambda: call(nbk), args.repeat)
        print(f"{name:32s} {t_np * 1e3:10.3f} {t_nb * 1e3:10.3f} {t_np / t_nb:8.1f}")


if __name__ == "__main__":
    main()
