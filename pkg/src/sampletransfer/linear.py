"""Linear action-value functions over block-structured features.

Each action owns one block of the feature vector; the blocks of the other
actions are zero. The default map uses 9 Gaussians spread over [-20, 20] plus a
constant per action, which gives d = 20 for two actions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from . import kernels


@dataclass(frozen=True)
class FeatureMap:
    """Gaussian radial basis functions plus a constant, one block per action.

    ``width_convention`` selects how ``sigma2`` enters the exponent:
    ``"variance"`` gives exp(-(x-c)^2 / (2 sigma2)), ``"raw"`` gives
    exp(-(x-c)^2 / sigma2).
    """

    centers: tuple[float, ...] = tuple(np.linspace(-20.0, 20.0, 9).tolist())
    sigma2: float = 16.0
    num_actions: int = 2
    width_convention: str = "variance"
    _centers: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.width_convention not in ("variance", "raw"):
            raise ValueError(f"unknown width_convention {self.width_convention!r}")
        if self.sigma2 <= 0:
            raise ValueError("sigma2 must be positive")
        object.__setattr__(self, "centers", tuple(float(c) for c in self.centers))
        object.__setattr__(self, "_centers", np.asarray(self.centers, dtype=np.float64))

    @classmethod
    def uniform(cls, n_centers=9, lo=-20.0, hi=20.0, **kwargs):
        return cls(centers=tuple(np.linspace(lo, hi, n_centers).tolist()), **kwargs)

    @property
    def dim(self) -> int:
        return (len(self.centers) + 1) * self.num_actions

    @property
    def inv_scale(self) -> float:
        return 1.0 / (2.0 * self.sigma2) if self.width_convention == "variance" else 1.0 / self.sigma2

    def features(self, x, a) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=np.float64))
        a = np.broadcast_to(np.asarray(a, dtype=np.int64), x.shape).copy()
        return kernels.rbf_features(x, a, self._centers, self.inv_scale, self.num_actions)

    def greedy(self, alpha, y, v_max):
        y = np.atleast_1d(np.asarray(y, dtype=np.float64))
        return kernels.greedy_backup(y, np.ascontiguousarray(alpha, dtype=np.float64),
                                     self._centers, self.inv_scale, self.num_actions, float(v_max))


@dataclass(frozen=True)
class OneHotFeatures:
    """Indicator features over (integer state, action) pairs; tabular-equivalent."""

    n_states: int
    num_actions: int = 2

    @property
    def dim(self) -> int:
        return self.n_states * self.num_actions

    def features(self, x, a) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x)).astype(np.int64)
        a = np.broadcast_to(np.asarray(a, dtype=np.int64), x.shape)
        phi = np.zeros((x.shape[0], self.dim))
        phi[np.arange(x.shape[0]), a * self.n_states + x] = 1.0
        return phi

    def greedy(self, alpha, y, v_max):
        return _generic_greedy(self, alpha, y, v_max)


def _generic_greedy(fmap, alpha, y, v_max):
    y = np.atleast_1d(np.asarray(y))
    q = np.column_stack([np.clip(fmap.features(y, np.full(y.shape, act)) @ alpha, -v_max, v_max)
                         for act in range(fmap.num_actions)])
    actions = np.argmax(q, axis=1)
    return q[np.arange(y.shape[0]), actions], actions


@dataclass(frozen=True)
class LinearQ:
    alpha: np.ndarray
    feature_map: FeatureMap
    v_max: float

    def __post_init__(self):
        alpha = np.asarray(self.alpha, dtype=np.float64).copy()
        if alpha.shape != (self.feature_map.dim,):
            raise ValueError(f"alpha has shape {alpha.shape}, expected ({self.feature_map.dim},)")
        alpha.setflags(write=False)
        object.__setattr__(self, "alpha", alpha)

    @classmethod
    def zero(cls, feature_map, v_max):
        return cls(np.zeros(feature_map.dim), feature_map, v_max)

    def raw(self, x, a):
        return self.feature_map.features(x, a) @ self.alpha

    def __call__(self, x, a):
        return np.clip(self.raw(x, a), -self.v_max, self.v_max)

    def greedy(self, x):
        """(values, actions) of the truncated function maximized over actions."""
        return self.feature_map.greedy(self.alpha, x, self.v_max)

    def truncated(self) -> "LinearQ":
        return self


def feature_matrix(fm, x, a) -> np.ndarray:
    return fm.features(x, a)


def feature_vector(fm, x: float, a: int) -> np.ndarray:
    return fm.features(np.array([x]), np.array([a]))[0]


def least_squares_fit(phi: np.ndarray, targets: np.ndarray, rcond: float = 1e-10) -> np.ndarray:
    """Minimizer of the mean squared residual ||phi @ alpha - targets||^2 / L.

    Uses an SVD with relative cutoff ``rcond``, so a rank-deficient ``phi`` gets
    the minimum-norm minimizer.
    """
    phi = np.asarray(phi, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if phi.ndim != 2 or phi.shape[0] < 1 or targets.shape != (phi.shape[0],):
        raise ValueError(f"shape mismatch: phi {phi.shape}, targets {targets.shape}")
    if not (np.all(np.isfinite(phi)) and np.all(np.isfinite(targets))):
        raise ValueError("least_squares_fit: non-finite input")
    alpha, *_ = np.linalg.lstsq(phi, targets, rcond=rcond)
    return alpha


def evaluate_truncated(q: LinearQ, x, a):
    out = q(x, a)
    return float(out[0]) if np.ndim(x) == 0 else out


def greedy_value(q: LinearQ, x):
    """Best action and its truncated value; ties go to the lower action index."""
    values, actions = q.greedy(x)
    if np.ndim(x) == 0:
        return int(actions[0]), float(values[0])
    return actions, values


class GramDiagnostic(NamedTuple):
    omega: float
    ill_conditioned: bool
    n_samples: int


def gram_min_eigenvalue(fm, x, a, tol: float = 1e-10) -> GramDiagnostic:
    """Smallest eigenvalue of the empirical second-moment matrix of the features.

    Flags the estimate as ill-conditioned when there are fewer samples than
    features or the eigenvalue falls below ``tol``.
    """
    phi = fm.features(x, a)
    n = phi.shape[0]
    gram = phi.T @ phi / max(n, 1)
    omega = float(np.linalg.eigvalsh(gram)[0])
    return GramDiagnostic(omega, n < fm.dim or omega <= tol, n)


def save_weights(q: LinearQ, path) -> None:
    lines = [f"# d={q.alpha.shape[0]}", f"# v_max={q.v_max!r}"]
    lines += [repr(float(v)) for v in q.alpha]
    Path(path).write_text("\n".join(lines) + "\n")


def load_weights(path, feature_map) -> LinearQ:
    header, values = {}, []
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, _, val = line[1:].strip().partition("=")
            header[key.strip()] = val.strip()
        else:
            values.append(float(line))
    d = int(header["d"])
    if d != len(values):
        raise ValueError(f"{path}: header says d={d} but file holds {len(values)} values")
    return LinearQ(np.array(values), feature_map, float(header["v_max"]))
