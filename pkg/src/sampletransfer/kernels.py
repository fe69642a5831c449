"""Backend selection for the numeric kernels.

The numba path is used when numba imports and ``SAMPLETRANSFER_DISABLE_NUMBA``
is unset (or ``0``). The flag is read once, at import time. Both backends
consume pre-drawn random numbers, so switching backends does not change any
sampled trajectory.
"""

import os

from . import _kernels_np as numpy_impl

_FLAG = "SAMPLETRANSFER_DISABLE_NUMBA"


def _numba_requested() -> bool:
    return os.environ.get(_FLAG, "0").strip().lower() in ("", "0", "false", "no")


numba_impl = None
if _numba_requested():
    try:
        from . import _kernels_nb as numba_impl
    except ImportError:  # pragma: no cover - numba missing
        numba_impl = None

BACKEND = "numba" if numba_impl is not None else "numpy"
_impl = numba_impl if numba_impl is not None else numpy_impl

rbf_features = _impl.rbf_features
greedy_backup = _impl.greedy_backup
chain_step = _impl.chain_step
chain_reward = _impl.chain_reward
random_walks = _impl.random_walks
rollout_returns = _impl.rollout_returns
simplex_grid_min = _impl.simplex_grid_min
box_grid_min = _impl.box_grid_min
