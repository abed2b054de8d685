"""Backend selection for the hot kernels.

``RICMATCH_BACKEND=numba`` selects the ``@njit`` kernels, ``numpy`` (the
default) the vectorised ones.  Without SVML, numba's scalar exp/tanh lose
to numpy's SIMD loops at training batch sizes, while numba wins on tiny
batches where call overhead dominates; see ``benchmarks/bench_kernels.py``.
The choice is fixed at import time.
"""

import os

from . import _kernels

_requested = os.environ.get("RICMATCH_BACKEND", "numpy").strip().lower()
if _requested not in ("numba", "numpy"):
    raise ImportError(f"RICMATCH_BACKEND must be 'numba' or 'numpy', got {_requested!r}")

if _requested == "numba" and _kernels.njit is not None:
    BACKEND = "numba"
    layer_forward = _kernels.layer_forward_nb
    layer_backward = _kernels.layer_backward_nb
    adam_update = _kernels.adam_update_nb
    sorted_quantile_l1 = _kernels.sorted_quantile_l1_nb
else:
    BACKEND = "numpy"
    layer_forward = _kernels.layer_forward_np
    layer_backward = _kernels.layer_backward_np
    adam_update = _kernels.adam_update_np
    sorted_quantile_l1 = _kernels.sorted_quantile_l1_np

__all__ = [
    "BACKEND",
    "layer_forward",
    "layer_backward",
    "adam_update",
    "sorted_quantile_l1",
]
