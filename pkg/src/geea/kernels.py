"""Ranking and label-construction kernels.

The compiled extension ``geea._kernels`` is used when it was built; otherwise
the numpy implementation in ``geea._kernels_py`` is used. Setting
``GEEA_PURE_PYTHON=1`` forces the fallback. ``BACKEND`` names the active one.
"""

import os

import numpy as np

from . import _kernels_py

if os.environ.get("GEEA_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl
        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"


def true_ranks(scores, truth, impl=None) -> np.ndarray:
    """1-based rank of column ``truth[i]`` within row ``i`` of ``scores``.

    Rows are ranked in descending score order; a tie is resolved in favour of
    the lower column index, so ranks are deterministic.
    """
    impl = impl or _impl
    scores = np.ascontiguousarray(scores, dtype=np.float64)
    truth = np.ascontiguousarray(truth, dtype=np.int64)
    return impl.true_ranks(scores, truth)


def multi_hot(indptr, indices, rows, width: int, impl=None) -> np.ndarray:
    """Dense multi-hot rows (float32) for the CSR sets selected by ``rows``."""
    impl = impl or _impl
    return impl.multi_hot(
        np.ascontiguousarray(indptr, dtype=np.int64),
        np.ascontiguousarray(indices, dtype=np.int64),
        np.ascontiguousarray(rows, dtype=np.int64),
        int(width),
    )
