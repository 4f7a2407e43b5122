"""Hot inner loops of the tree booster, compiled when possible.

``BACKEND`` is ``"cython"`` when the compiled extension imported, otherwise
``"python"``. Setting ``GNNUPLIFT_PURE_PYTHON=1`` forces the numpy fallback.
Both backends evaluate the same floating-point operations in the same
order, so fitted models are bitwise identical across backends.
"""

import os

from gnnuplift._kernels import _pykernels

if os.environ.get("GNNUPLIFT_PURE_PYTHON", "") not in ("", "0"):
    _impl = _pykernels
    BACKEND = "python"
else:
    try:
        from gnnuplift._kernels import _ckernels as _impl
        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels
        BACKEND = "python"

best_split_sorted = _impl.best_split_sorted
predict_tree = _impl.predict_tree
candidate_ordinals = _pykernels.candidate_ordinals

__all__ = ["BACKEND", "best_split_sorted", "predict_tree", "candidate_ordinals"]
