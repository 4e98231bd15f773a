"""Hot-loop kernels, compiled when available.

The Cython extension is used if it was built; setting ``DCFA_PURE_PYTHON=1``
forces the numpy fallback. ``BACKEND`` names the active implementation.
"""
import os

from . import _fallback

if os.environ.get("DCFA_PURE_PYTHON", "") not in ("", "0"):
    _impl = _fallback
    BACKEND = "python"
else:
    try:
        from . import _core as _impl

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _fallback
        BACKEND = "python"

knn_indices = _impl.knn_indices
update_samples = _impl.update_samples
scatter_add_rows = _impl.scatter_add_rows
sampled_dot = _impl.sampled_dot
sampled_dot_backward = _impl.sampled_dot_backward
attention_forward = _impl.attention_forward
attention_backward = _impl.attention_backward

__all__ = [
    "BACKEND", "attention_backward", "attention_forward", "knn_indices",
    "sampled_dot", "sampled_dot_backward", "scatter_add_rows", "update_samples",
]
