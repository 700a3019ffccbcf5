"""Backend selection for the hot DPSGD kernel.

The compiled extension is used when it imports; otherwise the numpy fallback.
Set ``ADAPTIVE_DPFL_PURE_PYTHON=1`` to force the fallback.
"""

from __future__ import annotations

import os

import numpy as np

from . import _kernels_py
from .model import MLP, ModelSpec

_FORCE_PURE = os.environ.get("ADAPTIVE_DPFL_PURE_PYTHON", "") not in ("", "0")

try:
    if _FORCE_PURE:
        raise ImportError("pure-Python backend forced by environment")
    from . import _kernels as _compiled
except ImportError:
    _compiled = None

BACKENDS = {"python": _kernels_py}
if _compiled is not None:
    BACKENDS["compiled"] = _compiled
BACKEND = "compiled" if _compiled is not None else "python"


def clipped_grad_sum(spec: ModelSpec, params, features, labels, clip_bound: float,
                     backend: str | None = None) -> np.ndarray:
    """Sum of per-sample gradients, each clipped to L2 norm ``clip_bound``."""
    impl = BACKENDS[backend or BACKEND]
    return impl.clipped_grad_sum(
        1 if spec.kind == MLP else 0,
        np.ascontiguousarray(params, dtype=np.float64),
        np.ascontiguousarray(features, dtype=np.float64).reshape(-1, spec.num_features),
        np.ascontiguousarray(labels, dtype=np.int64),
        spec.num_classes,
        spec.hidden_width,
        float(clip_bound),
    )
