"""Hot inner loops: toy-function batches and trajectory cost/gradient.

The compiled extension is used when it was built and ``LSMO_PURE_PYTHON`` is
unset; otherwise the numpy versions in ``_pykernels`` are used.  ``BACKEND``
names the active implementation.
"""
import os

import numpy as np

from . import _pykernels

try:
    if os.environ.get("LSMO_PURE_PYTHON"):
        raise ImportError("pure-python kernels requested")
    from . import _ckernels as _impl
    BACKEND = "cython"
except ImportError:
    _impl = _pykernels
    BACKEND = "python"


def available_backends():
    """Mapping of backend name to module, for benchmarks and cross-checks."""
    out = {"python": _pykernels}
    try:
        from . import _ckernels
    except ImportError:
        pass
    else:
        out["cython"] = _ckernels
    return out


def _c(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def toy_eval(func_id, pts):
    return _impl.toy_eval(int(func_id), _c(pts))


def path_costs(paths, centers, radii, eps, dt):
    """``(c_obs, c_smooth)`` for a stack of full paths ``(N, T + 2, D)``."""
    return _impl.path_costs(_c(paths), _c(centers).reshape(-1, np.shape(paths)[-1]), _c(radii),
                            float(eps), float(dt))


def path_cost_grad(path, centers, radii, eps, dt, smooth_weight):
    """``(c_obs, c_smooth, grad)`` for one full path; ``grad`` covers interior rows."""
    return _impl.path_cost_grad(_c(path), _c(centers).reshape(-1, np.shape(path)[-1]), _c(radii),
                                float(eps), float(dt), float(smooth_weight))


local_cost = _pykernels.local_cost
local_cost_slope = _pykernels.local_cost_slope

__all__ = [
    "BACKEND",
    "available_backends",
    "local_cost",
    "local_cost_slope",
    "path_cost_grad",
    "path_costs",
    "toy_eval",
]
