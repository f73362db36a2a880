"""Objective functions, the four 2-D toy landscapes and the batch shaping function."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import kernels

TOY_BOUNDS = ((0.0, 2.0), (0.0, 2.0))


class DegenerateBatchWarning(UserWarning):
    """All raw scores in a batch were identical."""


@dataclass(frozen=True)
class ObjectiveFn:
    """A scalar objective ``R(x)`` to be maximized over a box.

    ``func`` must accept an ``(n, dim)`` array and return ``n`` scores.
    Calling the objective with a single vector returns a float.
    """

    dim: int
    bounds: np.ndarray
    func: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    name: str = "objective"

    def __post_init__(self):
        bounds = np.asarray(self.bounds, dtype=float).reshape(-1, 2)
        if self.dim < 1:
            raise ValueError(f"dim must be positive, got {self.dim}")
        if bounds.shape[0] != self.dim:
            raise ValueError(f"expected {self.dim} bound pairs, got {bounds.shape[0]}")
        if np.any(bounds[:, 0] >= bounds[:, 1]):
            raise ValueError("every bound must satisfy lo < hi")
        bounds.setflags(write=False)
        object.__setattr__(self, "bounds", bounds)

    @property
    def lower(self) -> np.ndarray:
        return self.bounds[:, 0]

    @property
    def upper(self) -> np.ndarray:
        return self.bounds[:, 1]

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            return float(self.evaluate(x[None, :])[0])
        return self.evaluate(x)

    def evaluate(self, points: np.ndarray, threads: int = 1) -> np.ndarray:
        """Evaluate a batch, optionally fanning chunks out to worker threads.

        Results are always returned in input order.
        """
        points = np.ascontiguousarray(points, dtype=float)
        if points.ndim != 2 or points.shape[1] != self.dim:
            raise ValueError(f"expected shape (n, {self.dim}), got {points.shape}")
        if threads <= 1 or len(points) < 2 * threads:
            return np.asarray(self.func(points), dtype=float)
        from concurrent.futures import ThreadPoolExecutor

        chunks = np.array_split(points, threads)
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(self.func, chunks))
        return np.concatenate([np.asarray(p, dtype=float) for p in parts])


def eval_toy(func_id: int, x) -> np.ndarray | float:
    """Evaluate toy function ``func_id`` (1-4) at ``x``.

    ``x`` may be a single 2-vector or an ``(n, 2)`` array.
    """
    if func_id not in (1, 2, 3, 4):
        raise ValueError(f"func_id must be one of 1, 2, 3, 4; got {func_id!r}")
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    pts = np.ascontiguousarray(np.atleast_2d(x))
    if pts.shape[1] != 2:
        raise ValueError(f"toy functions take 2-vectors, got width {pts.shape[1]}")
    out = kernels.toy_eval(int(func_id), pts)
    return float(out[0]) if single else out


def toy_objective(func_id: int) -> ObjectiveFn:
    if func_id not in (1, 2, 3, 4):
        raise ValueError(f"func_id must be one of 1, 2, 3, 4; got {func_id!r}")

    def func(points):
        return kernels.toy_eval(func_id, np.ascontiguousarray(points, dtype=float))

    return ObjectiveFn(dim=2, bounds=np.array(TOY_BOUNDS), func=func, name=f"toy{func_id}")


@dataclass(frozen=True)
class ShapingConfig:
    alpha: float = 10.0

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"shaping alpha must be positive, got {self.alpha}")


def shape_scores(raw, cfg: ShapingConfig | float = ShapingConfig()) -> np.ndarray:
    """Exponential batch-relative shaping ``exp(alpha (R - Rmax) / (Rmax - Rmin))``.

    A constant batch has no spread to normalize by; every sample then gets
    weight one and a :class:`DegenerateBatchWarning` is emitted.
    """
    alpha = cfg.alpha if isinstance(cfg, ShapingConfig) else ShapingConfig(float(cfg)).alpha
    raw = np.asarray(raw, dtype=float)
    if raw.ndim != 1 or raw.size < 2:
        raise ValueError("shape_scores needs a 1-D batch of at least two scores")
    if not np.all(np.isfinite(raw)):
        raise ValueError("raw scores must be finite")
    hi = raw.max()
    lo = raw.min()
    if hi == lo:
        warnings.warn("degenerate batch: all raw scores are equal", DegenerateBatchWarning, stacklevel=2)
        return np.ones_like(raw)
    return np.exp(alpha * ((raw - hi) / (hi - lo)))


def grid_max(func_id: int, resolution: int = 2001):
    """Brute-force maximum of a toy function on a ``resolution``-square grid over [0, 2]^2."""
    if resolution < 100:
        raise ValueError("resolution must be at least 100")
    axis = np.linspace(0.0, 2.0, resolution)
    best_val = -np.inf
    best_pt = None
    # row blocks keep memory bounded at large resolutions
    for start in range(0, resolution, 256):
        x1 = axis[start:start + 256]
        g1, g2 = np.meshgrid(x1, axis, indexing="ij")
        pts = np.column_stack([g1.ravel(), g2.ravel()])
        vals = eval_toy(func_id, pts)
        i = int(np.argmax(vals))
        if vals[i] > best_val:
            best_val = float(vals[i])
            best_pt = pts[i].copy()
    return best_pt, best_val
