"""Numpy implementations of the hot kernels.

These are the reference versions; ``_ckernels.pyx`` mirrors them loop by loop.
Paths are full sequences ``(..., T + 2, D)`` whose first and last rows are the
fixed start and goal.
"""
import numpy as np

_DEN1 = (0.09 + 1.0) ** 2
_DEN3 = (0.04 + 1.0) ** 2


def toy_eval(func_id, pts):
    x1 = pts[:, 0]
    x2 = pts[:, 1]
    if func_id == 1:
        d = np.where(
            x1 < 0.5,
            np.hypot(x2 - 1.05, x1 - 0.5),
            np.where(
                x1 < 1.5,
                np.abs(-0.3 * x1 - x2 + 1.2) / _DEN1,
                np.hypot(x2 - 0.75, x1 - 1.5),
            ),
        )
        return np.exp(-d)
    if func_id == 2:
        return np.exp(-np.abs((x2 - 1.5) ** 2 + (x1 + 1.0) ** 2 - 2.5) / 10.0)
    if func_id == 3:
        d = np.where(
            x1 < 0.7,
            np.hypot(x2 - 0.94, x1 - 0.7),
            np.where(
                x1 < 1.4,
                np.abs(0.2 * x1 - x2 + 0.8) / _DEN3,
                np.hypot(x2 - 1.08, x1 - 1.4),
            ),
        )
        return np.exp(-(d + 0.2 * x2 + 0.14))
    if func_id == 4:
        return np.exp(-np.abs((x2 - 1.0) ** 2 + (x1 - 1.0) ** 2 - 0.5) / 10.0)
    raise ValueError(f"unknown toy function {func_id}")


def local_cost(d, eps):
    d = np.asarray(d, dtype=float)
    return np.where(
        d > eps, 0.0, np.where(d >= 0.0, 0.5 * (eps - d) * ((eps - d) / eps), -d + 0.5 * eps)
    )


def local_cost_slope(d, eps):
    d = np.asarray(d, dtype=float)
    return np.where(d > eps, 0.0, np.where(d >= 0.0, (d - eps) / eps, -1.0))


def _nearest(points, centers, radii):
    """Signed distance and the offset to the active obstacle centre for each point."""
    if len(radii) == 0:
        shape = points.shape[:-1]
        return np.full(shape, np.inf), np.zeros(points.shape), np.zeros(shape)
    diff = points[..., None, :] - centers
    norms = np.sqrt(np.einsum("...kd,...kd->...k", diff, diff))
    sd = norms - radii
    k = np.argmin(sd, axis=-1)
    d = np.take_along_axis(sd, k[..., None], axis=-1)[..., 0]
    off = np.take_along_axis(diff, k[..., None, None], axis=-2)[..., 0, :]
    nrm = np.take_along_axis(norms, k[..., None], axis=-1)[..., 0]
    return d, off, nrm


def _accelerations(paths, dt):
    # ghost points continue the start->goal line one step beyond each endpoint
    n_int = paths.shape[-2] - 2
    step = (paths[..., -1, :] - paths[..., 0, :]) / (n_int + 1)
    lo = paths[..., :1, :] - step[..., None, :]
    hi = paths[..., -1:, :] + step[..., None, :]
    ext = np.concatenate([lo, paths, hi], axis=-2)
    return (ext[..., :-2, :] - 2.0 * ext[..., 1:-1, :] + ext[..., 2:, :]) / dt ** 2


def path_costs(paths, centers, radii, eps, dt):
    """Obstacle and smoothness costs for a batch of paths ``(N, T + 2, D)``."""
    paths = np.asarray(paths, dtype=float)
    interior = paths[:, 1:-1, :]
    vel = (paths[:, 2:, :] - paths[:, :-2, :]) / (2.0 * dt)
    speed = np.sqrt(np.einsum("ntd,ntd->nt", vel, vel))
    d, _, _ = _nearest(interior, centers, radii)
    c_obs = 0.5 * np.sum(local_cost(d, eps) * speed, axis=1)
    acc = _accelerations(paths, dt)
    c_smooth = np.einsum("ntd,ntd->n", acc, acc)
    return c_obs, c_smooth


def path_cost_grad(path, centers, radii, eps, dt, smooth_weight):
    """Costs of one path ``(T + 2, D)`` and the gradient of
    ``c_obs + smooth_weight * c_smooth`` with respect to its interior rows."""
    path = np.asarray(path, dtype=float)
    T = path.shape[0] - 2
    interior = path[1:-1]
    vel = (path[2:] - path[:-2]) / (2.0 * dt)
    speed = np.sqrt(np.einsum("td,td->t", vel, vel))
    d, off, nrm = _nearest(interior, centers, radii)
    c = local_cost(d, eps)
    slope = local_cost_slope(d, eps)
    c_obs = 0.5 * float(np.sum(c * speed))

    with np.errstate(invalid="ignore", divide="ignore"):
        grad_d = np.where(nrm[:, None] > 0.0, off / nrm[:, None], 0.0)
        vhat = np.where(speed[:, None] > 0.0, vel / speed[:, None], 0.0)
    grad = 0.5 * (slope * speed)[:, None] * grad_d
    # v_s depends on rows s - 1 and s + 1 of the interior
    flow = 0.5 * c[:, None] * vhat / (2.0 * dt)
    if T > 1:
        grad[1:] += flow[:-1]
        grad[:-1] -= flow[1:]

    acc = _accelerations(path, dt)
    c_smooth = float(np.einsum("td,td->", acc, acc))
    grad += smooth_weight * 2.0 * (acc[:-2] - 2.0 * acc[1:-1] + acc[2:]) / dt ** 2
    return c_obs, c_smooth, grad
