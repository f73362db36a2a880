"""2-D point-robot motion planning: costs, CHOMP projection and the manifold pipeline.

A trajectory holds a fixed start and goal plus ``T`` interior waypoints.  The
cost of a trajectory is

    C = 1/2 sum_t c(d(q_t)) ||dq_t/dt||  +  smooth_weight * sum_t ||q''_t||^2

where ``d`` is the signed distance to the nearest disc obstacle and ``c`` the
piecewise local collision cost with margin ``eps``.  Velocities are central
differences; accelerations use the ``(1, -2, 1)`` stencil with one ghost point
beyond each endpoint on the start-goal line, so a uniformly spaced straight
line has zero smoothness cost.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from functools import lru_cache
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from . import kernels
from .manifold import TrainConfig, sample_manifold, train, z_grid
from .objective import ObjectiveFn
from .proposal import build_fd_matrix, build_prior

WORLD_SCHEMA = "lsmo-world/1"


@dataclass(frozen=True, eq=False)
class World2D:
    centers: np.ndarray
    radii: np.ndarray
    eps: float = 0.2
    bounds: np.ndarray = field(default_factory=lambda: np.array([[-1.0, 2.0], [-1.5, 1.5]]))
    start: np.ndarray = field(default_factory=lambda: np.zeros(2))
    goal: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0]))
    dt: float = 1.0
    name: str = "world"

    def __post_init__(self):
        centers = np.asarray(self.centers, dtype=float).reshape(-1, 2)
        radii = np.asarray(self.radii, dtype=float).reshape(-1)
        if centers.shape[0] != radii.shape[0]:
            raise ValueError("one radius per obstacle centre required")
        if np.any(radii <= 0):
            raise ValueError("obstacle radii must be positive")
        if not self.eps > 0:
            raise ValueError("margin eps must be positive")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        for name, val in (("centers", np.ascontiguousarray(centers)), ("radii", radii),
                          ("bounds", np.asarray(self.bounds, dtype=float).reshape(2, 2)),
                          ("start", np.asarray(self.start, dtype=float).reshape(2)),
                          ("goal", np.asarray(self.goal, dtype=float).reshape(2))):
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    @property
    def D(self):
        return 2

    def to_dict(self):
        return {
            "name": self.name,
            "obstacles": [{"center": c.tolist(), "radius": float(r)}
                          for c, r in zip(self.centers, self.radii)],
            "margin": self.eps,
            "bounds": self.bounds.tolist(),
            "start": self.start.tolist(),
            "goal": self.goal.tolist(),
            "dt": self.dt,
        }

    @classmethod
    def from_dict(cls, d):
        obstacles = d.get("obstacles", [])
        return cls(
            centers=np.array([o["center"] for o in obstacles], dtype=float).reshape(-1, 2),
            radii=np.array([o["radius"] for o in obstacles], dtype=float),
            eps=float(d.get("margin", 0.2)),
            bounds=np.array(d["bounds"], dtype=float),
            start=np.array(d["start"], dtype=float),
            goal=np.array(d["goal"], dtype=float),
            dt=float(d.get("dt", 1.0)),
            name=str(d.get("name", "world")),
        )


def load_worlds(path=None) -> dict:
    """Read a world file; the bundled benchmark worlds when ``path`` is None."""
    if path is None:
        text = resources.files("lsmo").joinpath("data/benchmark_worlds.json").read_text()
        where = "benchmark_worlds.json"
    else:
        text = Path(path).read_text()
        where = str(path)
    doc = json.loads(text)
    if doc.get("schema") != WORLD_SCHEMA:
        raise ValueError(f"{where}: unsupported world schema {doc.get('schema')!r}")
    return {w["name"]: World2D.from_dict(w) for w in doc["worlds"]}


def benchmark_world(index: int) -> World2D:
    worlds = list(load_worlds().values())
    return worlds[index - 1]


@dataclass(frozen=True, eq=False)
class Trajectory:
    start: np.ndarray
    goal: np.ndarray
    interior: np.ndarray
    dt: float = 1.0

    def __post_init__(self):
        interior = np.array(self.interior, dtype=float, ndmin=2)
        start = np.asarray(self.start, dtype=float).reshape(-1)
        goal = np.asarray(self.goal, dtype=float).reshape(-1)
        if interior.shape[1] != start.shape[0] or goal.shape != start.shape:
            raise ValueError("start, goal and interior waypoints must share a dimension")
        for name, val in (("start", start), ("goal", goal), ("interior", interior)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    @property
    def T(self):
        return self.interior.shape[0]

    @property
    def D(self):
        return self.interior.shape[1]

    def full(self):
        """All ``T + 2`` waypoints, endpoints included."""
        return np.vstack([self.start, self.interior, self.goal])

    def flat(self):
        """Interior in per-DoF block layout."""
        return self.interior.T.reshape(-1)

    def with_interior(self, interior):
        return Trajectory(self.start, self.goal, interior, self.dt)

    @classmethod
    def from_flat(cls, flat, start, goal, dt=1.0):
        start = np.asarray(start, dtype=float)
        D = start.shape[0]
        interior = np.asarray(flat, dtype=float).reshape(D, -1).T
        return cls(start, goal, interior, dt)

    @classmethod
    def straight(cls, start, goal, T, dt=1.0):
        start = np.asarray(start, dtype=float)
        goal = np.asarray(goal, dtype=float)
        s = np.arange(1, T + 1)[:, None] / (T + 1)
        return cls(start, goal, start + s * (goal - start), dt)


@dataclass(frozen=True)
class CostConfig:
    smooth_weight: float = 1e-3

    def __post_init__(self):
        if self.smooth_weight < 0:
            raise ValueError("smooth_weight must be non-negative")


@dataclass(frozen=True)
class ChompConfig:
    """CHOMP step size ``1/eta``, iteration cap and stationarity tolerance.

    With ``adaptive`` a step that raises the cost is rejected and ``eta``
    doubles; accepted steps relax ``eta`` back towards its base value.
    """

    eta: float = 1e4
    max_iters: int = 2000
    tol: float = 1e-4
    adaptive: bool = True

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError("eta must be positive")
        if self.max_iters < 0 or not self.tol > 0:
            raise ValueError("max_iters must be non-negative and tol positive")


def signed_distance(world: World2D, p):
    """Distance from ``p`` to the nearest obstacle surface; negative inside."""
    p = np.asarray(p, dtype=float)
    if len(world.radii) == 0:
        return np.full(p.shape[:-1], np.inf) if p.ndim > 1 else float("inf")
    diff = p[..., None, :] - world.centers
    d = np.min(np.sqrt(np.sum(diff * diff, axis=-1)) - world.radii, axis=-1)
    return float(d) if p.ndim == 1 else d


def local_collision_cost(d, eps):
    out = kernels.local_cost(d, eps)
    return float(out) if np.ndim(out) == 0 else out


def _check(world, traj):
    if traj.D != world.D:
        raise ValueError(f"trajectory has {traj.D} DoF, world expects {world.D}")


def trajectory_cost(world: World2D, traj: Trajectory, cfg: CostConfig = CostConfig()):
    """Return ``(c_obs, c_smooth, total)``."""
    _check(world, traj)
    c_obs, c_smooth = kernels.path_costs(np.ascontiguousarray(traj.full()[None]),
                                         world.centers, world.radii, world.eps, traj.dt)
    c_obs, c_smooth = float(c_obs[0]), float(c_smooth[0])
    return c_obs, c_smooth, c_obs + cfg.smooth_weight * c_smooth


def cost_gradient(world: World2D, traj: Trajectory, cfg: CostConfig = CostConfig()):
    """Gradient of the total cost with respect to the interior waypoints, ``(T, D)``."""
    _check(world, traj)
    _, _, g = kernels.path_cost_grad(np.ascontiguousarray(traj.full()), world.centers,
                                     world.radii, world.eps, traj.dt, cfg.smooth_weight)
    return g


@lru_cache(maxsize=16)
def _metric_factor(T):
    K = build_fd_matrix(T)
    try:
        return cho_factor(K.T @ K, lower=True)
    except np.linalg.LinAlgError as exc:
        raise RuntimeError("CHOMP metric is not positive definite") from exc


def chomp_step(grad, eta):
    """Covariant step ``A^{-1} g / eta`` for each DoF column of ``grad``."""
    grad = np.asarray(grad, dtype=float)
    return cho_solve(_metric_factor(grad.shape[0]), grad / eta)


def chomp_update(traj: Trajectory, grad, cfg: ChompConfig = ChompConfig()) -> Trajectory:
    """One CHOMP step: minimize the linearized cost plus ``eta/2 ||.||_A^2``."""
    return traj.with_interior(traj.interior - chomp_step(grad, cfg.eta))


@dataclass
class FineTuneResult:
    trajectory: Trajectory
    iterations: int
    cost: float
    converged: bool
    costs: list  # cost after every accepted step, starting cost first
    rejected: int = 0


def fine_tune(world: World2D, traj: Trajectory, cost_cfg: CostConfig = CostConfig(),
              chomp_cfg: ChompConfig = ChompConfig()) -> FineTuneResult:
    """Iterate CHOMP until the base-``eta`` step moves no waypoint by ``tol`` or more.

    ``iterations`` counts every gradient evaluation after the first, rejected
    trials included.  Without convergence the lowest-cost iterate is returned
    with ``converged=False``.
    """
    _check(world, traj)
    full = np.ascontiguousarray(traj.full())
    args = (world.centers, world.radii, world.eps, traj.dt, cost_cfg.smooth_weight)
    sw = cost_cfg.smooth_weight
    c_obs, c_s, g = kernels.path_cost_grad(full, *args)
    cost = c_obs + sw * c_s
    costs = [cost]
    best = (cost, full[1:-1].copy())
    eta = chomp_cfg.eta
    converged = False
    it = rejected = 0
    while True:
        if np.max(np.abs(chomp_step(g, chomp_cfg.eta))) < chomp_cfg.tol:
            converged = True
            break
        if it >= chomp_cfg.max_iters:
            break
        trial = full.copy()
        trial[1:-1] -= chomp_step(g, eta)
        it += 1
        t_obs, t_s, t_g = kernels.path_cost_grad(trial, *args)
        t_cost = t_obs + sw * t_s
        if chomp_cfg.adaptive and t_cost > cost:
            rejected += 1
            eta *= 2.0
            continue
        full, cost, g = trial, t_cost, t_g
        costs.append(cost)
        if chomp_cfg.adaptive:
            eta = max(chomp_cfg.eta, 0.5 * eta)
        if cost <= best[0]:
            best = (cost, full[1:-1].copy())
    if converged:
        out, final = traj.with_interior(full[1:-1].copy()), cost
    else:
        out, final = traj.with_interior(best[1]), best[0]
    return FineTuneResult(out, it, final, converged, costs, rejected)


def collision_free(world: World2D, traj: Trajectory, substeps: int = 10) -> bool:
    """True when every waypoint and ``substeps`` points per segment are outside all obstacles."""
    if len(world.radii) == 0:
        return True
    full = traj.full()
    s = np.linspace(0.0, 1.0, substeps + 2)[:-1]
    seg = full[:-1, None, :] + s[None, :, None] * (full[1:, None, :] - full[:-1, None, :])
    pts = np.vstack([seg.reshape(-1, full.shape[1]), full[-1:]])
    return bool(np.all(signed_distance(world, pts) > 0.0))


def plan_objective(world: World2D, T: int, cost_cfg: CostConfig = CostConfig()) -> ObjectiveFn:
    """``R(xi) = -C(xi)`` over flattened interior waypoints."""
    D = world.D
    start, goal = world.start, world.goal

    def func(flat):
        flat = np.asarray(flat, dtype=float)
        n = flat.shape[0]
        paths = np.empty((n, T + 2, D))
        paths[:, 0] = start
        paths[:, -1] = goal
        paths[:, 1:-1] = flat.reshape(n, D, T).transpose(0, 2, 1)
        c_obs, c_s = kernels.path_costs(paths, world.centers, world.radii, world.eps, world.dt)
        return -(c_obs + cost_cfg.smooth_weight * c_s)

    bounds = np.repeat(world.bounds, T, axis=0)
    return ObjectiveFn(dim=T * D, bounds=bounds, func=func, name=f"plan:{world.name}")


@dataclass(frozen=True)
class PriorConfig:
    T: int = 50
    a: float = 0.09


def plan_with_manifold(world: World2D, train_cfg: TrainConfig | None = None,
                       prior_cfg: PriorConfig = PriorConfig(),
                       cost_cfg: CostConfig = CostConfig()):
    """Fit a manifold of trajectories from ``world.start`` to ``world.goal``.

    The proposal is the smoothness prior centred on the straight line; the
    model decodes flattened interior waypoints.  Returns ``(model, report, prior)``.
    """
    train_cfg = train_cfg or TrainConfig.planning()
    line = Trajectory.straight(world.start, world.goal, prior_cfg.T, world.dt)
    prior = build_prior(prior_cfg.T, world.D, prior_cfg.a, line.flat())
    objective = plan_objective(world, prior_cfg.T, cost_cfg)
    model, report = train(objective, prior, train_cfg, offset=line.flat())
    return model, report, prior


def decode_trajectories(model, world: World2D, z_values):
    flats = sample_manifold(model, z_values)
    return [Trajectory.from_flat(f, world.start, world.goal, world.dt) for f in flats]


def plan_z_grid(latent_dim=1, count=7, lo=-1.28, hi=1.28):
    return z_grid(latent_dim, count, lo, hi)


def closest_approach_side(world: World2D, traj: Trajectory, obstacle: int = 0) -> int:
    """Which side of the start-goal line the trajectory passes obstacle ``obstacle``.

    Sign of the cross product between the start-goal direction and the offset
    of the waypoint nearest to the obstacle centre from that centre.
    """
    full = traj.full()
    c = world.centers[obstacle]
    i = int(np.argmin(np.sum((full - c) ** 2, axis=1)))
    u = world.goal - world.start
    off = full[i] - c
    return int(np.sign(u[0] * off[1] - u[1] * off[0]))


def with_dt(traj: Trajectory, dt: float) -> Trajectory:
    return replace(traj, dt=dt)
