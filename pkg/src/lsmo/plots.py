"""SVG figures: toy heatmaps, trajectory fans and training curves.

Every data-bearing artist carries a ``gid`` so the files can be checked
structurally (``trajectory-3``, ``manifold-points``, ``curve-loss``, ...).
Output is deterministic: the SVG hash salt is fixed and no date is written.
"""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.patches import Circle  # noqa: E402

KINDS = ("heatmap", "trajectories", "curves")

_RC = {"svg.hashsalt": "lsmo", "path.simplify": False, "svg.fonttype": "none"}


def _save(fig, path):
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def heatmap(path, func, bounds=((0.0, 2.0), (0.0, 2.0)), points=None, resolution=200, title=None):
    """Objective values on a grid as coloured cells, with optional manifold points on top."""
    (x0, x1), (y0, y1) = bounds
    xs = np.linspace(x0, x1, resolution)
    ys = np.linspace(y0, y1, resolution)
    gx, gy = np.meshgrid(xs, ys)
    vals = np.asarray(func(np.column_stack([gx.ravel(), gy.ravel()]))).reshape(gx.shape)
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(4.5, 4))
        im = ax.imshow(vals, origin="lower", extent=(x0, x1, y0, y1), aspect="auto", cmap="viridis")
        im.set_gid("heatmap")
        fig.colorbar(im, ax=ax)
        if points is not None and len(points):
            pts = np.asarray(points)
            sc = ax.scatter(pts[:, 0], pts[:, 1], s=12, facecolors="none", edgecolors="red")
            sc.set_gid("manifold-points")
        ax.set_xlabel("x1")
        ax.set_ylabel("x2")
        if title:
            ax.set_title(title)
        _save(fig, path)


def trajectories(path, world, trajs, z_values=None, title=None):
    """World view: obstacles, start and goal, and one polyline per trajectory coloured by ``z``."""
    n = len(trajs)
    z = np.arange(n, dtype=float) if z_values is None else np.asarray(z_values, dtype=float).reshape(n, -1)[:, 0]
    span = np.ptp(z) if n > 1 else 1.0
    colors = plt.get_cmap("coolwarm")((z - z.min()) / (span or 1.0))
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(5, 4))
        for k, (c, r) in enumerate(zip(world.centers, world.radii)):
            ax.add_patch(Circle(c, r, color="0.4", gid=f"obstacle-{k}"))
            ax.add_patch(Circle(c, r + world.eps, fill=False, ls=":", color="0.6"))
        for i, t in enumerate(trajs):
            full = t.full()
            (line,) = ax.plot(full[:, 0], full[:, 1], "-", color=colors[i], lw=1.2,
                              label=f"z={z[i]:.2f}")
            line.set_gid(f"trajectory-{i}")
        ax.plot(*world.start, "ks", gid="start")
        ax.plot(*world.goal, "k*", ms=10, gid="goal")
        (bx0, bx1), (by0, by1) = world.bounds
        ax.set_xlim(bx0, bx1)
        ax.set_ylim(by0, by1)
        ax.set_aspect("equal")
        if n <= 10:
            ax.legend(fontsize=7, loc="lower right")
        if title:
            ax.set_title(title)
        _save(fig, path)


def curves(path, loss, kl, capacity=None, title=None):
    """Per-epoch loss and per-channel KL, with the capacity schedule if given."""
    loss = np.asarray(loss, dtype=float)
    kl = np.asarray(kl, dtype=float).reshape(len(loss), -1)
    epochs = np.arange(len(loss))
    with plt.rc_context(_RC):
        fig, (a0, a1) = plt.subplots(1, 2, figsize=(8, 3.2))
        (ln,) = a0.plot(epochs, loss, color="k", lw=1)
        ln.set_gid("curve-loss")
        a0.set_xlabel("epoch")
        a0.set_ylabel("loss")
        for k in range(kl.shape[1]):
            (ln,) = a1.plot(epochs, kl[:, k], lw=1, label=f"KL z{k}")
            ln.set_gid(f"curve-kl-{k}")
        if capacity is not None:
            (ln,) = a1.plot(epochs, capacity, "--", color="0.5", lw=1, label="capacity")
            ln.set_gid("curve-capacity")
        a1.set_xlabel("epoch")
        a1.set_ylabel("KL (nats)")
        a1.legend(fontsize=7)
        if title:
            fig.suptitle(title)
        fig.tight_layout()
        _save(fig, path)


def emit_plot(kind, path, **inputs):
    """Dispatch to one of :data:`KINDS`."""
    funcs = {"heatmap": heatmap, "trajectories": trajectories, "curves": curves}
    if kind not in funcs:
        raise ValueError(f"unknown plot kind {kind!r}; expected one of {', '.join(KINDS)}")
    funcs[kind](path, **inputs)
