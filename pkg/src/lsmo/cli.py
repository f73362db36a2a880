"""Command-line entry point: ``lsmo --mode <mode> [--config file] [--seed N ...]``.

Modes
-----
toy-train      train on a toy function, save checkpoints, curves and z-grid scores
toy-eval       score saved toy checkpoints on the z grid
cem            cross-entropy baseline on a toy function
plan-train     fit a trajectory manifold on a world
plan-sample    decode saved planning checkpoints on the z grid
plan-finetune  decode, fine-tune with CHOMP, and compare with prior-sample starts
plot           heatmap, trajectory fan or training curves as SVG

Exit codes: 0 success, 1 configuration error, 2 numeric or training error.
Every output file except ``timing.csv`` is a deterministic function of the
config and seeds.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import checkpoint, plots
from .cem import CemConfig, cem_optimize
from .errors import CheckpointError, NumericError, TrainingError
from .manifold import TrainConfig, sample_manifold, train, z_grid
from .objective import toy_objective
from .planning import (
    ChompConfig,
    CostConfig,
    PriorConfig,
    Trajectory,
    closest_approach_side,
    collision_free,
    decode_trajectories,
    fine_tune,
    load_worlds,
    plan_with_manifold,
    trajectory_cost,
)
from .proposal import BoxUniform, build_prior

log = logging.getLogger("lsmo")

MODES = ("toy-train", "toy-eval", "cem", "plan-train", "plan-sample", "plan-finetune", "plot")
TOY_GRID = (-1.28, 1.28, 200)
PLAN_GRID = (-1.28, 1.28, 7)
POOLING_NOTE = "# pooling: mean and std over all seeds x grid points together"


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    mode: str = "toy-train"
    toy: int = 2
    world: object = 1
    world_file: str | None = None
    seeds: list = field(default_factory=lambda: [0])
    out: str = "runs/out"
    checkpoint_dir: str | None = None
    z_grid: str | None = None
    threads: int = 1
    train: dict = field(default_factory=dict)
    cem: dict = field(default_factory=dict)
    chomp: dict = field(default_factory=dict)
    cost: dict = field(default_factory=dict)
    prior: dict = field(default_factory=dict)
    baseline_starts: int = 10
    plot: dict = field(default_factory=dict)

    def validate(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; expected one of {', '.join(MODES)}")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if any(not isinstance(s, int) or s < 0 for s in self.seeds):
            raise ConfigError("seeds must be non-negative integers")
        if self.toy not in (1, 2, 3, 4):
            raise ConfigError(f"toy must be 1..4, got {self.toy!r}")
        if self.threads < 1:
            raise ConfigError("threads must be at least 1")
        if self.world_file is not None and not Path(self.world_file).is_file():
            raise ConfigError(f"world file {self.world_file} does not exist")
        if self.z_grid is not None:
            parse_z_grid(self.z_grid)
        return self

    @property
    def is_planning(self):
        return self.mode.startswith("plan") or self.plot.get("kind") == "trajectories"

    def grid(self):
        if self.z_grid is not None:
            return parse_z_grid(self.z_grid)
        return PLAN_GRID if self.is_planning else TOY_GRID

    def ckpt_dir(self):
        return Path(self.checkpoint_dir or self.out)

    def train_config(self, seed):
        kw = dict(self.train, seed=seed, threads=self.threads)
        try:
            if self.is_planning:
                return TrainConfig.planning(**kw)
            return TrainConfig.toy(**kw)
        except TypeError as exc:
            raise ConfigError(f"train block: {exc}") from exc

    def cem_config(self, seed):
        try:
            return CemConfig(**dict(self.cem, seed=seed))
        except TypeError as exc:
            raise ConfigError(f"cem block: {exc}") from exc

    def _block(self, cls, name):
        try:
            return cls(**getattr(self, name))
        except TypeError as exc:
            raise ConfigError(f"{name} block: {exc}") from exc

    def load_world(self):
        worlds = load_worlds(self.world_file)
        names = list(worlds)
        if isinstance(self.world, int):
            if not 1 <= self.world <= len(names):
                raise ConfigError(f"world index {self.world} out of range 1..{len(names)}")
            return worlds[names[self.world - 1]]
        if self.world not in worlds:
            raise ConfigError(f"unknown world {self.world!r}; available: {', '.join(names)}")
        return worlds[self.world]


def parse_z_grid(text):
    try:
        lo, hi, count = text.split(":")
        lo, hi, count = float(lo), float(hi), int(count)
    except ValueError as exc:
        raise ConfigError(f"--z-grid expects lo:hi:count, got {text!r}") from exc
    if count < 1 or (count > 1 and not hi > lo):
        raise ConfigError(f"--z-grid needs count >= 1 and hi > lo, got {text!r}")
    return lo, hi, count


def load_config(path, overrides) -> ExperimentConfig:
    doc = {}
    if path is not None:
        try:
            doc = json.loads(Path(path).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError(f"config {path} must be a JSON object")
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    doc.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig(**doc).validate()


# ---------------------------------------------------------------- output helpers

def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, header, rows, comment=None):
    with open(path, "w", newline="") as fh:
        if comment:
            fh.write(comment + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def write_summary(path, values, extra=()):
    vals = np.asarray(values, dtype=float)
    header = ["mean", "std", "n", *[k for k, _ in extra]]
    row = [float(vals.mean()), float(vals.std()), len(vals), *[v for _, v in extra]]
    write_csv(path, header, [row], POOLING_NOTE)


def write_curves(path, report):
    L = len(report.kl[0]) if report.kl else 0
    rows = [(e, report.loss[e], report.capacity[e], *report.kl[e]) for e in range(len(report.loss))]
    write_csv(path, ["epoch", "loss", "capacity", *[f"kl{k}" for k in range(L)]], rows)


def read_curves(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ConfigError(f"{path} has no curve rows")
    loss = [float(r["loss"]) for r in rows]
    cap = [float(r["capacity"]) for r in rows]
    kl = [[float(r[k]) for k in r if k.startswith("kl")] for r in rows]
    return loss, kl, cap


def write_trajectory(path, traj):
    full = traj.full()
    write_csv(path, ["t", *[f"q{j}" for j in range(full.shape[1])]],
              [(t, *row) for t, row in enumerate(full)])


class Timer:
    def __init__(self):
        self.rows = []

    def record(self, seed, stage, seconds):
        self.rows.append((seed, stage, round(seconds, 3)))

    def write(self, out):
        write_csv(out / "timing.csv", ["seed", "stage", "seconds"], self.rows)


def _ckpt_path(directory, seed):
    return Path(directory) / f"model-seed{seed}.json"


def _load_ckpt(cfg, seed):
    path = _ckpt_path(cfg.ckpt_dir(), seed)
    if not path.is_file():
        raise ConfigError(f"checkpoint {path} does not exist")
    return checkpoint.load_model(path)[0]


def _z_rows(model, lo, hi, count):
    return z_grid(model.latent_dim, count, lo, hi)


# ---------------------------------------------------------------- modes

def _toy_metrics(cfg, out, models):
    lo, hi, count = cfg.grid()
    obj = toy_objective(cfg.toy)
    rows, pooled = [], []
    L = 1
    for seed, model in models:
        L = model.latent_dim
        z = _z_rows(model, lo, hi, count)
        pts = sample_manifold(model, z)
        scores = obj.evaluate(pts)
        pooled.extend(scores)
        rows.extend((seed, i, *z[i], *pts[i], scores[i]) for i in range(len(z)))
    write_csv(out / "metrics.csv", ["seed", "index", *[f"z{k}" for k in range(L)], "x1", "x2", "score"], rows)
    write_summary(out / "summary.csv", pooled)
    return float(np.mean(pooled))


def run_toy_train(cfg, out, timer):
    obj = toy_objective(cfg.toy)
    models = []
    for seed in cfg.seeds:
        tc = cfg.train_config(seed)
        t0 = time.perf_counter()
        model, report = train(obj, BoxUniform(obj.bounds), tc)
        timer.record(seed, "train", time.perf_counter() - t0)
        checkpoint.save_model(_ckpt_path(out, seed), model, tc.to_dict(), seed)
        write_curves(out / f"curves-seed{seed}.csv", report)
        models.append((seed, model))
        log.info("seed %d trained (ESS %.1f)", seed, report.ess)
    mean = _toy_metrics(cfg, out, models)
    log.info("pooled mean score %.4f", mean)


def run_toy_eval(cfg, out, timer):
    models = [(s, _load_ckpt(cfg, s)) for s in cfg.seeds]
    t0 = time.perf_counter()
    mean = _toy_metrics(cfg, out, models)
    timer.record("all", "evaluate", time.perf_counter() - t0)
    log.info("pooled mean score %.4f", mean)


def run_cem(cfg, out, timer):
    obj = toy_objective(cfg.toy)
    rows, hist, best, comp_mean = [], [], [], []
    for seed in cfg.seeds:
        t0 = time.perf_counter()
        res = cem_optimize(obj, cfg.cem_config(seed))
        timer.record(seed, "cem", time.perf_counter() - t0)
        rows.extend((seed, k, *res.means[k], res.scores[k]) for k in range(len(res.scores)))
        hist.extend((seed, h["iteration"], h["elite_threshold"], h["best"], h["population_mean"])
                    for h in res.history)
        best.append(res.best_score)
        comp_mean.append(res.mean_score)
    write_csv(out / "metrics.csv", ["seed", "component", "x1", "x2", "score"], rows)
    write_csv(out / "history.csv", ["seed", "iteration", "elite_threshold", "best", "population_mean"], hist)
    # the headline statistic is the best component per seed
    write_summary(out / "summary.csv", best,
                  extra=[("all_components_mean", float(np.mean(comp_mean)))])
    log.info("best-component score %.6f", float(np.mean(best)))


def _plan_rows(cfg, world, seed, model, z):
    trajs = decode_trajectories(model, world, z)
    cost_cfg = cfg._block(CostConfig, "cost")
    rows = []
    for i, t in enumerate(trajs):
        c_obs, c_s, total = trajectory_cost(world, t, cost_cfg)
        rows.append((seed, i, *z[i], int(collision_free(world, t)), closest_approach_side(world, t)
                     if len(world.radii) else 0, c_obs, c_s, total))
    return trajs, rows


PLAN_HEADER_TAIL = ["collision_free", "side", "c_obs", "c_smooth", "cost"]


def run_plan_train(cfg, out, timer):
    world = cfg.load_world()
    prior_cfg = cfg._block(PriorConfig, "prior")
    cost_cfg = cfg._block(CostConfig, "cost")
    lo, hi, count = cfg.grid()
    rows, L = [], 1
    for seed in cfg.seeds:
        tc = cfg.train_config(seed)
        t0 = time.perf_counter()
        model, report, _ = plan_with_manifold(world, tc, prior_cfg, cost_cfg)
        timer.record(seed, "train", time.perf_counter() - t0)
        checkpoint.save_model(_ckpt_path(out, seed), model, tc.to_dict(), seed)
        write_curves(out / f"curves-seed{seed}.csv", report)
        L = model.latent_dim
        rows.extend(_plan_rows(cfg, world, seed, model, _z_rows(model, lo, hi, count))[1])
    write_csv(out / "metrics.csv", ["seed", "index", *[f"z{k}" for k in range(L)], *PLAN_HEADER_TAIL], rows)
    write_summary(out / "summary.csv", [r[-1] for r in rows],
                  extra=[("collision_free_rate", float(np.mean([r[2 + L] for r in rows])))])


def run_plan_sample(cfg, out, timer):
    world = cfg.load_world()
    lo, hi, count = cfg.grid()
    rows, L = [], 1
    for seed in cfg.seeds:
        model = _load_ckpt(cfg, seed)
        L = model.latent_dim
        trajs, r = _plan_rows(cfg, world, seed, model, _z_rows(model, lo, hi, count))
        for i, t in enumerate(trajs):
            write_trajectory(out / f"trajectory-seed{seed}-{i}.csv", t)
        rows.extend(r)
    write_csv(out / "samples.csv", ["seed", "index", *[f"z{k}" for k in range(L)], *PLAN_HEADER_TAIL], rows)


def run_plan_finetune(cfg, out, timer):
    world = cfg.load_world()
    lo, hi, count = cfg.grid()
    cost_cfg = cfg._block(CostConfig, "cost")
    chomp_cfg = cfg._block(ChompConfig, "chomp")
    prior_cfg = cfg._block(PriorConfig, "prior")
    rows = []
    for seed in cfg.seeds:
        model = _load_ckpt(cfg, seed)
        starts = [("manifold", i, t) for i, t in
                  enumerate(decode_trajectories(model, world, _z_rows(model, lo, hi, count)))]
        T = model.input_dim // world.D
        line = Trajectory.straight(world.start, world.goal, T, world.dt)
        prior = build_prior(T, world.D, prior_cfg.a, line.flat())
        if cfg.baseline_starts > 0:
            flats = prior.sample(cfg.baseline_starts, np.random.SeedSequence([seed, 1]))
            starts += [("prior", i, Trajectory.from_flat(f, world.start, world.goal, world.dt))
                       for i, f in enumerate(flats)]
        t0 = time.perf_counter()
        for source, i, t in starts:
            res = fine_tune(world, t, cost_cfg, chomp_cfg)
            if source == "manifold":
                write_trajectory(out / f"finetuned-seed{seed}-{i}.csv", res.trajectory)
            rows.append((seed, source, i, res.iterations, int(res.converged),
                         trajectory_cost(world, t, cost_cfg)[2], res.cost,
                         int(collision_free(world, t)), int(collision_free(world, res.trajectory))))
        timer.record(seed, "finetune", time.perf_counter() - t0)
    write_csv(out / "finetune.csv", ["seed", "source", "index", "iterations", "converged", "cost_before",
                                     "cost_after", "collision_free_before", "collision_free_after"], rows)
    summary = []
    for source in ("manifold", "prior"):
        its = [r[3] for r in rows if r[1] == source]
        if its:
            summary.append((source, float(np.median(its)), float(np.mean(its)), len(its),
                            float(np.mean([r[8] for r in rows if r[1] == source]))))
    write_csv(out / "summary.csv", ["source", "median_iterations", "mean_iterations", "n",
                                    "collision_free_after"], summary)


def run_plot(cfg, out, timer):
    opts = dict(cfg.plot)
    kind = opts.pop("kind", None)
    if kind not in plots.KINDS:
        raise ConfigError(f"plot.kind must be one of {', '.join(plots.KINDS)}, got {kind!r}")
    lo, hi, count = cfg.grid()
    seed = cfg.seeds[0]
    path = out / opts.pop("file", f"{kind}.svg")
    if kind == "heatmap":
        obj = toy_objective(cfg.toy)
        pts = None
        if _ckpt_path(cfg.ckpt_dir(), seed).is_file():
            model = _load_ckpt(cfg, seed)
            pts = sample_manifold(model, _z_rows(model, lo, hi, count))
        plots.emit_plot(kind, path, func=obj.evaluate, points=pts, title=f"toy function {cfg.toy}")
    elif kind == "trajectories":
        world = cfg.load_world()
        model = _load_ckpt(cfg, seed)
        z = _z_rows(model, lo, hi, count)
        plots.emit_plot(kind, path, world=world, trajs=decode_trajectories(model, world, z),
                        z_values=z, title=world.name)
    else:
        src = opts.pop("curves", None) or cfg.ckpt_dir() / f"curves-seed{seed}.csv"
        if not Path(src).is_file():
            raise ConfigError(f"curves file {src} does not exist")
        loss, kl, cap = read_curves(src)
        plots.emit_plot(kind, path, loss=loss, kl=kl, capacity=cap)
    if opts:
        raise ConfigError(f"unknown plot options: {', '.join(sorted(opts))}")


RUNNERS = {
    "toy-train": run_toy_train,
    "toy-eval": run_toy_eval,
    "cem": run_cem,
    "plan-train": run_plan_train,
    "plan-sample": run_plan_sample,
    "plan-finetune": run_plan_finetune,
    "plot": run_plot,
}


def run(cfg: ExperimentConfig) -> int:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    timer = Timer()
    RUNNERS[cfg.mode](cfg, out, timer)
    if timer.rows:
        timer.write(out)
    return 0


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        # usage errors are configuration errors (exit 1), not argparse's default 2
        self.print_usage(sys.stderr)
        self.exit(1, f"lsmo: configuration error: {message}\n")


def _join_z_grid(argv):
    """Let ``--z-grid -1.28:1.28:7`` through despite the leading minus."""
    out = []
    it = iter(argv)
    for tok in it:
        if tok == "--z-grid":
            out.append(f"--z-grid={next(it, '')}")
        else:
            out.append(tok)
    return out


def build_parser():
    p = _Parser(prog="lsmo", description=__doc__.split("\n\n")[0])
    p.add_argument("--mode", choices=MODES)
    p.add_argument("--config", help="JSON experiment config")
    p.add_argument("--seed", type=int, action="append", dest="seeds", help="repeatable")
    p.add_argument("--out", help="output directory")
    p.add_argument("--threads", type=int)
    p.add_argument("--z-grid", dest="z_grid", help="lo:hi:count")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    args = build_parser().parse_args(_join_z_grid(argv))
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    overrides = {"mode": args.mode, "seeds": args.seeds, "out": args.out,
                 "threads": args.threads, "z_grid": args.z_grid}
    try:
        cfg = load_config(args.config, overrides)
        return run(cfg)
    except (ConfigError, CheckpointError, ValueError) as exc:
        print(f"lsmo: configuration error: {exc}", file=sys.stderr)
        return 1
    except (NumericError, TrainingError, FloatingPointError) as exc:
        print(f"lsmo: numeric error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
