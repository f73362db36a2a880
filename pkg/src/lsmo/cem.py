"""Cross-entropy method with a diagonal Gaussian-mixture sampler."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import logsumexp

log = logging.getLogger(__name__)

VAR_FLOOR = 1e-6


@dataclass(eq=False)
class GaussianMixture:
    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    @property
    def k(self):
        return self.weights.shape[0]

    def component_log_prob(self, x):
        """``log w_k + log N(x; mu_k, diag var_k)`` as an ``(n, k)`` array."""
        x = np.atleast_2d(x)
        var = self.variances
        ll = -0.5 * (np.sum(np.log(2.0 * np.pi * var), axis=1)[None, :]
                     + np.sum((x[:, None, :] - self.means[None]) ** 2 / var[None], axis=2))
        with np.errstate(divide="ignore"):
            return ll + np.log(self.weights)[None, :]

    def log_prob(self, x):
        return logsumexp(self.component_log_prob(x), axis=1)

    def sample(self, n, rng):
        comp = rng.choice(self.k, size=n, p=self.weights)
        eps = rng.standard_normal((n, self.means.shape[1]))
        return self.means[comp] + np.sqrt(self.variances[comp]) * eps

    def is_valid(self):
        return (np.all(self.weights >= 0) and abs(self.weights.sum() - 1.0) < 1e-12
                and np.all(self.variances >= VAR_FLOOR))


def _kmeanspp(points, k, rng):
    n = len(points)
    centers = [points[rng.integers(n)]]
    d2 = np.sum((points - centers[0]) ** 2, axis=1)
    for _ in range(1, k):
        total = d2.sum()
        i = rng.integers(n) if total <= 0 else rng.choice(n, p=d2 / total)
        centers.append(points[i])
        d2 = np.minimum(d2, np.sum((points - points[i]) ** 2, axis=1))
    return np.array(centers)


def em_fit(points, k, iterations=20, seed=None, history=None) -> GaussianMixture:
    """Fit a diagonal GMM by EM from k-means++ seeds.

    Empty components are re-seeded at a random point.  If ``history`` is a
    list, the data log-likelihood after every iteration is appended to it.
    """
    x = np.asarray(points, dtype=float)
    n, dim = x.shape
    if n < k:
        raise ValueError(f"need at least k={k} points, got {n}")
    rng = np.random.default_rng(seed)
    spread = np.maximum(x.var(axis=0), VAR_FLOOR)
    gm = GaussianMixture(np.full(k, 1.0 / k), _kmeanspp(x, k, rng), np.tile(spread, (k, 1)))
    for _ in range(iterations):
        lp = gm.component_log_prob(x)
        resp = np.exp(lp - logsumexp(lp, axis=1, keepdims=True))
        nk = resp.sum(axis=0)
        means = np.empty_like(gm.means)
        variances = np.empty_like(gm.variances)
        for j in range(k):
            if nk[j] < 1e-10:
                i = rng.integers(n)
                log.info("EM: component %d emptied, re-seeding at point %d", j, i)
                means[j] = x[i]
                variances[j] = spread
                nk[j] = 1.0
                continue
            r = resp[:, j]
            means[j] = r @ x / nk[j]
            variances[j] = r @ (x - means[j]) ** 2 / nk[j]
        weights = nk / nk.sum()
        gm = GaussianMixture(weights / weights.sum(), means, np.maximum(variances, VAR_FLOOR))
        if history is not None:
            history.append(float(gm.log_prob(x).sum()))
    return gm


@dataclass
class CemConfig:
    k: int = 20
    population: int = 2000
    elite_fraction: float = 0.1
    iterations: int = 50
    em_iterations: int = 20
    seed: int = 0
    keep_elites: bool = True

    def __post_init__(self):
        if not 0 < self.elite_fraction < 1:
            raise ValueError("elite_fraction must lie in (0, 1)")
        if self.n_elite < self.k:
            raise ValueError("population * elite_fraction must be at least k")
        if self.iterations < 1 or self.em_iterations < 1:
            raise ValueError("iterations and em_iterations must be positive")

    @property
    def n_elite(self):
        return int(round(self.population * self.elite_fraction))

    def to_dict(self):
        return asdict(self)


@dataclass
class CemResult:
    means: np.ndarray
    scores: np.ndarray
    mixture: GaussianMixture
    history: list = field(default_factory=list)

    @property
    def best_score(self):
        return float(self.scores.max())

    @property
    def best_point(self):
        return self.means[int(np.argmax(self.scores))]

    @property
    def mean_score(self):
        return float(self.scores.mean())


def cem_optimize(objective, config: CemConfig = CemConfig()) -> CemResult:
    """Maximize ``objective`` over its box.

    The first population is uniform over the box; later ones come from the
    mixture refit to the previous elites, clipped to the box.  With
    ``keep_elites`` the previous elites compete in the next selection, so the
    elite threshold never decreases.
    """
    rng = np.random.default_rng(config.seed)
    lo, hi = objective.lower, objective.upper
    x = lo + rng.random((config.population, objective.dim)) * (hi - lo)
    history = []
    gm = None
    elite = elite_scores = None
    for it in range(config.iterations):
        if gm is not None:
            x = np.clip(gm.sample(config.population, rng), lo, hi)
        scores = objective.evaluate(x)
        pop_mean = float(scores.mean())
        if config.keep_elites and elite is not None:
            x = np.concatenate([elite, x])
            scores = np.concatenate([elite_scores, scores])
        order = np.argsort(-scores, kind="stable")[:config.n_elite]
        elite, elite_scores = x[order], scores[order]
        history.append({
            "iteration": it,
            "elite_threshold": float(elite_scores[-1]),
            "best": float(elite_scores[0]),
            "population_mean": pop_mean,
        })
        if np.all(elite == elite[0]):
            log.info("CEM: elite set collapsed at iteration %d", it)
            if gm is None:
                gm = GaussianMixture(np.ones(1), elite[:1].copy(), np.full((1, objective.dim), VAR_FLOOR))
            break
        gm = em_fit(elite, config.k, config.em_iterations, seed=rng)
    means = np.clip(gm.means, lo, hi)
    return CemResult(means=means, scores=objective.evaluate(means), mixture=gm, history=history)
