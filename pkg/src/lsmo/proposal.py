"""Proposal distributions and importance weights.

Every proposal exposes ``dim``, ``sample(n, seed)`` and ``log_density(x)``.
Log-densities are only defined up to a proposal-wide additive constant; the
weights below are normalized to mean one, so such constants never matter.

Trajectory vectors are laid out in per-DoF blocks: ``xi[d * T + t]`` is the
``t``-th interior waypoint of degree of freedom ``d``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import DegenerateBatchError


def _rng(seed):
    return np.random.default_rng(seed)


def _as_batch(x, dim):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != dim:
        raise ValueError(f"expected points of dimension {dim}, got {x.shape[1]}")
    return x, single


@dataclass(frozen=True)
class BoxUniform:
    bounds: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.bounds, dtype=float).reshape(-1, 2)
        if np.any(b[:, 0] >= b[:, 1]):
            raise ValueError("every bound must satisfy lo < hi")
        object.__setattr__(self, "bounds", b)

    @property
    def dim(self):
        return self.bounds.shape[0]

    def sample(self, n, seed=None):
        u = _rng(seed).random((n, self.dim))
        lo, hi = self.bounds[:, 0], self.bounds[:, 1]
        return lo + u * (hi - lo)

    def log_density(self, x):
        x, single = _as_batch(x, self.dim)
        inside = np.all((x >= self.bounds[:, 0]) & (x <= self.bounds[:, 1]), axis=1)
        out = np.where(inside, 0.0, -np.inf)
        return float(out[0]) if single else out


@dataclass(frozen=True)
class DiagonalNormal:
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        std = np.broadcast_to(np.asarray(self.std, dtype=float), mean.shape).copy()
        if np.any(std <= 0):
            raise ValueError("std must be positive")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)

    @property
    def dim(self):
        return self.mean.shape[0]

    def sample(self, n, seed=None):
        return self.mean + self.std * _rng(seed).standard_normal((n, self.dim))

    def log_density(self, x):
        x, single = _as_batch(x, self.dim)
        out = -0.5 * np.sum(((x - self.mean) / self.std) ** 2, axis=1)
        return float(out[0]) if single else out


def build_fd_matrix(T: int) -> np.ndarray:
    """Second-difference matrix of shape ``(T + 2, T)``.

    Column ``j`` holds the stencil ``(1, -2, 1)`` in rows ``j .. j + 2``, i.e.
    the accelerations of the interior waypoints padded with zeros on both
    sides.  ``K.T @ K`` is then positive definite for every ``T``.
    """
    if int(T) != T or T < 1:
        raise ValueError(f"T must be a positive integer, got {T!r}")
    T = int(T)
    K = np.zeros((T + 2, T))
    j = np.arange(T)
    K[j, j] = 1.0
    K[j + 1, j] = -2.0
    K[j + 2, j] = 1.0
    return K


@dataclass(frozen=True, eq=False)
class TrajectoryPrior:
    """Gaussian over interior waypoints with covariance ``a * (I_D kron Rcov)``."""

    T: int
    D: int
    a: float
    xi0: np.ndarray
    K: np.ndarray
    A: np.ndarray
    Rcov: np.ndarray
    chol: np.ndarray
    precision: np.ndarray

    @property
    def dim(self):
        return self.T * self.D

    def sample(self, n, seed=None):
        eps = _rng(seed).standard_normal((n, self.D, self.T))
        dev = np.sqrt(self.a) * (eps @ self.chol.T)
        return self.xi0 + dev.reshape(n, self.dim)

    def log_density(self, x):
        x, single = _as_batch(x, self.dim)
        dev = (x - self.xi0).reshape(-1, self.D, self.T)
        q = np.einsum("ndt,ts,nds->n", dev, self.precision, dev)
        out = -q / (2.0 * self.a)
        return float(out[0]) if single else out

    def covariance(self):
        return self.a * np.kron(np.eye(self.D), self.Rcov)


def build_prior(T: int, D: int, a: float, xi0=None) -> TrajectoryPrior:
    """Trajectory prior around ``xi0`` (zeros if omitted).

    The covariance is the pseudo-inverse of ``K.T @ K`` rescaled to unit
    maximum diagonal, so ``a`` is the peak marginal variance.
    """
    if not a > 0:
        raise ValueError(f"prior scale a must be positive, got {a}")
    if D < 1:
        raise ValueError(f"D must be positive, got {D}")
    K = build_fd_matrix(T)
    A = K.T @ K
    R = np.linalg.pinv(A)
    R = 0.5 * (R + R.T)
    scale = R.diagonal().max()
    Rcov = R / scale
    try:
        chol = np.linalg.cholesky(Rcov)
    except np.linalg.LinAlgError as exc:
        raise RuntimeError("trajectory covariance is not positive definite") from exc
    xi0 = np.zeros(T * D) if xi0 is None else np.asarray(xi0, dtype=float).ravel()
    if xi0.shape != (T * D,):
        raise ValueError(f"xi0 must have length T*D = {T * D}, got {xi0.size}")
    for arr in (K, A, Rcov, chol, xi0):
        arr.setflags(write=False)
    precision = A * scale
    precision.setflags(write=False)
    return TrajectoryPrior(T=T, D=D, a=float(a), xi0=xi0, K=K, A=A, Rcov=Rcov,
                           chol=chol, precision=precision)


def sample(proposal, n: int, seed=None) -> np.ndarray:
    if n < 1:
        raise ValueError("n must be at least 1")
    return proposal.sample(n, seed)


def log_density(proposal, x):
    return proposal.log_density(x)


@dataclass(frozen=True, eq=False)
class WeightedBatch:
    points: np.ndarray
    raw: np.ndarray
    shaped: np.ndarray
    log_prop: np.ndarray
    weights: np.ndarray

    def __len__(self):
        return self.points.shape[0]

    @property
    def ess(self) -> float:
        """Kish effective sample size of the weights."""
        w = self.weights
        return float(w.sum() ** 2 / np.dot(w, w))


def compute_weights(raw, shaped, log_prop) -> np.ndarray:
    """Importance weights ``shaped / p_prop``, rescaled to mean one.

    Evaluated in log space with the largest log-weight subtracted first, which
    is the same normalization without overflow.
    """
    raw = np.asarray(raw, dtype=float)
    shaped = np.asarray(shaped, dtype=float)
    log_prop = np.asarray(log_prop, dtype=float)
    n = shaped.shape[0]
    if not (raw.shape == shaped.shape == log_prop.shape) or shaped.ndim != 1:
        raise ValueError("raw, shaped and log_prop must be 1-D arrays of equal length")
    if n < 2:
        raise ValueError("need at least two samples")
    if np.any(shaped < 0) or np.any(shaped > 1):
        raise ValueError("shaped scores must lie in [0, 1]")
    if not np.all(np.isfinite(log_prop)):
        raise ValueError("log_prop must be finite; drop out-of-support samples first")
    with np.errstate(divide="ignore"):
        logw = np.log(shaped) - log_prop
    top = logw.max()
    if not np.isfinite(top):
        raise DegenerateBatchError("every importance weight is zero")
    w = np.exp(logw - top)
    return w * (n / w.sum())


def weigh(points, raw, shaped, log_prop) -> WeightedBatch:
    weights = compute_weights(raw, shaped, log_prop)
    return WeightedBatch(points=np.asarray(points, dtype=float), raw=np.asarray(raw, dtype=float),
                         shaped=np.asarray(shaped, dtype=float),
                         log_prop=np.asarray(log_prop, dtype=float), weights=weights)


def mixture_log_density(x, centers, sigma):
    """``log (1/M) sum_j N(x; centers_j, sigma^2 I)`` for each row of ``x``."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    centers = np.atleast_2d(centers)
    dim = x.shape[1]
    sq = (np.einsum("nd,nd->n", x, x)[:, None] - 2.0 * x @ centers.T
          + np.einsum("md,md->m", centers, centers)[None, :])
    sq = np.maximum(sq, 0.0)
    log_norm = -0.5 * dim * np.log(2.0 * np.pi * sigma ** 2)
    return logsumexp(-sq / (2.0 * sigma ** 2), axis=1) - np.log(centers.shape[0]) + log_norm


class ModelPerturbation:
    """Decoded prior draws plus uniform noise, ``x = decode(z) + U(-h, h)``.

    The density has no closed form; it is approximated by a Gaussian mixture
    over ``n_mix`` fresh decoded prior draws with bandwidth ``h``.
    """

    def __init__(self, model, noise_half_width=0.1, n_mix=32, seed=None):
        if noise_half_width < 0:
            raise ValueError("noise_half_width must be non-negative")
        self.model = model
        self.noise_half_width = float(noise_half_width)
        self.n_mix = int(n_mix)
        rng = _rng(seed)
        z = rng.standard_normal((self.n_mix, model.latent_dim))
        self._centers = model.decode(z)

    @property
    def dim(self):
        return self.model.input_dim

    def sample(self, n, seed=None):
        rng = _rng(seed)
        z = rng.standard_normal((n, self.model.latent_dim))
        x = self.model.decode(z)
        h = self.noise_half_width
        if h > 0:
            x = x + rng.uniform(-h, h, size=x.shape)
        return x

    def log_density(self, x):
        x, single = _as_batch(x, self.dim)
        # a zero half-width would make the surrogate singular
        sigma = max(self.noise_half_width, 1e-12)
        out = mixture_log_density(x, self._centers, sigma)
        return float(out[0]) if single else out


def perturb_model_proposal(model, n, noise_half_width=0.1, seed=None, n_mix=32):
    """Draw ``n`` perturbed model samples and their approximate log-densities."""
    rng = _rng(seed)
    prop = ModelPerturbation(model, noise_half_width, n_mix=n_mix, seed=rng)
    x = prop.sample(n, rng)
    return x, prop.log_density(x)
