"""Learning the manifold of optimal solutions with an importance-weighted VAE.

The model is a latent-conditioned Gaussian ``p(x | z) = N(decode(z), dec_var I)``
with a standard normal prior on ``z`` and a diagonal Gaussian encoder.  Training
minimizes the importance-weighted joint-VAE loss

    sum_i w_i * ( ||x_i - decode(z_i)||^2 / (2 dec_var) + gamma |KL_i - C| ) / B

over minibatches of size ``B``, with ``z_i`` drawn by reparameterization and the
capacity ``C`` ramped linearly during warmup.
"""
from __future__ import annotations

import logging
import time
import warnings
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import tinynet
from .errors import DegenerateBatchError, NumericError, TrainingError
from .objective import DegenerateBatchWarning, ShapingConfig, shape_scores
from .proposal import ModelPerturbation, WeightedBatch, weigh

log = logging.getLogger(__name__)

Z_LO, Z_HI = -1.28, 1.28


@dataclass(eq=False)
class ManifoldModel:
    encoder: tinynet.DenseNet
    decoder: tinynet.DenseNet
    latent_dim: int
    dec_var: float = 0.05
    offset: np.ndarray | None = None
    logvar_clip: float = 10.0

    def __post_init__(self):
        if not self.dec_var > 0:
            raise ValueError("dec_var must be positive")
        if self.encoder.n_out != 2 * self.latent_dim or self.decoder.n_in != self.latent_dim:
            raise ValueError("encoder/decoder widths do not match latent_dim")
        if self.encoder.n_in != self.decoder.n_out:
            raise ValueError("encoder input and decoder output widths differ")
        if self.offset is None:
            self.offset = np.zeros(self.input_dim)
        self.offset = np.asarray(self.offset, dtype=float).reshape(self.input_dim)

    @property
    def input_dim(self):
        return self.decoder.n_out

    def params(self):
        return self.encoder.params() + self.decoder.params()

    def param_names(self):
        return ([f"encoder.{n}" for n in self.encoder.param_names()]
                + [f"decoder.{n}" for n in self.decoder.param_names()])

    def encode(self, x):
        return encode(self, x)

    def decode(self, z):
        z = np.atleast_2d(np.asarray(z, dtype=float))
        return tinynet.forward(self.decoder, z)[0] + self.offset


def new_model(input_dim, latent_dim=1, enc_hidden=(64, 64), dec_hidden=(64, 64),
              dec_var=0.05, seed=None, offset=None, logvar_clip=10.0) -> ManifoldModel:
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    s_enc, s_dec = ss.spawn(2)
    enc = tinynet.init((input_dim, *enc_hidden, 2 * latent_dim), np.random.default_rng(s_enc))
    dec = tinynet.init((latent_dim, *dec_hidden, input_dim), np.random.default_rng(s_dec))
    return ManifoldModel(enc, dec, latent_dim, dec_var=dec_var, offset=offset,
                         logvar_clip=logvar_clip)


def encode(model: ManifoldModel, x):
    """Posterior mean and clamped log-variance for each row of ``x``."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[1] != model.input_dim:
        raise ValueError(f"expected width {model.input_dim}, got {x.shape[1]}")
    out = tinynet.forward(model.encoder, x - model.offset)[0]
    if not np.all(np.isfinite(out)):
        raise NumericError("encoder produced a non-finite output")
    L = model.latent_dim
    c = model.logvar_clip
    return out[:, :L], np.clip(out[:, L:], -c, c)


def reparameterize(mu, logvar, eps):
    return mu + np.exp(0.5 * logvar) * eps


def gaussian_kl(mu, logvar):
    """Per-channel ``KL(N(mu, exp(logvar)) || N(0, 1))``."""
    mu = np.asarray(mu, dtype=float)
    logvar = np.asarray(logvar, dtype=float)
    # expm1 avoids cancellation when logvar is tiny
    return 0.5 * (mu * mu + np.maximum(np.expm1(logvar) - logvar, 0.0))


def recon_loglik(model: ManifoldModel, x, z):
    """Gaussian reconstruction log-likelihood without its additive constant."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    r = x - model.decode(z)
    return -np.einsum("nd,nd->n", r, r) / (2.0 * model.dec_var)


@dataclass
class LossResult:
    loss: float
    enc_grads: list
    dec_grads: list
    kl: np.ndarray  # (B, latent_dim)
    recon: np.ndarray  # (B,) negative log-likelihood without constant

    @property
    def grads(self):
        return self.enc_grads + self.dec_grads


def weighted_loss(model: ManifoldModel, x, weights, capacity, gamma, eps) -> LossResult:
    """Weighted joint-VAE loss of one minibatch and its exact gradients.

    The ``|KL - C|`` term uses ``sign(KL - C)`` as its (sub)gradient.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    w = np.asarray(weights, dtype=float)
    B = x.shape[0]
    L = model.latent_dim
    c = model.logvar_clip

    with np.errstate(invalid="ignore", over="ignore"):
        enc_out, enc_cache = tinynet.forward(model.encoder, x - model.offset)
    mu = enc_out[:, :L]
    raw_lv = enc_out[:, L:]
    lv = np.clip(raw_lv, -c, c)
    std = np.exp(0.5 * lv)
    z = mu + std * eps

    dec_out, dec_cache = tinynet.forward(model.decoder, z)
    r = dec_out + model.offset - x
    recon = np.einsum("nd,nd->n", r, r) / (2.0 * model.dec_var)
    kl_ch = gaussian_kl(mu, lv)
    gap = kl_ch.sum(axis=1) - capacity
    per = recon + gamma * np.abs(gap)
    loss = float(np.dot(w, per) / B)
    if not np.isfinite(loss):
        bad = np.flatnonzero(~np.isfinite(per))
        idx = int(bad[0]) if bad.size else -1
        raise NumericError(f"non-finite loss (first offending sample index {idx})")

    coef = w / B
    dec_grads, g_z = tinynet.backward(model.decoder, dec_cache, coef[:, None] * r / model.dec_var)
    ks = (coef * gamma * np.sign(gap))[:, None]
    g_mu = g_z + ks * mu
    g_lv = 0.5 * g_z * eps * std + ks * 0.5 * (np.exp(lv) - 1.0)
    g_lv *= (raw_lv > -c) & (raw_lv < c)
    enc_grads, _ = tinynet.backward(model.encoder, enc_cache, np.concatenate([g_mu, g_lv], axis=1),
                                   input_grad=False)
    return LossResult(loss, enc_grads, dec_grads, kl_ch, recon)


@dataclass
class TrainConfig:
    n_samples: int = 20000
    epochs: int = 350
    batch_size: int = 250
    lr: float = 1e-3
    gamma: float = 0.1
    capacity_max: float = 1.0
    capacity_warmup_frac: float = 0.8
    shaping_alpha: float = 10.0
    latent_dim: int = 1
    enc_hidden: tuple = (64, 64)
    dec_hidden: tuple = (64, 64)
    dec_var: float = 0.5
    logvar_clip: float = 10.0
    seed: int = 0
    outer_iterations: int = 1
    noise_half_width: float = 0.1
    use_proposal_density: bool = True
    threads: int = 1

    def __post_init__(self):
        self.enc_hidden = tuple(int(h) for h in self.enc_hidden)
        self.dec_hidden = tuple(int(h) for h in self.dec_hidden)
        for name in ("n_samples", "epochs", "batch_size", "latent_dim", "outer_iterations"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be a positive integer")
        for name in ("lr", "gamma", "dec_var", "shaping_alpha", "logvar_clip"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.capacity_max < 0:
            raise ValueError("capacity_max must be non-negative")
        if not 0 < self.capacity_warmup_frac <= 1:
            raise ValueError("capacity_warmup_frac must lie in (0, 1]")

    @classmethod
    def toy(cls, **kw):
        return cls(**kw)

    @classmethod
    def planning(cls, latent_dim=1, **kw):
        base = dict(epochs=700, gamma=10.0, shaping_alpha=20.0 if latent_dim == 1 else 10.0,
                    capacity_max=5.0 if latent_dim == 1 else 8.0, latent_dim=latent_dim,
                    enc_hidden=(300, 200), dec_hidden=(200, 300), dec_var=0.05,
                    use_proposal_density=False)
        base.update(kw)
        return cls(**base)

    def to_dict(self):
        d = asdict(self)
        d["enc_hidden"] = list(self.enc_hidden)
        d["dec_hidden"] = list(self.dec_hidden)
        return d


@dataclass
class TrainReport:
    loss: list = field(default_factory=list)
    kl: list = field(default_factory=list)  # per epoch, one value per latent channel
    capacity: list = field(default_factory=list)
    ess: float = float("nan")
    degenerate: bool = False
    wall_time: float = 0.0


def capacity_at(epoch, config: TrainConfig) -> float:
    """Linear ramp from 0 to ``capacity_max`` over the warmup epochs, then flat."""
    warm = config.capacity_warmup_frac * config.epochs
    return float(config.capacity_max * min(epoch / warm, 1.0))


def make_batch(objective, proposal, config: TrainConfig, seed) -> tuple[WeightedBatch, bool]:
    """Sample, evaluate, shape and weight one training set."""
    x = proposal.sample(config.n_samples, seed)
    raw = objective.evaluate(x, threads=config.threads)
    if config.use_proposal_density:
        log_prop = np.asarray(proposal.log_density(x), dtype=float)
        keep = np.isfinite(log_prop)
        x, raw, log_prop = x[keep], raw[keep], log_prop[keep]
    else:
        log_prop = np.zeros(len(x))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", DegenerateBatchWarning)
        shaped = shape_scores(raw, ShapingConfig(config.shaping_alpha))
    degenerate = any(issubclass(c.category, DegenerateBatchWarning) for c in caught)
    if degenerate:
        log.warning("degenerate batch: constant objective, training on uniform weights")
    try:
        batch = weigh(x, raw, shaped, log_prop)
    except DegenerateBatchError as exc:
        raise TrainingError(str(exc)) from exc
    return batch, degenerate


def train(objective, proposal, config: TrainConfig, model: ManifoldModel | None = None,
          offset=None):
    """Run the full sample / evaluate / weight / fit loop.

    With ``outer_iterations > 1`` the proposal is replaced by noisy samples of
    the current model and training continues for another ``epochs`` epochs.
    Returns ``(model, report)``; identical configs give identical results.
    """
    if objective.dim != proposal.dim:
        raise ValueError(f"objective dim {objective.dim} != proposal dim {proposal.dim}")
    t0 = time.perf_counter()
    ss = np.random.SeedSequence(config.seed)
    s_model, s_loop = ss.spawn(2)
    if model is None:
        model = new_model(objective.dim, config.latent_dim, config.enc_hidden, config.dec_hidden,
                          config.dec_var, seed=s_model, offset=offset,
                          logvar_clip=config.logvar_clip)
    elif model.input_dim != objective.dim:
        raise ValueError("model input_dim does not match the objective")
    params = model.params()
    names = model.param_names()
    state = tinynet.AdamState.for_params(params, lr=config.lr)
    report = TrainReport()

    for outer, s_iter in enumerate(s_loop.spawn(config.outer_iterations)):
        s_data, s_prop, s_fit = s_iter.spawn(3)
        if outer > 0:
            proposal = ModelPerturbation(model, config.noise_half_width, seed=s_prop)
        batch, degenerate = make_batch(objective, proposal, config, s_data)
        report.degenerate |= degenerate
        report.ess = batch.ess
        log.info("outer iteration %d: %d samples, ESS %.1f", outer, len(batch), batch.ess)
        _fit(model, batch, config, state, params, names, np.random.default_rng(s_fit), report)

    report.wall_time = time.perf_counter() - t0
    return model, report


def _fit(model, batch, config, state, params, names, rng, report):
    n = len(batch)
    bs = min(config.batch_size, n)
    x_all, w_all = batch.points, batch.weights
    L = model.latent_dim
    for epoch in range(config.epochs):
        cap = capacity_at(epoch, config)
        perm = rng.permutation(n)
        tot_loss = 0.0
        tot_kl = np.zeros(L)
        for start in range(0, n, bs):
            idx = perm[start:start + bs]
            x = x_all[idx]
            w = w_all[idx]
            eps = rng.standard_normal((len(idx), L))
            res = weighted_loss(model, x, w, cap, config.gamma, eps)
            tinynet.adam_step(params, res.grads, state, names)
            tot_loss += res.loss * len(idx)
            tot_kl += w @ res.kl
        report.loss.append(tot_loss / n)
        report.kl.append((tot_kl / n).tolist())
        report.capacity.append(cap)


def z_grid(latent_dim=1, count=200, lo=Z_LO, hi=Z_HI):
    """Evaluation latents: a line per latent axis, other coordinates zero."""
    line = np.linspace(lo, hi, count)
    blocks = []
    for k in range(latent_dim):
        z = np.zeros((count, latent_dim))
        z[:, k] = line
        blocks.append(z)
    return np.concatenate(blocks, axis=0)


def sample_manifold(model: ManifoldModel, z_values):
    """Decoder means at the given latents."""
    z = np.asarray(z_values, dtype=float).reshape(-1, model.latent_dim)
    return model.decode(z)


def evaluate_manifold(model: ManifoldModel, objective, grid_size=200, lo=Z_LO, hi=Z_HI):
    """Objective statistics over decoded latent-grid points.

    Returns ``(mean, std, scores)``.
    """
    pts = sample_manifold(model, z_grid(model.latent_dim, grid_size, lo, hi))
    scores = objective.evaluate(pts)
    return float(scores.mean()), float(scores.std()), scores


def with_overrides(config: TrainConfig, **kw) -> TrainConfig:
    return replace(config, **kw)
