"""A small dense ReLU network with hand-written backprop and Adam."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericError

_TINY = np.finfo(float).tiny


@dataclass(eq=False)
class DenseNet:
    """Affine layers with ReLU between them and an identity output.

    ``weights[l]`` has shape ``(out_l, in_l)``.
    """

    layer_sizes: tuple
    weights: list
    biases: list

    def __post_init__(self):
        self.layer_sizes = tuple(int(s) for s in self.layer_sizes)
        if len(self.layer_sizes) < 2 or min(self.layer_sizes) < 1:
            raise ValueError(f"bad layer sizes {self.layer_sizes}")
        if len(self.weights) != len(self.layer_sizes) - 1 or len(self.biases) != len(self.weights):
            raise ValueError("one weight matrix and bias per layer transition required")
        for l, (W, b) in enumerate(zip(self.weights, self.biases)):
            shape = (self.layer_sizes[l + 1], self.layer_sizes[l])
            if W.shape != shape or b.shape != (shape[0],):
                raise ValueError(f"layer {l}: expected W{shape}, b({shape[0]},); "
                                 f"got W{W.shape}, b{b.shape}")

    @property
    def n_in(self):
        return self.layer_sizes[0]

    @property
    def n_out(self):
        return self.layer_sizes[-1]

    def params(self):
        """Parameter arrays in canonical order: W0, b0, W1, b1, ..."""
        out = []
        for W, b in zip(self.weights, self.biases):
            out.extend((W, b))
        return out

    def param_names(self):
        names = []
        for l in range(len(self.weights)):
            names.extend((f"W{l}", f"b{l}"))
        return names

    def n_params(self):
        return sum(p.size for p in self.params())

    def copy(self):
        return DenseNet(self.layer_sizes, [W.copy() for W in self.weights],
                        [b.copy() for b in self.biases])

    def __call__(self, x):
        return forward(self, x)[0]


def init(layer_sizes, seed=None) -> DenseNet:
    """He-uniform weights (half-width ``sqrt(6 / fan_in)``) and zero biases."""
    rng = np.random.default_rng(seed)
    sizes = tuple(int(s) for s in layer_sizes)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        lim = np.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-lim, lim, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return DenseNet(sizes, weights, biases)


@dataclass(eq=False)
class Cache:
    net_id: int
    inputs: list = field(default_factory=list)
    pre: list = field(default_factory=list)


def forward(net: DenseNet, batch):
    """Return ``(outputs, cache)``; the cache feeds :func:`backward`."""
    h = np.asarray(batch, dtype=float)
    if h.ndim != 2 or h.shape[1] != net.n_in:
        raise ValueError(f"expected input of shape (B, {net.n_in}), got {h.shape}")
    cache = Cache(net_id=id(net))
    last = len(net.weights) - 1
    for l, (W, b) in enumerate(zip(net.weights, net.biases)):
        cache.inputs.append(h)
        a = h @ W.T
        a += b
        cache.pre.append(a)
        h = a if l == last else np.maximum(a, 0.0)
    return h, cache


def backward(net: DenseNet, cache: Cache, upstream, input_grad=True):
    """Gradients of a scalar loss given ``d loss / d outputs``.

    Returns ``(param_grads, input_grad)`` with ``param_grads`` ordered like
    :meth:`DenseNet.params`.  With ``input_grad=False`` the last product is
    skipped and ``None`` is returned in its place.
    """
    if cache.net_id != id(net) or len(cache.pre) != len(net.weights):
        raise ValueError("cache does not belong to this network")
    g = np.asarray(upstream, dtype=float)
    if g.shape != cache.pre[-1].shape:
        raise ValueError(f"upstream gradient shape {g.shape} != output shape {cache.pre[-1].shape}")
    grads = [None] * (2 * len(net.weights))
    for l in range(len(net.weights) - 1, -1, -1):
        if l != len(net.weights) - 1:
            g = g * (cache.pre[l] > 0.0)
        grads[2 * l] = g.T @ cache.inputs[l]
        grads[2 * l + 1] = g.sum(axis=0)
        if l == 0 and not input_grad:
            return grads, None
        g = g @ net.weights[l]
    return grads, g


@dataclass(eq=False)
class AdamState:
    m: list
    v: list
    t: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params, lr=1e-3, **kw):
        return cls(m=[np.zeros_like(p) for p in params], v=[np.zeros_like(p) for p in params],
                   lr=lr, **kw)


def adam_step(params, grads, state: AdamState, names=None):
    """In-place bias-corrected Adam update of ``params``."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params, grads and optimizer state must have the same length")
    for i, g in enumerate(grads):
        if g.shape != params[i].shape:
            raise ValueError(f"gradient {i} has shape {g.shape}, parameter has {params[i].shape}")
        if not np.all(np.isfinite(g)):
            name = names[i] if names else f"param[{i}]"
            raise NumericError(f"non-finite gradient for {name}")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    step = state.lr * np.sqrt(c2) / c1
    eps_hat = state.eps * np.sqrt(c2)
    # in place, one scratch buffer per parameter
    for p, g, m, v in zip(params, grads, state.m, state.v):
        tmp = np.multiply(g, 1.0 - b1)
        m *= b1
        m += tmp
        # moments of dead units decay into subnormals, which are very slow to compute with
        np.abs(m, out=tmp)
        np.copyto(m, 0.0, where=tmp < _TINY)
        np.multiply(g, g, out=tmp)
        tmp *= 1.0 - b2
        v *= b2
        v += tmp
        np.sqrt(v, out=tmp)
        tmp += eps_hat
        np.divide(m, tmp, out=tmp)
        tmp *= step
        p -= tmp
    return params, state
