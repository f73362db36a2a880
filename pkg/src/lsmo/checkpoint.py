"""Human-readable model checkpoints.

A checkpoint is a JSON document holding the architecture, the flat parameter
arrays in ``ManifoldModel.param_names()`` order and an echo of the training
config.  Floats are written with ``repr`` precision, so load followed by save
reproduces the file byte for byte.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import CheckpointError
from .manifold import ManifoldModel
from .tinynet import DenseNet

FORMAT_VERSION = 1
FORMAT_NAME = "lsmo-checkpoint"


def _net_params(net: DenseNet, prefix):
    return {f"{prefix}.{n}": p.ravel().tolist() for n, p in zip(net.param_names(), net.params())}


def model_to_dict(model: ManifoldModel, train_config=None, seed=None) -> dict:
    params = _net_params(model.encoder, "encoder")
    params.update(_net_params(model.decoder, "decoder"))
    return {
        "format": FORMAT_NAME,
        "format_version": FORMAT_VERSION,
        "latent_dim": model.latent_dim,
        "input_dim": model.input_dim,
        "dec_var": model.dec_var,
        "logvar_clip": model.logvar_clip,
        "encoder_layers": list(model.encoder.layer_sizes),
        "decoder_layers": list(model.decoder.layer_sizes),
        "offset": model.offset.tolist(),
        "params": params,
        "train_config": train_config,
        "seed": seed,
    }


def dumps(model: ManifoldModel, train_config=None, seed=None) -> str:
    return json.dumps(model_to_dict(model, train_config, seed), indent=1, sort_keys=True) + "\n"


def save_model(path, model: ManifoldModel, train_config=None, seed=None):
    """Write ``model`` to ``path``; ``train_config`` is a plain dict echoed verbatim."""
    Path(path).write_text(dumps(model, train_config, seed))


def _field(doc, key, where):
    if key not in doc:
        raise CheckpointError(f"{where}: missing field '{key}'")
    return doc[key]


def _build_net(doc, prefix, where):
    sizes = [int(s) for s in _field(doc, f"{prefix}_layers", where)]
    if len(sizes) < 2 or min(sizes) < 1:
        raise CheckpointError(f"{where}: field '{prefix}_layers' is not a valid architecture")
    params = _field(doc, "params", where)
    weights, biases = [], []
    for l, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        for name, shape, dest in ((f"W{l}", (n_out, n_in), weights), (f"b{l}", (n_out,), biases)):
            key = f"{prefix}.{name}"
            flat = np.asarray(_field(params, key, where), dtype=float)
            if flat.ndim != 1 or flat.size != int(np.prod(shape)):
                raise CheckpointError(f"{where}: field 'params.{key}' has {flat.size} values, "
                                      f"architecture needs {int(np.prod(shape))}")
            if not np.all(np.isfinite(flat)):
                raise CheckpointError(f"{where}: field 'params.{key}' holds non-finite values")
            dest.append(flat.reshape(shape))
    expected = {f"{prefix}.W{l}" for l in range(len(sizes) - 1)}
    expected |= {f"{prefix}.b{l}" for l in range(len(sizes) - 1)}
    extra = {k for k in params if k.startswith(prefix + ".")} - expected
    if extra:
        raise CheckpointError(f"{where}: unexpected parameters {sorted(extra)}")
    return DenseNet(sizes, weights, biases)


def loads(text: str, where="<string>"):
    """Parse a checkpoint; returns ``(model, train_config, seed)``."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"{where}: corrupt checkpoint ({exc})") from exc
    if not isinstance(doc, dict) or doc.get("format") != FORMAT_NAME:
        raise CheckpointError(f"{where}: field 'format' is not {FORMAT_NAME!r}")
    version = _field(doc, "format_version", where)
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{where}: field 'format_version' is {version!r}, "
                              f"this build reads {FORMAT_VERSION}")
    enc = _build_net(doc, "encoder", where)
    dec = _build_net(doc, "decoder", where)
    try:
        model = ManifoldModel(enc, dec, int(_field(doc, "latent_dim", where)),
                              dec_var=float(_field(doc, "dec_var", where)),
                              offset=_field(doc, "offset", where),
                              logvar_clip=float(_field(doc, "logvar_clip", where)))
    except ValueError as exc:
        raise CheckpointError(f"{where}: {exc}") from exc
    if model.input_dim != _field(doc, "input_dim", where):
        raise CheckpointError(f"{where}: field 'input_dim' disagrees with the decoder width")
    return model, doc.get("train_config"), doc.get("seed")


def load_model(path):
    """Read a checkpoint file; returns ``(model, train_config, seed)``."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise CheckpointError(f"{path}: cannot read checkpoint ({exc})") from exc
    return loads(text, str(path))
