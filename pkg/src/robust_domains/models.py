"""Built-in prediction models with hand-derived cross-entropy gradients.

Two loss oracles are provided: a convex linear softmax classifier and a
smooth non-convex one-hidden-layer tanh network. Both expose the same
contract, which any user model can implement:

* ``batch_loss(params, X, y)``            -> mean loss, always >= 0
* ``loss_and_gradient(params, X, y)``     -> (mean loss, flat gradient)
* ``predict(params, X)``                  -> predicted labels
* ``init_params(rng)``                    -> ModelParameters

Parameters travel as one flat vector plus a layout describing named blocks,
so optimizer code never needs to know a model's internals.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, InvalidInputError
from .simplex import SimplexDistribution

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ParameterLayout:
    """Named blocks (name, shape) tiling a flat parameter vector exactly once."""

    blocks: tuple[tuple[str, tuple[int, ...]], ...]

    @property
    def size(self) -> int:
        return sum(int(np.prod(shape)) for _, shape in self.blocks)

    def slices(self):
        offset = 0
        for name, shape in self.blocks:
            length = int(np.prod(shape))
            yield name, shape, slice(offset, offset + length)
            offset += length


class ModelParameters:
    """Flat parameter vector with named block views."""

    __slots__ = ("layout", "values")

    def __init__(self, layout: ParameterLayout, values):
        values = np.asarray(values, dtype=float)
        if values.ndim != 1 or values.size != layout.size:
            raise InvalidInputError(
                f"parameter vector must be flat with {layout.size} entries"
            )
        if not np.all(np.isfinite(values)):
            raise InvalidInputError("parameters must be finite")
        self.layout = layout
        self.values = values

    def block(self, name: str) -> np.ndarray:
        for block_name, shape, sl in self.layout.slices():
            if block_name == name:
                return self.values[sl].reshape(shape)
        raise InvalidInputError(f"no parameter block named {name!r}")

    def copy(self) -> "ModelParameters":
        return ModelParameters(self.layout, self.values.copy())


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def _check_features(X, num_features):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.ndim != 2 or X.shape[1] != num_features:
        raise InvalidInputError(f"features must be (m, {num_features})")
    return X

def _check_batch(X, y, num_features, num_classes):
    X = _check_features(X, num_features)
    y = np.asarray(y, dtype=np.int64).reshape(-1)
    if y.shape != (X.shape[0],):
        raise InvalidInputError("labels must match the batch size")
    if np.any(y < 0) or np.any(y >= num_classes):
        raise InvalidInputError(f"labels must lie in [0, {num_classes})")
    return X, y


class LossOracle:
    """Behavioral contract for pluggable models; see the module docstring."""

    layout: ParameterLayout

    def init_params(self, rng=None) -> ModelParameters:
        raise NotImplementedError

    def batch_loss(self, params, X, y) -> float:
        raise NotImplementedError

    def loss_and_gradient(self, params, X, y):
        raise NotImplementedError

    def predict(self, params, X) -> np.ndarray:
        raise NotImplementedError

    def loss(self, params, x, y) -> float:
        """Loss of one example."""
        return self.batch_loss(params, x, np.asarray([y]))


class SoftmaxClassifier(LossOracle):
    """Linear softmax classifier under mean cross entropy (convex in the parameters)."""

    kind = "softmax"

    def __init__(self, num_features: int, num_classes: int):
        if num_features < 1 or num_classes < 2:
            raise ConfigurationError("need num_features >= 1 and num_classes >= 2")
        self.num_features = num_features
        self.num_classes = num_classes
        self.layout = ParameterLayout(
            (("weight", (num_classes, num_features)), ("bias", (num_classes,)))
        )

    def init_params(self, rng=None) -> ModelParameters:
        return ModelParameters(self.layout, np.zeros(self.layout.size))

    def _logits(self, params, X):
        return X @ params.block("weight").T + params.block("bias")

    def batch_loss(self, params, X, y) -> float:
        X, y = _check_batch(X, y, self.num_features, self.num_classes)
        log_probs = _log_softmax(self._logits(params, X))
        return float(-log_probs[np.arange(X.shape[0]), y].mean())

    def loss_and_gradient(self, params, X, y):
        X, y = _check_batch(X, y, self.num_features, self.num_classes)
        m = X.shape[0]
        log_probs = _log_softmax(self._logits(params, X))
        loss = float(-log_probs[np.arange(m), y].mean())
        delta = np.exp(log_probs)
        delta[np.arange(m), y] -= 1.0
        delta /= m
        grad = np.concatenate([(delta.T @ X).ravel(), delta.sum(axis=0)])
        return loss, grad

    def predict(self, params, X) -> np.ndarray:
        X = _check_features(X, self.num_features)
        return np.argmax(self._logits(params, X), axis=1)


class MLPClassifier(LossOracle):
    """One hidden tanh layer with a softmax output; smooth but non-convex."""

    kind = "mlp"

    def __init__(self, num_features: int, hidden_units: int, num_classes: int):
        if hidden_units < 1:
            raise ConfigurationError("hidden_units must be >= 1")
        if num_features < 1 or num_classes < 2:
            raise ConfigurationError("need num_features >= 1 and num_classes >= 2")
        self.num_features = num_features
        self.hidden_units = hidden_units
        self.num_classes = num_classes
        self.layout = ParameterLayout(
            (
                ("hidden_weight", (hidden_units, num_features)),
                ("hidden_bias", (hidden_units,)),
                ("output_weight", (num_classes, hidden_units)),
                ("output_bias", (num_classes,)),
            )
        )

    def init_params(self, rng=None) -> ModelParameters:
        rng = np.random.default_rng(rng)
        values = np.empty(self.layout.size)
        for name, _, sl in self.layout.slices():
            fan_in = self.num_features if name.startswith("hidden") else self.hidden_units
            bound = 1.0 / np.sqrt(fan_in)
            values[sl] = rng.uniform(-bound, bound, size=sl.stop - sl.start)
        return ModelParameters(self.layout, values)

    def _forward(self, params, X):
        hidden = np.tanh(X @ params.block("hidden_weight").T + params.block("hidden_bias"))
        logits = hidden @ params.block("output_weight").T + params.block("output_bias")
        return hidden, logits

    def batch_loss(self, params, X, y) -> float:
        X, y = _check_batch(X, y, self.num_features, self.num_classes)
        _, logits = self._forward(params, X)
        log_probs = _log_softmax(logits)
        return float(-log_probs[np.arange(X.shape[0]), y].mean())

    def loss_and_gradient(self, params, X, y):
        X, y = _check_batch(X, y, self.num_features, self.num_classes)
        m = X.shape[0]
        hidden, logits = self._forward(params, X)
        log_probs = _log_softmax(logits)
        loss = float(-log_probs[np.arange(m), y].mean())
        delta = np.exp(log_probs)
        delta[np.arange(m), y] -= 1.0
        delta /= m
        w_out = params.block("output_weight")
        d_hidden = (delta @ w_out) * (1.0 - hidden * hidden)
        grad = np.concatenate(
            [
                (d_hidden.T @ X).ravel(),
                d_hidden.sum(axis=0),
                (delta.T @ hidden).ravel(),
                delta.sum(axis=0),
            ]
        )
        return loss, grad

    def predict(self, params, X) -> np.ndarray:
        X = _check_features(X, self.num_features)
        _, logits = self._forward(params, X)
        return np.argmax(logits, axis=1)


def weighted_gradient(p: SimplexDistribution, per_domain_grads) -> np.ndarray:
    """Convex combination ``sum_k p_k g_k`` of per-domain gradients."""
    grads = [np.asarray(g, dtype=float) for g in per_domain_grads]
    if len(grads) != p.size:
        raise InvalidInputError("need one gradient per domain weight")
    length = grads[0].shape
    if any(g.shape != length for g in grads):
        raise InvalidInputError("per-domain gradients must share one shape")
    return p.weights @ np.stack(grads)


def build_model(kind: str, num_features: int, num_classes: int, hidden_units=None):
    if kind == "softmax":
        return SoftmaxClassifier(num_features, num_classes)
    if kind == "mlp":
        if hidden_units is None:
            raise ConfigurationError("mlp model requires hidden_units")
        return MLPClassifier(num_features, int(hidden_units), num_classes)
    raise ConfigurationError(f"unknown model kind {kind!r}")


def save_checkpoint(path, model, params: ModelParameters) -> Path:
    """Versioned JSON dump of the model signature, layout and exact parameter values."""
    spec = {
        "format_version": CHECKPOINT_VERSION,
        "model": {
            "kind": model.kind,
            "num_features": model.num_features,
            "num_classes": model.num_classes,
        },
        "blocks": [[name, list(shape)] for name, shape in params.layout.blocks],
        # json renders floats with repr, which round-trips float64 exactly
        "values": params.values.tolist(),
    }
    if model.kind == "mlp":
        spec["model"]["hidden_units"] = model.hidden_units
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(spec, fh)
        fh.write("\n")
    return path


def load_checkpoint(path):
    """Rebuild (model, params) from a checkpoint written by ``save_checkpoint``."""
    with open(path, "r", encoding="utf-8") as fh:
        spec = json.load(fh)
    version = spec.get("format_version")
    if version != CHECKPOINT_VERSION:
        raise InvalidInputError(f"unsupported checkpoint version {version!r}")
    info = spec["model"]
    model = build_model(
        info["kind"], info["num_features"], info["num_classes"], info.get("hidden_units")
    )
    blocks = tuple((name, tuple(shape)) for name, shape in spec["blocks"])
    if blocks != model.layout.blocks:
        raise InvalidInputError("checkpoint layout does not match the model")
    params = ModelParameters(model.layout, np.array(spec["values"], dtype=float))
    return model, params
