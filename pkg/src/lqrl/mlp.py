"""Minimal dense network with hand-written backpropagation and per-tensor Adam.

Two heads are supported: a softmax head trained with sample-weighted
categorical cross-entropy, and a linear head trained with mean squared error.
Losses are averaged over the batch (MSE also over output entries).

Checkpoint format (``save``/``load``): UTF-8 text. The first line is
``# lqrl-mlp 1 <json>`` where the JSON object holds ``sizes``, ``activations``
and ``loss``. Every following line is one float (17 significant digits) of the
flat parameter vector, laid out layer by layer as ``W`` (row-major,
``fan_in x fan_out``) then ``b``.
"""

import json

import numpy as np

from .errors import ConfigurationError, DimensionError, DomainError, NumericError
from .numerics import AdamState, RngStream, adam_step

ACTIVATIONS = ("relu", "softmax", "linear")
LOSSES = ("cross_entropy", "mse")
LOG_FLOOR = 1e-12


def softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def to_categorical(index, n_a):
    if not 0 <= index < n_a:
        raise DomainError(f"class index {index} outside [0, {n_a})")
    out = np.zeros(n_a)
    out[index] = 1.0
    return out


class Mlp:
    def __init__(self, layer_sizes, activations, loss, seed=0, learning_rate=1e-3,
                 adam_eps=1e-7):
        if len(layer_sizes) < 2:
            raise ConfigurationError("need at least an input and an output size", "layer_sizes")
        if len(activations) != len(layer_sizes) - 1:
            raise ConfigurationError(
                f"{len(layer_sizes) - 1} layers but {len(activations)} activations", "activations")
        for i, act in enumerate(activations):
            if act not in ACTIVATIONS:
                raise ConfigurationError(f"unknown activation {act!r}", "activations")
            if act == "softmax" and i != len(activations) - 1:
                raise ConfigurationError("softmax is only allowed on the output layer", "activations")
        if loss not in LOSSES:
            raise ConfigurationError(f"unknown loss {loss!r}", "loss")
        if loss == "cross_entropy" and activations[-1] != "softmax":
            raise ConfigurationError("cross-entropy needs a softmax output", "loss")

        self.sizes = [int(n) for n in layer_sizes]
        self.activations = list(activations)
        self.loss = loss
        rng = RngStream(seed)
        self.weights = []
        self.biases = []
        for fan_in, fan_out in zip(self.sizes[:-1], self.sizes[1:]):
            # He-normal
            self.weights.append(rng.standard_normal((fan_in, fan_out)) * np.sqrt(2.0 / fan_in))
            self.biases.append(np.zeros(fan_out))
        self.optim = [AdamState(p.shape, step_size=learning_rate, epsilon=adam_eps)
                      for p in self.params()]

    def params(self):
        out = []
        for W, b in zip(self.weights, self.biases):
            out += [W, b]
        return out

    # flat parameter vector helpers, used by checkpoints and gradient checks
    def get_flat(self):
        return np.concatenate([p.ravel() for p in self.params()])

    def set_flat(self, flat):
        flat = np.asarray(flat, dtype=float)
        expected = sum(p.size for p in self.params())
        if flat.size != expected:
            raise DimensionError(f"expected {expected} parameters, got {flat.size}")
        k = 0
        for i in range(len(self.weights)):
            W, b = self.weights[i], self.biases[i]
            self.weights[i] = flat[k:k + W.size].reshape(W.shape).copy()
            k += W.size
            self.biases[i] = flat[k:k + b.size].copy()
            k += b.size

    def _forward(self, X, check=False):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.sizes[0]:
            raise DimensionError(f"input width {X.shape[1]} != {self.sizes[0]}")
        outs = [X]
        h = X
        for i, (W, b, act) in enumerate(zip(self.weights, self.biases, self.activations)):
            z = h @ W + b
            if act == "relu":
                h = np.maximum(z, 0.0)
            elif act == "softmax":
                h = softmax(z)
            else:
                h = z
            if check and not np.all(np.isfinite(h)):
                raise NumericError(f"non-finite activations in layer {i}", layer=i)
            outs.append(h)
        return outs

    def forward(self, X):
        return self._forward(X)[-1]

    __call__ = forward

    def _loss_and_output_grad(self, out, Y, w):
        N = out.shape[0]
        if self.loss == "cross_entropy":
            p = np.maximum(out, LOG_FLOOR)
            per_sample = -np.sum(Y * np.log(p), axis=1)
            loss = np.sum(w * per_sample) / N
            # dL/dp, zero where the floor is active, then through the softmax Jacobian
            dp = np.where(out > LOG_FLOOR, -(w[:, None] * Y) / p, 0.0) / N
            dz = out * (dp - np.sum(dp * out, axis=1, keepdims=True))
        else:
            C = out.shape[1]
            err = out - Y
            loss = np.sum(w * np.mean(err ** 2, axis=1)) / N
            dz = 2.0 * w[:, None] * err / (N * C)
        return loss, dz

    def loss_and_gradients(self, X, Y, sample_weight=None):
        """Loss and exact parameter gradients (same ordering as :meth:`params`)."""
        outs = self._forward(X, check=True)
        out = outs[-1]
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        if Y.shape != out.shape:
            raise DimensionError(f"targets {Y.shape} do not match outputs {out.shape}")
        N = out.shape[0]
        if sample_weight is None:
            w = np.ones(N)
        else:
            w = np.asarray(sample_weight, dtype=float).ravel()
            if w.size != N:
                raise DimensionError(f"{w.size} sample weights for a batch of {N}")
        loss, delta = self._loss_and_output_grad(out, Y, w)
        if not np.isfinite(loss):
            raise NumericError("loss is not finite", layer=len(self.weights) - 1)

        grads = [None] * (2 * len(self.weights))
        for i in reversed(range(len(self.weights))):
            h_in = outs[i]
            grads[2 * i] = h_in.T @ delta
            grads[2 * i + 1] = delta.sum(axis=0)
            if i > 0:
                delta = delta @ self.weights[i].T
                if self.activations[i - 1] == "relu":
                    delta = delta * (outs[i] > 0.0)
        return float(loss), grads

    def train_on_batch(self, X, Y, sample_weight=None):
        """One Adam descent step on the batch; returns the pre-update loss."""
        loss, grads = self.loss_and_gradients(X, Y, sample_weight)
        for p, g, st in zip(self.params(), grads, self.optim):
            p -= adam_step(st, g)
        return loss

    def loss_value(self, X, Y, sample_weight=None):
        return self.loss_and_gradients(X, Y, sample_weight)[0]

    # checkpoints
    def save(self, path):
        header = json.dumps({"sizes": self.sizes, "activations": self.activations, "loss": self.loss})
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"# lqrl-mlp 1 {header}\n")
            for v in self.get_flat():
                fh.write(f"{v:.17g}\n")

    @classmethod
    def load(cls, path, **kwargs):
        with open(path, encoding="utf-8") as fh:
            first = fh.readline()
            if not first.startswith("# lqrl-mlp 1 "):
                raise ConfigurationError(f"{path} is not an lqrl-mlp checkpoint")
            meta = json.loads(first[len("# lqrl-mlp 1 "):])
            flat = np.array([float(line) for line in fh if line.strip()])
        net = cls(meta["sizes"], meta["activations"], meta["loss"], **kwargs)
        net.set_flat(flat)
        return net
