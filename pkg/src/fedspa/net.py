"""Minimal differentiable feed-forward network on flat parameter vectors.

Parameters live in a single flat float32 vector ("param vector") whose
layout is fixed by the NetworkSpec: for each hidden layer then the
classifier head, weight matrix (input-major) followed by bias. The flat
vector is the unit exchanged between clients and server.

Losses are objects implementing

    evaluate(logits, embeddings, labels) -> (value, d_logits, d_embeddings)

where either gradient may be None. This lets callers define objectives
at the logit level (cross-entropy), at the embedding level (feature
alignment), or both; backprop injects d_embeddings at the designated
embedding layer. Parameters with no path to the loss receive exactly
zero gradient, so the classifier head is untouched by embedding-only
objectives.

All operations are pure functions of their arguments. Math follows the
dtype of the supplied arrays, which lets tests run float64 oracles
through the same code path; production arrays are float32.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataFormatError, NumericError

PARAMS_MAGIC = "fedspa-params"


@dataclass
class NetworkSpec:
    """Architecture shared by every participant.

    embedding_layer indexes the hidden layer whose post-activation output
    is the feature embedding; defaults to the last hidden layer.
    """

    input_dim: int
    hidden_dims: list[int]
    num_classes: int
    activation: str = "relu"
    embedding_layer: int | None = None

    def __post_init__(self):
        if self.input_dim < 1:
            raise ConfigError(f"input_dim must be positive, got {self.input_dim}")
        if not self.hidden_dims or any(h < 1 for h in self.hidden_dims):
            raise ConfigError(f"hidden_dims must be non-empty positive ints, got {self.hidden_dims}")
        if self.num_classes < 2:
            raise ConfigError(f"num_classes must be >= 2, got {self.num_classes}")
        if self.activation != "relu":
            raise ConfigError(f"unsupported activation {self.activation!r}")
        if self.embedding_layer is None:
            self.embedding_layer = len(self.hidden_dims) - 1
        if not 0 <= self.embedding_layer < len(self.hidden_dims):
            raise ConfigError(
                f"embedding_layer {self.embedding_layer} out of range for {len(self.hidden_dims)} hidden layers"
            )

    @property
    def embedding_dim(self) -> int:
        return self.hidden_dims[self.embedding_layer]

    def layer_dims(self) -> list[tuple[int, int]]:
        """(fan_in, fan_out) per layer, classifier head last."""
        widths = [self.input_dim, *self.hidden_dims, self.num_classes]
        return list(zip(widths[:-1], widths[1:]))


@dataclass
class Batch:
    """Inputs in [0,1] with integer class labels (None for label-free losses)."""

    inputs: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        if self.labels is not None and len(self.labels) != len(self.inputs):
            raise ConfigError("inputs and labels must have equal leading dimension")


def param_count(spec: NetworkSpec) -> int:
    return sum(din * dout + dout for din, dout in spec.layer_dims())


def init_params(spec: NetworkSpec, seed: int) -> np.ndarray:
    """Fresh parameter vector: uniform(-sqrt(6/(fan_in+fan_out))) weights, zero biases."""
    rng = np.random.Generator(np.random.PCG64(seed))
    parts = []
    for din, dout in spec.layer_dims():
        bound = np.sqrt(6.0 / (din + dout))
        parts.append(rng.uniform(-bound, bound, size=din * dout).astype(np.float32))
        parts.append(np.zeros(dout, dtype=np.float32))
    return np.concatenate(parts)


def unpack(spec: NetworkSpec, params: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    """Views of (W, b) per layer; raises on layout mismatch."""
    expected = param_count(spec)
    if params.ndim != 1 or params.size != expected:
        raise ConfigError(f"param vector has {params.size} entries, spec implies {expected}")
    layers = []
    offset = 0
    for din, dout in spec.layer_dims():
        w = params[offset : offset + din * dout].reshape(din, dout)
        offset += din * dout
        b = params[offset : offset + dout]
        offset += dout
        layers.append((w, b))
    return layers


def _pack(grads: list[tuple[np.ndarray, np.ndarray]]) -> np.ndarray:
    return np.concatenate([np.concatenate([gw.ravel(), gb]) for gw, gb in grads])


def _check_inputs(spec: NetworkSpec, inputs: np.ndarray) -> np.ndarray:
    inputs = np.atleast_2d(inputs)
    if inputs.shape[1] != spec.input_dim:
        raise ConfigError(f"inputs have dim {inputs.shape[1]}, spec expects {spec.input_dim}")
    return inputs


def _forward_cached(layers, inputs):
    """Forward pass keeping per-layer activations for backprop."""
    hs = [inputs]
    zs = []
    h = inputs
    for w, b in layers[:-1]:
        z = h @ w + b
        zs.append(z)
        h = np.maximum(z, 0)
        hs.append(h)
    w, b = layers[-1]
    logits = h @ w + b
    return hs, zs, logits


def forward(spec: NetworkSpec, params: np.ndarray, inputs: np.ndarray) -> np.ndarray:
    """Logits [batch x num_classes]."""
    inputs = _check_inputs(spec, inputs)
    _, _, logits = _forward_cached(unpack(spec, params), inputs)
    return logits


def embed(spec: NetworkSpec, params: np.ndarray, inputs: np.ndarray) -> np.ndarray:
    """Post-activation output of the embedding layer, [batch x embedding_dim]."""
    inputs = _check_inputs(spec, inputs)
    hs, _, _ = _forward_cached(unpack(spec, params), inputs)
    return hs[spec.embedding_layer + 1]


def _backward(spec, layers, hs, zs, dlogits, demb, need_inputs: bool):
    """Push d_logits / d_embeddings back to parameter (and input) gradients.

    When dlogits is None the classifier-head gradient blocks are exact
    zeros: the head is skipped entirely rather than multiplied through.
    """
    n_hidden = len(layers) - 1
    gws = [None] * len(layers)
    gbs = [None] * len(layers)
    head_w, head_b = layers[-1]
    if dlogits is not None:
        gws[-1] = hs[-1].T @ dlogits
        gbs[-1] = dlogits.sum(axis=0)
        dh = dlogits @ head_w.T
    else:
        gws[-1] = np.zeros_like(head_w)
        gbs[-1] = np.zeros_like(head_b)
        dh = np.zeros_like(hs[-1])
    for i in range(n_hidden - 1, -1, -1):
        if i == spec.embedding_layer and demb is not None:
            dh = dh + demb
        dz = dh * (zs[i] > 0)
        gws[i] = hs[i].T @ dz
        gbs[i] = dz.sum(axis=0)
        dh = dz @ layers[i][0].T
    dx = dh if need_inputs else None
    return list(zip(gws, gbs)), dx


def _evaluate(spec, params, batch, loss, need_inputs: bool):
    inputs = _check_inputs(spec, batch.inputs)
    layers = unpack(spec, params)
    hs, zs, logits = _forward_cached(layers, inputs)
    emb = hs[spec.embedding_layer + 1]
    value, dlogits, demb = loss.evaluate(logits, emb, batch.labels)
    if not np.isfinite(value):
        raise NumericError(f"non-finite loss value {value}")
    grads, dx = _backward(spec, layers, hs, zs, dlogits, demb, need_inputs)
    return float(value), grads, dx


def loss_and_param_grads(spec: NetworkSpec, params: np.ndarray, batch: Batch, loss) -> tuple[float, np.ndarray]:
    """Loss value and its gradient as a flat vector in param-vector layout."""
    value, grads, _ = _evaluate(spec, params, batch, loss, need_inputs=False)
    return value, _pack(grads)


def input_grads(spec: NetworkSpec, params: np.ndarray, batch: Batch, loss) -> np.ndarray:
    """Gradient of the loss with respect to the inputs, [batch x input_dim]."""
    _, _, dx = _evaluate(spec, params, batch, loss, need_inputs=True)
    return dx


def embedding_param_grads(spec: NetworkSpec, params: np.ndarray, inputs: np.ndarray, demb: np.ndarray) -> np.ndarray:
    """Backprop a precomputed embedding gradient to flat parameter gradients.

    Entry point for objectives computed outside the network (set
    distances between embedding populations): the caller supplies
    d(loss)/d(embeddings) for these inputs.
    """
    inputs = _check_inputs(spec, inputs)
    layers = unpack(spec, params)
    hs, zs, _ = _forward_cached(layers, inputs)
    grads, _ = _backward(spec, layers, hs, zs, None, demb, need_inputs=False)
    return _pack(grads)


def embedding_input_grads(spec: NetworkSpec, params: np.ndarray, inputs: np.ndarray, demb: np.ndarray) -> np.ndarray:
    """As embedding_param_grads, but return the gradient w.r.t. the inputs."""
    inputs = _check_inputs(spec, inputs)
    layers = unpack(spec, params)
    hs, zs, _ = _forward_cached(layers, inputs)
    _, dx = _backward(spec, layers, hs, zs, None, demb, need_inputs=True)
    return dx


def sgd_step(params: np.ndarray, grads: np.ndarray, lr: float) -> np.ndarray:
    if params.shape != grads.shape:
        raise ConfigError("params and grads have mismatched layouts")
    return params - np.asarray(lr, dtype=params.dtype) * grads


def sgd_train(
    spec: NetworkSpec,
    params: np.ndarray,
    inputs: np.ndarray,
    labels: np.ndarray,
    epochs: int,
    lr: float,
    batch_size: int,
    seed: int,
    post_epoch=None,
) -> np.ndarray:
    """Mini-batch SGD on cross-entropy; batch order reshuffled per epoch.

    post_epoch, when given, maps the end-of-epoch params to new params
    (used for projection-style constraints).
    """
    if batch_size < 1:
        raise ConfigError(f"batch_size must be positive, got {batch_size}")
    rng = np.random.Generator(np.random.PCG64(seed))
    loss = CrossEntropyLoss()
    current = params
    n = len(inputs)
    for epoch in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            batch = Batch(inputs=inputs[idx], labels=labels[idx])
            try:
                _, grads = loss_and_param_grads(spec, current, batch, loss)
            except NumericError as exc:
                raise NumericError(f"epoch {epoch}, batch at {start}: {exc}") from exc
            current = sgd_step(current, grads, lr)
        if post_epoch is not None:
            current = post_epoch(current)
    return current


def _softmax_ce(logits, labels):
    n = logits.shape[0]
    shifted = logits - logits.max(axis=1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    logp = shifted - logz
    value = -logp[np.arange(n), labels].mean()
    dlogits = np.exp(logp)
    dlogits[np.arange(n), labels] -= 1
    dlogits /= n
    return value, dlogits


class CrossEntropyLoss:
    """Mean softmax cross-entropy against the batch labels."""

    def evaluate(self, logits, emb, labels):
        if labels is None:
            raise ConfigError("cross-entropy requires labels")
        value, dlogits = _softmax_ce(logits, np.asarray(labels))
        return value, dlogits, None


@dataclass
class TargetedCrossEntropy:
    """Mean cross-entropy toward one fixed class, ignoring batch labels."""

    target: int

    def evaluate(self, logits, emb, labels):
        fixed = np.full(logits.shape[0], self.target)
        value, dlogits = _softmax_ce(logits, fixed)
        return value, dlogits, None


def save_params(path, params: np.ndarray) -> None:
    data = np.ascontiguousarray(params, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(f"{PARAMS_MAGIC} v1 {data.size}\n".encode("ascii"))
        fh.write(data.tobytes())


def load_params(path, expected_count: int | None = None) -> np.ndarray:
    with open(path, "rb") as fh:
        header = fh.readline()
        blob = fh.read()
    tokens = header.decode("ascii", errors="replace").split()
    if len(tokens) != 3 or tokens[0] != PARAMS_MAGIC or tokens[1] != "v1":
        raise DataFormatError(f"bad checkpoint header {header!r}")
    count = int(tokens[2])
    if len(blob) != 4 * count:
        raise DataFormatError(f"checkpoint payload is {len(blob)} bytes at offset {len(header)}, expected {4 * count}")
    if expected_count is not None and count != expected_count:
        raise DataFormatError(f"checkpoint holds {count} params, expected {expected_count}")
    return np.frombuffer(blob, dtype="<f4").copy()
