"""Dense ReLU classifier split at a cut layer, trained with SGD + momentum.

The client half maps raw features to the cut-layer activations ("smashed
data"); the server half maps those to logits. Training one batch is the
three-call protocol

    smashed = forward_client(model, X)
    loss, grad = forward_server_and_backward(model, smashed, y)
    backward_client(model, smashed, grad)

which yields the same parameters as training the composed network directly
(see :class:`MonolithicNet`).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import rng as streams

Params = list[np.ndarray]   # [W0, b0, W1, b1, ...]


def init_params(layer_dims: Sequence[int], seed: int) -> Params:
    """He-style uniform init, U(-sqrt(6/fan_in), +sqrt(6/fan_in)); zero biases."""
    g = streams.keyed_rng(seed, streams.INIT)
    params = []
    for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
        bound = np.sqrt(6.0 / fan_in)
        params.append(g.uniform(-bound, bound, size=(fan_in, fan_out)))
        params.append(np.zeros(fan_out))
    return params


def param_count(params: Params) -> int:
    return int(sum(p.size for p in params))


def softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy(logits: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean softmax cross-entropy and its gradient w.r.t. the logits."""
    z = logits - logits.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=1))
    n = len(y)
    loss = float((logsum - z[np.arange(n), y]).mean())
    grad = softmax(logits)
    grad[np.arange(n), y] -= 1.0
    return loss, grad / n


def sgd_momentum(params: Params, grads: Params, velocity: Params, lr: float,
                 momentum: float) -> None:
    """In-place ``v = m*v + g; p -= lr*v``."""
    for p, g, v in zip(params, grads, velocity):
        v *= momentum
        v += g
        p -= lr * v


class _Half:
    """A stack of dense layers with cached activations for one backward pass."""

    def __init__(self, params: Params, relu_last: bool):
        self.params = [p.copy() for p in params]
        self.velocity = [np.zeros_like(p) for p in self.params]
        self.relu_last = relu_last
        self._inputs: list[np.ndarray] | None = None
        self._pre: list[np.ndarray] | None = None

    @property
    def n_layers(self) -> int:
        return len(self.params) // 2

    def forward(self, X: np.ndarray, cache: bool = True) -> np.ndarray:
        inputs, pre = [], []
        a = X
        for i in range(self.n_layers):
            W, b = self.params[2 * i], self.params[2 * i + 1]
            inputs.append(a)
            z = a @ W + b
            pre.append(z)
            a = np.maximum(z, 0.0) if (i < self.n_layers - 1 or self.relu_last) else z
        if cache:
            self._inputs, self._pre = inputs, pre
        return a

    def backward(self, grad_out: np.ndarray) -> tuple[Params, np.ndarray]:
        if self._inputs is None:
            raise RuntimeError("backward called without a cached forward pass")
        grads: Params = [None] * len(self.params)  # type: ignore[list-item]
        g = grad_out
        for i in reversed(range(self.n_layers)):
            if i < self.n_layers - 1 or self.relu_last:
                g = g * (self._pre[i] > 0)
            W = self.params[2 * i]
            grads[2 * i] = self._inputs[i].T @ g
            grads[2 * i + 1] = g.sum(axis=0)
            g = g @ W.T
        self._inputs = self._pre = None
        return grads, g

    def step(self, grads: Params, lr: float, momentum: float) -> None:
        sgd_momentum(self.params, grads, self.velocity, lr, momentum)

    def reset_momentum(self) -> None:
        for v in self.velocity:
            v[...] = 0.0


@dataclass
class SmashedBatch:
    activations: np.ndarray
    requires_grad: bool = True
    back: np.ndarray | None = None
    token: int = 0


@dataclass
class SplitModel:
    layer_dims: tuple[int, ...]
    cut_index: int
    client: _Half = field(repr=False)
    server: _Half = field(repr=False)
    lr: float = 0.01
    momentum: float = 0.9
    _token: int = field(default=0, repr=False)

    @classmethod
    def from_params(cls, layer_dims: Sequence[int], cut_index: int, params: Params,
                    lr: float = 0.01, momentum: float = 0.9) -> "SplitModel":
        n_layers = len(layer_dims) - 1
        if not 1 <= cut_index < n_layers:
            raise ValueError(f"cut_index must be in [1, {n_layers - 1}]")
        if len(params) != 2 * n_layers:
            raise ValueError("parameter list does not match layer_dims")
        k = 2 * cut_index
        return cls(tuple(layer_dims), cut_index, _Half(params[:k], relu_last=True),
                   _Half(params[k:], relu_last=False), lr, momentum)

    @classmethod
    def from_halves(cls, layer_dims, cut_index, client_params: Params, server_params: Params,
                    lr=0.01, momentum=0.9) -> "SplitModel":
        return cls.from_params(layer_dims, cut_index, list(client_params) + list(server_params),
                               lr, momentum)

    @property
    def client_params(self) -> Params:
        return self.client.params

    @property
    def server_params(self) -> Params:
        return self.server.params

    @property
    def cut_width(self) -> int:
        return self.layer_dims[self.cut_index]

    def all_params(self) -> Params:
        return self.client.params + self.server.params

    def reset_momentum(self) -> None:
        self.client.reset_momentum()
        self.server.reset_momentum()


def forward_client(model: SplitModel, batch: np.ndarray) -> SmashedBatch:
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim != 2 or batch.shape[1] != model.layer_dims[0]:
        raise ValueError(f"batch width {batch.shape[-1]} != input width {model.layer_dims[0]}")
    model._token += 1
    return SmashedBatch(model.client.forward(batch), token=model._token)


def forward_server_and_backward(model: SplitModel, smashed: SmashedBatch,
                                labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Server forward, loss, backward and momentum step; returns (loss, d loss / d smashed)."""
    acts = smashed.activations
    if acts.ndim != 2 or acts.shape[1] != model.cut_width:
        raise ValueError(f"smashed width {acts.shape[-1]} != cut width {model.cut_width}")
    labels = np.asarray(labels, dtype=np.int64)
    n_classes = model.layer_dims[-1]
    if labels.shape != (acts.shape[0],) or labels.min() < 0 or labels.max() >= n_classes:
        raise ValueError("labels must be one class id in [0, C) per row")
    logits = model.server.forward(acts)
    loss, dlogits = cross_entropy(logits, labels)
    grads, client_grad = model.server.backward(dlogits)
    model.server.step(grads, model.lr, model.momentum)
    smashed.back = client_grad
    return loss, client_grad


def backward_client(model: SplitModel, smashed: SmashedBatch, client_grad: np.ndarray) -> None:
    if smashed.token != model._token or model.client._inputs is None:
        raise RuntimeError("stale or missing client forward cache")
    if client_grad.shape != smashed.activations.shape:
        raise ValueError("client_grad shape does not match smashed activations")
    grads, _ = model.client.backward(client_grad)
    model.client.step(grads, model.lr, model.momentum)


def split_train_step(model: SplitModel, X: np.ndarray, y: np.ndarray) -> float:
    smashed = forward_client(model, X)
    loss, grad = forward_server_and_backward(model, smashed, y)
    backward_client(model, smashed, grad)
    return loss


class MonolithicNet:
    """The same network trained without a split; used for the centralized arm
    and as the reference trajectory for split training."""

    def __init__(self, layer_dims: Sequence[int], params: Params, lr: float = 0.01,
                 momentum: float = 0.9):
        self.layer_dims = tuple(layer_dims)
        self.params = [p.copy() for p in params]
        self.velocity = [np.zeros_like(p) for p in self.params]
        self.lr = lr
        self.momentum = momentum

    def logits(self, X: np.ndarray) -> np.ndarray:
        a = X
        L = len(self.params) // 2
        for i in range(L):
            z = a @ self.params[2 * i] + self.params[2 * i + 1]
            a = np.maximum(z, 0.0) if i < L - 1 else z
        return a

    def gradients(self, X: np.ndarray, y: np.ndarray) -> tuple[float, Params]:
        L = len(self.params) // 2
        acts, pres = [X], []
        a = X
        for i in range(L):
            z = a @ self.params[2 * i] + self.params[2 * i + 1]
            pres.append(z)
            a = np.maximum(z, 0.0) if i < L - 1 else z
            acts.append(a)
        loss, g = cross_entropy(a, y)
        grads: Params = [None] * len(self.params)  # type: ignore[list-item]
        for i in reversed(range(L)):
            if i < L - 1:
                g = g * (pres[i] > 0)
            grads[2 * i] = acts[i].T @ g
            grads[2 * i + 1] = g.sum(axis=0)
            g = g @ self.params[2 * i].T
        return loss, grads

    def loss(self, X: np.ndarray, y: np.ndarray) -> float:
        return cross_entropy(self.logits(X), y)[0]

    def train_step(self, X: np.ndarray, y: np.ndarray) -> float:
        loss, grads = self.gradients(X, y)
        sgd_momentum(self.params, grads, self.velocity, self.lr, self.momentum)
        return loss


def batches(n: int, batch_size: int, rng: np.random.Generator) -> list[np.ndarray]:
    perm = rng.permutation(n)
    return [perm[i:i + batch_size] for i in range(0, n, batch_size)]


def fedavg(weight_sets: Mapping[int, Params]) -> Params | None:
    """Unweighted per-parameter mean, summed in ascending device-id order.

    Returns None when there is nothing to average; callers keep the previous
    global weights.
    """
    if not weight_sets:
        return None
    ids = sorted(weight_sets)
    shapes = [p.shape for p in weight_sets[ids[0]]]
    acc = [np.zeros(s) for s in shapes]
    for i in ids:
        ps = weight_sets[i]
        if [p.shape for p in ps] != shapes:
            raise ValueError(f"parameter shapes of device {i} do not match")
        for a, p in zip(acc, ps):
            a += p
    return [a / len(ids) for a in acc]


def evaluate(client_params: Params, server_params: Params, X: np.ndarray,
             y: np.ndarray) -> tuple[float, float]:
    """Accuracy and mean cross-entropy of the composed network."""
    if len(y) == 0:
        raise ValueError("empty test set")
    a = np.asarray(X, dtype=np.float64)
    params = list(client_params) + list(server_params)
    L = len(params) // 2
    for i in range(L):
        z = a @ params[2 * i] + params[2 * i + 1]
        a = np.maximum(z, 0.0) if i < L - 1 else z
    loss, _ = cross_entropy(a, np.asarray(y, dtype=np.int64))
    acc = float((a.argmax(axis=1) == y).mean())
    return acc, loss


def save_checkpoint(layer_dims: Sequence[int], cut_index: int, params: Params,
                    path: str | Path) -> None:
    doc = {
        "layer_dims": list(layer_dims),
        "cut_index": cut_index,
        "tensors": [{"shape": list(p.shape), "data": [float(v) for v in p.ravel()]}
                    for p in params],
    }
    Path(path).write_text(json.dumps(doc), encoding="utf-8")


def load_checkpoint(path: str | Path) -> tuple[tuple[int, ...], int, Params]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    params = [np.array(t["data"], dtype=np.float64).reshape(t["shape"]) for t in doc["tensors"]]
    return tuple(doc["layer_dims"]), int(doc["cut_index"]), params
