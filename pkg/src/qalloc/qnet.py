"""Feedforward Q-network in plain numpy.

ReLU hidden layers, identity output with one unit per asset. Training is
full-batch gradient descent on the mean squared error over batch rows and
output heads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from qalloc.errors import NonFiniteLossError

CHECKPOINT_FORMAT = "qalloc.qnet"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class TrainBatch:
    states: np.ndarray  # (B, D)
    targets: np.ndarray  # (B, N)

    def __post_init__(self):
        states = np.atleast_2d(np.asarray(self.states, dtype=float))
        targets = np.atleast_2d(np.asarray(self.targets, dtype=float))
        if states.shape[0] != targets.shape[0]:
            raise ValueError(f"{states.shape[0]} states but {targets.shape[0]} target rows")
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "targets", targets)

    def __len__(self):
        return self.states.shape[0]


class QNetwork:
    def __init__(self, dims, seed: int, weights: list[np.ndarray], biases: list[np.ndarray]):
        self.dims = [int(d) for d in dims]
        self.seed = int(seed)
        self.weights = weights
        self.biases = biases
        for k, (w, b) in enumerate(zip(weights, biases)):
            if w.shape != (self.dims[k], self.dims[k + 1]) or b.shape != (self.dims[k + 1],):
                raise ValueError(f"layer {k} parameter shapes do not match dims {self.dims}")

    @property
    def input_dim(self) -> int:
        return self.dims[0]

    @property
    def output_dim(self) -> int:
        return self.dims[-1]

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def copy(self) -> "QNetwork":
        return QNetwork(self.dims, self.seed,
                        [w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def forward(self, state) -> np.ndarray:
        """Q-values for one state vector (or a ``(B, D)`` stack of them)."""
        x = np.asarray(getattr(state, "features", state), dtype=float)
        if x.shape[-1] != self.input_dim:
            raise ValueError(f"state length {x.shape[-1]} != network input {self.input_dim}")
        return self._forward(x)[-1]

    def _forward(self, x: np.ndarray) -> list[np.ndarray]:
        acts = [x]
        last = len(self.weights) - 1
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = acts[-1] @ w + b
            acts.append(z if k == last else np.maximum(z, 0.0))
        return acts

    def backward(self, acts: list[np.ndarray], d_out: np.ndarray):
        """Parameter gradients given ``d loss / d output``."""
        grads_w = [None] * len(self.weights)
        grads_b = [None] * len(self.biases)
        delta = d_out
        for k in range(len(self.weights) - 1, -1, -1):
            grads_w[k] = acts[k].T @ delta
            grads_b[k] = delta.sum(axis=0)
            if k > 0:
                delta = (delta @ self.weights[k].T) * (acts[k] > 0)
        return grads_w, grads_b

    def loss(self, batch: TrainBatch) -> float:
        resid = self.forward(batch.states) - batch.targets
        return float(np.mean(resid**2))

    def loss_and_grads(self, batch: TrainBatch):
        if batch.targets.shape[1] != self.output_dim:
            raise ValueError(f"targets have {batch.targets.shape[1]} heads, network has {self.output_dim}")
        acts = self._forward(batch.states)
        resid = acts[-1] - batch.targets
        # overflow is expected here and reported below as a numeric abort
        with np.errstate(over="ignore", invalid="ignore"):
            sq = resid**2
            loss = float(np.mean(sq))
        if not np.isfinite(loss):
            rows = np.flatnonzero(~np.isfinite(sq).all(axis=1))
            raise NonFiniteLossError(int(rows[0]) if rows.size else 0, loss)
        grads_w, grads_b = self.backward(acts, 2.0 * resid / resid.size)
        return loss, grads_w, grads_b

    # flat parameter view, used by the gradient check
    def get_flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for pair in zip(self.weights, self.biases) for p in pair])

    def set_flat(self, flat: np.ndarray) -> None:
        i = 0
        for k in range(len(self.weights)):
            for arr in (self.weights[k], self.biases[k]):
                arr[...] = flat[i : i + arr.size].reshape(arr.shape)
                i += arr.size

    def save(self, path: Path | str, meta: dict | None = None) -> None:
        blob = {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "dims": self.dims,
            "seed": self.seed,
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
            "meta": meta or {},
        }
        Path(path).write_text(json.dumps(blob))

    @classmethod
    def load(cls, path: Path | str) -> tuple["QNetwork", dict]:
        blob = json.loads(Path(path).read_text())
        if blob.get("format") != CHECKPOINT_FORMAT or blob.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"{path} is not a version-{CHECKPOINT_VERSION} network checkpoint")
        net = cls(
            blob["dims"],
            blob["seed"],
            [np.array(w, dtype=float).reshape(a, b)
             for w, a, b in zip(blob["weights"], blob["dims"][:-1], blob["dims"][1:])],
            [np.array(b, dtype=float).reshape(-1) for b in blob["biases"]],
        )
        return net, blob.get("meta", {})


def init_network(dims, seed: int) -> QNetwork:
    """Glorot-uniform weights, zero biases; deterministic in ``seed``."""
    dims = list(dims)
    if len(dims) < 2:
        raise ValueError("need at least input and output widths")
    if any(int(d) != d or d < 1 for d in dims):
        raise ValueError(f"layer widths must be positive integers: {dims}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return QNetwork(dims, seed, weights, biases)


def train_batch(net: QNetwork, batch: TrainBatch, learning_rate: float) -> float:
    """One gradient-descent step; returns the loss *before* the step."""
    loss, grads_w, grads_b = net.loss_and_grads(batch)
    for k in range(len(net.weights)):
        net.weights[k] -= learning_rate * grads_w[k]
        net.biases[k] -= learning_rate * grads_b[k]
    return loss


def gradient_check(net: QNetwork, batch: TrainBatch, epsilon: float = 1e-5) -> float:
    """Max of ``|analytic - numeric| / max(1, |numeric|)`` over all parameters.

    Numeric gradients are central differences, one parameter at a time, so
    keep this to small networks.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    _, grads_w, grads_b = net.loss_and_grads(batch)
    analytic = np.concatenate([g.ravel() for pair in zip(grads_w, grads_b) for g in pair])
    probe = net.copy()
    theta = probe.get_flat()
    numeric = np.empty_like(theta)
    for i in range(theta.size):
        orig = theta[i]
        theta[i] = orig + epsilon
        probe.set_flat(theta)
        up = probe.loss(batch)
        theta[i] = orig - epsilon
        probe.set_flat(theta)
        down = probe.loss(batch)
        theta[i] = orig
        numeric[i] = (up - down) / (2 * epsilon)
    return float(np.max(np.abs(analytic - numeric) / np.maximum(1.0, np.abs(numeric))))
