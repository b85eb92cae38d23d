"""Weight-allocating agent: epsilon-greedy policy plus a FIFO replay buffer."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from qalloc.environment import RewardVector, State
from qalloc.qnet import QNetwork, TrainBatch, train_batch
from qalloc.weights import Regime, WeightVector

__all__ = [
    "Agent", "Experience", "ReplayBuffer", "Regime", "WeightVector",
    "act", "exp_replay", "exploit", "explore_long", "explore_long_short", "remember",
]


@dataclass(frozen=True)
class Experience:
    prev_state: State
    action: WeightVector
    next_state: State
    reward: RewardVector

    def __post_init__(self):
        if self.next_state.t != self.prev_state.t + 1:
            raise ValueError(
                f"experience must span one step, got t={self.prev_state.t} -> {self.next_state.t}"
            )


class ReplayBuffer:
    def __init__(self, capacity: int = 32):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._entries: deque[Experience] = deque(maxlen=capacity)

    def __len__(self):
        return len(self._entries)

    def __iter__(self):
        return iter(self._entries)

    @property
    def full(self) -> bool:
        return len(self._entries) == self.capacity

    def push(self, exp: Experience) -> None:
        self._entries.append(exp)

    def entries(self) -> list[Experience]:
        return list(self._entries)


def remember(buffer: ReplayBuffer, exp: Experience) -> None:
    buffer.push(exp)


def explore_long(rng: np.random.Generator, n_assets: int) -> WeightVector:
    while True:
        draw = rng.uniform(0.0, 1.0, n_assets)
        total = draw.sum()
        if total > 0:
            return WeightVector(draw / total, Regime.LONG_ONLY)


def normalize_long_short(raw: np.ndarray, norm: str = "l1") -> WeightVector | None:
    """Scale a signed vector to unit gross exposure (``l1``) or unit net sum
    (``signed``). Returns None when the divisor is zero.

    The ``signed`` variant blows up as the net sum approaches zero; it is
    kept for comparison runs only.
    """
    if norm == "l1":
        gross = np.abs(raw).sum()
        return WeightVector(raw / gross, Regime.LONG_SHORT) if gross > 0 else None
    if norm == "signed":
        net = raw.sum()
        if abs(net) < 1e-12:
            return None
        return WeightVector(raw / net, Regime.FULLY_INVESTED)
    raise ValueError(f"unknown long-short normalization {norm!r}")


def explore_long_short(rng: np.random.Generator, n_assets: int, norm: str = "l1") -> WeightVector:
    while True:
        w = normalize_long_short(rng.uniform(-1.0, 1.0, n_assets), norm)
        if w is not None:
            return w


def softmax(q: np.ndarray, temperature: float = 1.0) -> np.ndarray:
    z = q / temperature
    e = np.exp(z - z.max())
    return e / e.sum()


def exploit(net: QNetwork, state: State, regime: Regime, norm: str = "l1",
            temperature: float = 1.0) -> WeightVector:
    q = net.forward(state)
    if not np.all(np.isfinite(q)):
        raise FloatingPointError(f"non-finite Q-values at t={state.t}")
    return weights_from_q(q, regime, norm, temperature)


def weights_from_q(q: np.ndarray, regime: Regime, norm: str = "l1",
                   temperature: float = 1.0) -> WeightVector:
    """Long-only: softmax. Long-short: sign-preserving scaling to unit gross
    exposure, falling back to equal weights when every Q-value is zero."""
    regime = Regime(regime)
    if regime is Regime.LONG_ONLY:
        return WeightVector(softmax(q, temperature), Regime.LONG_ONLY)
    w = normalize_long_short(q, norm)
    if w is None:
        n = q.shape[0]
        return WeightVector(np.full(n, 1.0 / n), Regime.LONG_SHORT if norm == "l1" else Regime.FULLY_INVESTED)
    return w


def explore(rng: np.random.Generator, n_assets: int, regime: Regime, norm: str = "l1") -> WeightVector:
    if Regime(regime) is Regime.LONG_ONLY:
        return explore_long(rng, n_assets)
    return explore_long_short(rng, n_assets, norm)


def act(net: QNetwork, state: State, epsilon: float, rng: np.random.Generator,
        regime: Regime, norm: str = "l1", temperature: float = 1.0) -> WeightVector:
    """Epsilon-greedy choice. The coin flip always consumes exactly one
    uniform from ``rng``, whichever branch is taken."""
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon {epsilon} outside [0, 1]")
    if rng.random() < epsilon:
        return explore(rng, net.output_dim, regime, norm)
    return exploit(net, state, regime, norm, temperature)


def replay_batch(buffer: ReplayBuffer, net: QNetwork, gamma: float = 0.0) -> TrainBatch:
    entries = buffer.entries()
    states = np.stack([e.prev_state.features for e in entries])
    targets = np.stack([e.reward.per_asset for e in entries])
    if gamma:
        next_q = net.forward(np.stack([e.next_state.features for e in entries]))
        targets = targets + gamma * next_q.max(axis=1, keepdims=True)
    return TrainBatch(states, targets)


def exp_replay(buffer: ReplayBuffer, net: QNetwork, learning_rate: float,
               gamma: float = 0.0) -> float | None:
    """Train on the whole buffer once it is full. Returns the loss, or None
    (no update) while the buffer is still filling."""
    if not buffer.full:
        return None
    return train_batch(net, replay_batch(buffer, net, gamma), learning_rate)


class Agent:
    """Bundles the network, buffer, RNG and regime used by a training loop."""

    def __init__(self, net: QNetwork, rng: np.random.Generator, regime: Regime | str,
                 buffer_capacity: int = 32, learning_rate: float = 1e-3,
                 gamma: float = 0.0, norm: str = "l1", temperature: float = 1.0):
        self.net = net
        self.rng = rng
        self.regime = Regime(regime)
        self.buffer = ReplayBuffer(buffer_capacity)
        self.learning_rate = learning_rate
        self.gamma = gamma
        self.norm = norm
        self.temperature = temperature

    @property
    def action_regime(self) -> Regime:
        """Regime the emitted vectors satisfy."""
        if self.regime is Regime.LONG_SHORT and self.norm == "signed":
            return Regime.FULLY_INVESTED
        return self.regime

    def act(self, state: State, epsilon: float) -> WeightVector:
        return act(self.net, state, epsilon, self.rng, self.regime, self.norm, self.temperature)

    def greedy(self, state: State) -> WeightVector:
        return exploit(self.net, state, self.regime, self.norm, self.temperature)

    def remember(self, exp: Experience) -> None:
        remember(self.buffer, exp)

    def replay(self) -> float | None:
        return exp_replay(self.buffer, self.net, self.learning_rate, self.gamma)
