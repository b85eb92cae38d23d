"""Episodic market process over a filtered price table.

States are built from trend-removed prices; rewards always come from raw
prices. Acting at row ``t`` earns the ``t -> t+1`` simple return, and
there are no transaction costs, so portfolio value only ever changes by
the factor ``1 + portfolio_return``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from qalloc.errors import InsufficientHistoryError
from qalloc.market_data import LinearTrend, PriceTable, rolling_correlation
from qalloc.weights import Regime, WeightError, WeightVector


def state_size(n_assets: int) -> int:
    return n_assets * (n_assets + 2)


@dataclass(frozen=True, eq=False)
class State:
    t: int
    features: np.ndarray

    def __eq__(self, other):
        if not isinstance(other, State):
            return NotImplemented
        return self.t == other.t and np.array_equal(self.features, other.features)

    __hash__ = None


@dataclass(frozen=True)
class RewardVector:
    per_asset: np.ndarray
    portfolio: float


@dataclass(frozen=True)
class StepRecord:
    t: int
    date: np.datetime64
    weights: np.ndarray
    portfolio_return: float
    portfolio_value: float  # value after the step's return is applied


@dataclass
class EpisodeLog:
    assets: tuple[str, ...]
    initial_value: float
    records: list[StepRecord] = field(default_factory=list)

    @property
    def returns(self) -> np.ndarray:
        return np.array([r.portfolio_return for r in self.records])

    @property
    def values(self) -> np.ndarray:
        """``[initial, v_1, ..., v_K]``."""
        return np.array([self.initial_value] + [r.portfolio_value for r in self.records])

    @property
    def weights(self) -> np.ndarray:
        return np.array([r.weights for r in self.records])

    @property
    def final_value(self) -> float:
        return self.records[-1].portfolio_value if self.records else self.initial_value

    def to_csv(self, path: Path | str) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(
                ["step", "date", "portfolio_return", "portfolio_value"]
                + [f"weight_{a}" for a in self.assets]
            )
            for k, rec in enumerate(self.records):
                writer.writerow(
                    [k, str(rec.date), repr(rec.portfolio_return), repr(rec.portfolio_value)]
                    + [repr(float(w)) for w in rec.weights]
                )


class Environment:
    """One mutable cursor over an immutable price table.

    ``trend`` is the per-asset line to subtract from prices before they
    enter states. When omitted it is fitted on ``table`` itself, which is
    what training does; evaluation passes the training-range fit together
    with ``trend_offset`` (rows between the training start and this
    table's first row).
    """

    def __init__(
        self,
        table: PriceTable,
        window: int = 10,
        initial_investment: float = 1.0,
        regime: Regime | None = None,
        trend: LinearTrend | None = None,
        trend_offset: int = 0,
        ma_source: str = "detrended",
    ):
        if window < 2:
            raise ValueError("window must be >= 2")
        if not np.all(table.complete_mask()):
            raise ValueError("environment needs a table without missing prices")
        if table.n_rows < window + 1:
            raise InsufficientHistoryError(
                f"insufficient history: {table.n_rows} rows, environment needs {window + 1}"
            )
        self.table = table
        self.window = window
        self.initial_investment = float(initial_investment)
        self.regime = Regime(regime) if regime is not None else None
        self.n_assets = table.n_assets
        self.t0 = window - 1
        self.last_t = table.n_rows - 1

        raw = table.prices
        self.trend = trend if trend is not None else LinearTrend.fit(raw)
        self.detrended = self.trend.residuals(raw, trend_offset)
        if ma_source == "detrended":
            ma_input = self.detrended
        elif ma_source == "raw":
            ma_input = raw
        else:
            raise ValueError(f"unknown ma_source {ma_source!r}")
        # row k of this holds the trailing mean ending at t = k + window - 1
        self._ma = sliding_window_view(ma_input, window, axis=0).mean(axis=-1)
        self._asset_returns = raw[1:] / raw[:-1] - 1.0
        self._states: dict[int, State] = {}
        self.reset()

    @property
    def t(self) -> int:
        return self._t

    @property
    def value(self) -> float:
        return self._value

    @property
    def log(self) -> EpisodeLog:
        return self._log

    @property
    def state_size(self) -> int:
        return state_size(self.n_assets)

    def reset(self) -> State:
        self._t = self.t0
        self._value = self.initial_investment
        self._log = EpisodeLog(self.table.assets, self.initial_investment)
        return self.get_state(self.t0)

    def get_state(self, t: int) -> State:
        if not self.t0 <= t <= self.last_t:
            raise IndexError(f"state index {t} outside [{self.t0}, {self.last_t}]")
        cached = self._states.get(t)
        if cached is not None:
            return cached
        corr = rolling_correlation(self.table.prices, t, self.window)
        features = np.concatenate(
            [self.detrended[t], self._ma[t - self.window + 1], corr.ravel()]
        )
        features.flags.writeable = False
        state = State(t, features)
        self._states[t] = state
        return state

    def current_state(self) -> State:
        return self.get_state(self._t)

    def get_reward(self, action: WeightVector, t: int) -> RewardVector:
        if not self.t0 <= t < self.last_t:
            raise IndexError(f"reward index {t} outside [{self.t0}, {self.last_t})")
        self._check_action(action)
        per_asset = self._asset_returns[t].copy()
        per_asset.flags.writeable = False
        return RewardVector(per_asset, float(action.weights @ per_asset))

    def step(self, action: WeightVector) -> tuple[State, RewardVector, bool]:
        if self._t >= self.last_t:
            raise RuntimeError("episode finished; call reset()")
        reward = self.get_reward(action, self._t)
        self._value *= 1.0 + reward.portfolio
        self._log.records.append(
            StepRecord(self._t, self.table.dates[self._t], action.weights,
                       reward.portfolio, self._value)
        )
        self._t += 1
        return self.get_state(self._t), reward, self._t == self.last_t

    def _check_action(self, action: WeightVector) -> None:
        if len(action) != self.n_assets:
            raise WeightError(f"action has {len(action)} weights for {self.n_assets} assets")
        if self.regime is not None and action.regime is not self.regime:
            raise WeightError(f"{action.regime.value} action in a {self.regime.value} environment")

    def run_policy(self, policy) -> EpisodeLog:
        """Play one full episode with ``policy(state) -> WeightVector``."""
        state = self.reset()
        done = False
        while not done:
            state, _, done = self.step(policy(state))
        return self._log
