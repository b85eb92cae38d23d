"""Baseline allocators and the risk/return metric suite."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from qalloc.config import TRADING_DAYS
from qalloc.market_data import ReturnTable
from qalloc.weights import Regime, WeightVector

SQRT_DAYS = math.sqrt(TRADING_DAYS)


class SingularCovarianceError(np.linalg.LinAlgError):
    pass


def min_variance_from_cov(cov: np.ndarray, ridge: float = 1e-8, max_cond: float = 1e14) -> np.ndarray:
    """Closed-form fully-invested minimum-variance weights (signs unconstrained)."""
    cov = np.asarray(cov, dtype=float)
    n = cov.shape[0]
    reg = cov + ridge * np.eye(n)
    cond = np.linalg.cond(reg)
    if not np.isfinite(cond) or cond > max_cond:
        raise SingularCovarianceError(
            f"covariance is singular after ridge={ridge:g} (condition number {cond:.3g})"
        )
    x = np.linalg.solve(reg, np.ones(n))
    return x / x.sum()


def min_variance_weights(returns: ReturnTable, ridge: float = 1e-8) -> WeightVector:
    r = returns.returns
    n = r.shape[1]
    if r.shape[0] < n + 2:
        raise ValueError(f"need at least {n + 2} return rows for {n} assets, got {r.shape[0]}")
    cov = np.atleast_2d(np.cov(r, rowvar=False, ddof=1))
    return WeightVector(min_variance_from_cov(cov, ridge), Regime.FULLY_INVESTED)


def max_return_weights(returns: ReturnTable) -> WeightVector:
    r = returns.returns
    if r.shape[0] < 2:
        raise ValueError("need at least 2 return rows")
    # np.argmax returns the first maximum, i.e. ties go to the lowest index
    best = int(np.argmax(r.mean(axis=0)))
    w = np.zeros(r.shape[1])
    w[best] = 1.0
    return WeightVector(w, Regime.LONG_ONLY)


def equal_weights(n: int) -> WeightVector:
    if n < 1:
        raise ValueError("equal weights need at least one asset")
    return WeightVector(np.full(n, 1.0 / n), Regime.LONG_ONLY)


def equity_curve(returns, initial: float = 1.0) -> np.ndarray:
    r = np.asarray(returns, dtype=float)
    if np.any(r <= -1):
        raise ValueError("a return <= -100% wipes out the portfolio")
    out = np.empty(r.size + 1)
    out[0] = initial
    v = float(initial)
    for k, x in enumerate(r):
        v = v * (1.0 + x)
        out[k + 1] = v
    return out


@dataclass(frozen=True)
class MetricsReport:
    mean_daily_return: float
    volatility_daily: float
    volatility_annualized: float
    sharpe_annualized: float | None
    alpha_daily: float | None  # None when the benchmark has zero variance
    beta: float | None
    final_value: float
    num_days: int

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _sample_cov(a: np.ndarray, b: np.ndarray) -> float:
    # one expression for both cov and var, so a series regressed on itself gives beta == 1.0 exactly
    return float(((a - a.mean()) * (b - b.mean())).sum() / (a.size - 1))


def compute_metrics(portfolio_returns, benchmark_returns, risk_free_rate: float = 0.0,
                    initial: float = 1.0) -> MetricsReport:
    rp = np.asarray(portfolio_returns, dtype=float)
    rb = np.asarray(benchmark_returns, dtype=float)
    if rp.shape != rb.shape or rp.ndim != 1:
        raise ValueError("portfolio and benchmark returns must be equal-length series")
    if rp.size < 2:
        raise ValueError("need at least 2 returns")
    rf_daily = risk_free_rate / TRADING_DAYS

    mean = float(rp.mean())
    vol = float(rp.std(ddof=1))
    excess = mean - rf_daily
    if vol > 0:
        sharpe = excess / vol * SQRT_DAYS
    else:
        sharpe = 0.0 if excess == 0 else None

    var_b = _sample_cov(rb, rb)
    if var_b > 0:
        beta = _sample_cov(rp, rb) / var_b
        alpha = mean - rf_daily - beta * (float(rb.mean()) - rf_daily)
    else:
        beta = alpha = None

    return MetricsReport(
        mean_daily_return=mean,
        volatility_daily=vol,
        volatility_annualized=vol * SQRT_DAYS,
        sharpe_annualized=sharpe,
        alpha_daily=alpha,
        beta=beta,
        final_value=float(equity_curve(rp, initial)[-1]),
        num_days=int(rp.size),
    )
