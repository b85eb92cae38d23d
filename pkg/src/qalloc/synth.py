"""Seeded geometric random walks for tests and self-contained demo runs."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pandas as pd

from qalloc.config import SynthConfig
from qalloc.market_data import PriceTable


def _per_asset(value, n):
    arr = np.asarray(value, dtype=float)
    return np.full(n, float(arr)) if arr.ndim == 0 else arr


def generate_market(cfg: SynthConfig, seed: int | None = None) -> PriceTable:
    """Simulate ``cfg.n_days`` business days of correlated GBM prices.

    Log-returns are ``drift - vol**2/2 + vol * z`` so the expected simple
    daily return of each asset equals its ``drift``.
    """
    n = cfg.n_assets
    seed = cfg.seed if cfg.seed is not None else seed
    rng = np.random.default_rng(seed)
    drift = _per_asset(cfg.drift, n)
    vol = _per_asset(cfg.vol, n)
    corr = np.full((n, n), cfg.correlation)
    np.fill_diagonal(corr, 1.0)
    # eigh tolerates the singular correlation = 1 case where cholesky fails
    vals, vecs = np.linalg.eigh(corr)
    root = vecs * np.sqrt(np.clip(vals, 0.0, None))

    z = rng.standard_normal((cfg.n_days - 1, n)) @ root.T
    log_ret = drift - 0.5 * vol**2 + vol * z
    log_path = np.vstack([np.zeros(n), np.cumsum(log_ret, axis=0)])
    prices = cfg.start_price * np.exp(log_path)

    dates = pd.bdate_range(cfg.start_date, periods=cfg.n_days).to_numpy().astype("datetime64[D]")
    width = len(str(n - 1))
    assets = tuple(f"A{j:0{width}d}" for j in range(n))
    return PriceTable(dates, assets, prices)


def write_csv(table: PriceTable, path: Path | str) -> None:
    frame = table.to_frame()
    frame.index = frame.index.strftime("%Y-%m-%d")
    frame.to_csv(path, float_format="%.10g")
