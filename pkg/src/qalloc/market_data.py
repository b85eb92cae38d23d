"""Price ingestion and the per-series preprocessing used to build states.

Input CSVs have a ``date`` column followed by one adjusted-close column
per asset. Rows with any missing, non-numeric or non-positive price are
dropped, never imputed.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd

from qalloc.errors import DataError, InsufficientHistoryError


@dataclass(frozen=True)
class PriceTable:
    """Date-aligned adjusted close prices, one column per asset.

    A table straight from :func:`load_price_table` may still hold NaN
    cells; :func:`drop_incomplete_rows` gives the filtered table that the
    rest of the engine consumes.
    """

    dates: np.ndarray  # datetime64[D], strictly increasing
    assets: tuple[str, ...]
    prices: np.ndarray  # (T, N) float64

    def __post_init__(self):
        dates = np.asarray(self.dates, dtype="datetime64[D]")
        prices = np.array(self.prices, dtype=float, copy=True)
        if prices.ndim != 2:
            raise DataError("prices must be a 2-D matrix")
        if prices.shape != (len(dates), len(self.assets)):
            raise DataError(
                f"price matrix shape {prices.shape} does not match "
                f"{len(dates)} dates x {len(self.assets)} assets"
            )
        if len(dates) > 1:
            bad = np.flatnonzero(np.diff(dates) <= np.timedelta64(0, "D"))
            if bad.size:
                raise DataError(f"dates not strictly increasing at row {bad[0] + 1}")
        dates.flags.writeable = False
        prices.flags.writeable = False
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "prices", prices)
        object.__setattr__(self, "assets", tuple(str(a) for a in self.assets))

    @property
    def n_rows(self) -> int:
        return self.prices.shape[0]

    @property
    def n_assets(self) -> int:
        return self.prices.shape[1]

    def complete_mask(self) -> np.ndarray:
        return np.all(np.isfinite(self.prices) & (self.prices > 0), axis=1)

    def take(self, rows) -> "PriceTable":
        return PriceTable(self.dates[rows], self.assets, self.prices[rows])

    def between(self, start, end) -> "PriceTable":
        """Rows with ``start <= date <= end``."""
        lo = np.datetime64(start, "D")
        hi = np.datetime64(end, "D")
        mask = (self.dates >= lo) & (self.dates <= hi)
        return self.take(np.flatnonzero(mask))

    def select(self, assets: Sequence[str]) -> "PriceTable":
        missing = [a for a in assets if a not in self.assets]
        if missing:
            raise DataError(f"assets not in table: {', '.join(missing)}")
        idx = [self.assets.index(a) for a in assets]
        return PriceTable(self.dates, tuple(assets), self.prices[:, idx])

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.prices, index=pd.DatetimeIndex(self.dates, name="date"),
                            columns=list(self.assets))

    def equals(self, other: "PriceTable") -> bool:
        return (
            self.assets == other.assets
            and np.array_equal(self.dates, other.dates)
            and np.array_equal(self.prices, other.prices, equal_nan=True)
        )


@dataclass(frozen=True)
class ReturnTable:
    dates: np.ndarray  # date of the *later* price in each pair
    assets: tuple[str, ...]
    returns: np.ndarray  # (T-1, N)

    @property
    def n_rows(self) -> int:
        return self.returns.shape[0]


def load_price_table(path: Path | str, asset_filter: Sequence[str] | None = None) -> PriceTable:
    path = Path(path)
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True)
    except (OSError, pd.errors.ParserError, UnicodeDecodeError) as exc:
        raise DataError(f"cannot read {path}: {exc}") from None
    except pd.errors.EmptyDataError:
        raise DataError(f"{path} is empty") from None

    cols = [c.strip() for c in frame.columns]
    frame.columns = cols
    if not cols or cols[0].lower() != "date":
        raise DataError(f"{path}: first column must be 'date', got {cols[:1]}")
    assets = cols[1:]
    if not assets:
        raise DataError(f"{path}: no asset columns")
    if len(set(assets)) != len(assets):
        raise DataError(f"{path}: duplicate asset columns")

    raw_dates = frame[cols[0]].str.strip()
    parsed = pd.to_datetime(raw_dates, format="ISO8601", errors="coerce")
    bad = np.flatnonzero(parsed.isna().to_numpy())
    if bad.size:
        i = int(bad[0])
        raise DataError(f"{path}: unparseable date {raw_dates.iloc[i]!r} at row {i}")
    dates = parsed.dt.tz_localize(None).to_numpy().astype("datetime64[D]")
    dup = pd.Series(dates).duplicated().to_numpy()
    if dup.any():
        i = int(np.flatnonzero(dup)[0])
        raise DataError(f"{path}: duplicate date {dates[i]} at row {i}")

    prices = np.column_stack(
        [pd.to_numeric(frame[a].str.strip(), errors="coerce").to_numpy(dtype=float) for a in assets]
    )
    order = np.argsort(dates, kind="stable")
    table = PriceTable(dates[order], tuple(assets), prices[order])
    if asset_filter is not None:
        table = table.select(list(asset_filter))
    return table


def drop_incomplete_rows(table: PriceTable, window: int = 10) -> PriceTable:
    """Keep only rows where every asset has a finite, positive price."""
    kept = table.take(np.flatnonzero(table.complete_mask()))
    if kept.n_rows < window + 2:
        raise InsufficientHistoryError(
            f"insufficient history: {kept.n_rows} complete rows, need at least {window + 2}"
        )
    return kept


def fit_linear_trend(series) -> tuple[float, float]:
    """Ordinary least-squares line ``a + b*t`` over ``t = 0..n-1``."""
    y = np.asarray(series, dtype=float)
    n = y.shape[0]
    if n < 2:
        raise ValueError("need at least 2 points to fit a trend")
    t = np.arange(n, dtype=float)
    tc = t - t.mean()
    slope = float(tc @ (y - y.mean()) / (tc @ tc))
    intercept = float(y.mean() - slope * t.mean())
    return intercept, slope


def detrend_linear(series) -> np.ndarray:
    y = np.asarray(series, dtype=float)
    a, b = fit_linear_trend(y)
    return y - (a + b * np.arange(y.shape[0]))


@dataclass(frozen=True)
class LinearTrend:
    """Per-asset OLS trend lines fitted on one span, reusable on later spans.

    ``offset`` in :meth:`residuals` is the row distance between the fit
    span's first row and the span being transformed, so a line fitted on
    the training range extrapolates into the test range without refitting.
    """

    intercepts: np.ndarray
    slopes: np.ndarray

    @classmethod
    def fit(cls, prices: np.ndarray) -> "LinearTrend":
        prices = np.asarray(prices, dtype=float)
        params = np.array([fit_linear_trend(prices[:, j]) for j in range(prices.shape[1])])
        return cls(params[:, 0].copy(), params[:, 1].copy())

    def residuals(self, prices: np.ndarray, offset: int = 0) -> np.ndarray:
        prices = np.asarray(prices, dtype=float)
        t = np.arange(offset, offset + prices.shape[0], dtype=float)[:, None]
        return prices - (self.intercepts + self.slopes * t)


def simple_returns(table: PriceTable) -> ReturnTable:
    if table.n_rows < 2:
        raise InsufficientHistoryError("need at least 2 price rows for returns")
    p = table.prices
    return ReturnTable(table.dates[1:], table.assets, p[1:] / p[:-1] - 1.0)


def _check_window(t: int, window: int, length: int):
    if window < 1:
        raise ValueError("window must be >= 1")
    if t < window - 1:
        raise InsufficientHistoryError(f"insufficient history: t={t} < window-1={window - 1}")
    if t >= length:
        raise IndexError(f"t={t} out of range for length {length}")


def moving_average(series, window: int, t: int) -> float:
    """Mean of the trailing window ``series[t-window+1 .. t]``."""
    x = np.asarray(series, dtype=float)
    _check_window(t, window, x.shape[0])
    return float(x[t - window + 1 : t + 1].mean())


def rolling_correlation(table: PriceTable | np.ndarray, t: int, window: int) -> np.ndarray:
    """Pearson correlation of every asset pair over rows ``t-window+1..t``.

    A zero-variance column carries no information, so its off-diagonal
    entries are 0. The diagonal is always 1.
    """
    prices = table.prices if isinstance(table, PriceTable) else np.asarray(table, dtype=float)
    _check_window(t, window, prices.shape[0])
    if window < 2:
        raise ValueError("correlation needs window >= 2")
    block = prices[t - window + 1 : t + 1]
    dev = block - block.mean(axis=0)
    # rescale columns first so huge price levels cannot overflow the products
    peak = np.abs(dev).max(axis=0)
    dev = dev / np.where(peak > 0, peak, 1.0)
    ss = np.einsum("ij,ij->j", dev, dev)
    cov = dev.T @ dev
    scale = np.sqrt(np.outer(ss, ss))
    with np.errstate(invalid="ignore", divide="ignore"):
        corr = np.where(scale > 0, cov / scale, 0.0)
    corr = np.clip(corr, -1.0, 1.0)
    corr = (corr + corr.T) / 2
    np.fill_diagonal(corr, 1.0)
    return corr


def summarize(raw: PriceTable, filtered: PriceTable) -> dict:
    """Row counts and per-asset date span for an ingest report."""
    spans = {}
    for j, asset in enumerate(raw.assets):
        col = raw.prices[:, j]
        ok = np.flatnonzero(np.isfinite(col) & (col > 0))
        spans[asset] = (
            [str(raw.dates[ok[0]]), str(raw.dates[ok[-1]])] if ok.size else None
        )
    return {
        "n_assets": raw.n_assets,
        "rows_raw": raw.n_rows,
        "rows_filtered": filtered.n_rows,
        "first_date": str(filtered.dates[0]),
        "last_date": str(filtered.dates[-1]),
        "asset_spans": spans,
    }
