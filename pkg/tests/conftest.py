import json
from pathlib import Path

import numpy as np
import pytest

from qalloc.market_data import PriceTable


def make_table(prices, start="2021-01-04", assets=None):
    prices = np.asarray(prices, dtype=float)
    if prices.ndim == 1:
        prices = prices[:, None]
    dates = np.datetime64(start, "D") + np.arange(prices.shape[0])
    assets = assets or [f"A{j}" for j in range(prices.shape[1])]
    return PriceTable(dates, tuple(assets), prices)


def random_table(rng, n_rows, n_assets, vol=0.02):
    steps = rng.normal(0.0, vol, size=(n_rows - 1, n_assets))
    prices = 100.0 * np.exp(np.vstack([np.zeros(n_assets), np.cumsum(steps, axis=0)]))
    return make_table(prices)


def write_prices_csv(path: Path, dates, columns: dict):
    lines = ["date," + ",".join(columns)]
    for i, d in enumerate(dates):
        lines.append(",".join([str(d)] + [str(col[i]) for col in columns.values()]))
    path.write_text("\n".join(lines) + "\n")


def write_config(path: Path, **fields):
    path.write_text(json.dumps(fields))
    return path


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# acceptance criteria report one summary line each, printed after the run
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def criterion():
    def record(number: int, ok: bool, detail: str):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
