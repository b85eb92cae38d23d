"""End-to-end runs: ingest, train, backtest, compare.

Every function here takes a :class:`Config` and an output directory and
returns plain Python objects; the CLI only parses flags and maps
exceptions onto exit codes.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from qalloc.agent import Agent, Experience, exploit
from qalloc.analytics import (
    MetricsReport,
    compute_metrics,
    equal_weights,
    max_return_weights,
    min_variance_weights,
)
from qalloc.config import Config
from qalloc.environment import EpisodeLog, Environment, state_size
from qalloc.errors import ConfigError, DataError, NonFiniteLossError
from qalloc.market_data import (
    LinearTrend,
    PriceTable,
    drop_incomplete_rows,
    load_price_table,
    simple_returns,
    summarize,
)
from qalloc.qnet import QNetwork, init_network
from qalloc.weights import Regime

log = logging.getLogger(__name__)

STRATEGIES = ("drl", "min_variance", "max_return", "equal_weight")
COMPARISON_HEADER = ["strategy", "mean_daily", "vol_annual", "sharpe", "alpha_daily", "beta", "final_value"]
LOSS_LOG_HEADER = ["episode", "epsilon", "updates", "mean_loss", "total_reward", "final_value"]


def file_digest(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _fmt(x) -> str:
    return "" if x is None else repr(float(x))


def _action_regime(cfg: Config) -> Regime:
    if cfg.regime == "LongShort" and cfg.long_short_normalization == "signed":
        return Regime.FULLY_INVESTED
    return Regime(cfg.regime)


def ingest(cfg: Config) -> dict:
    raw = load_price_table(cfg.data_path, cfg.assets)
    filtered = drop_incomplete_rows(raw, cfg.window)
    return summarize(raw, filtered)


def load_training_table(cfg: Config) -> PriceTable:
    """Filtered rows of the training range only; test rows never leave here."""
    train_range, _ = cfg.require_ranges()
    raw = load_price_table(cfg.data_path, cfg.assets)
    return drop_incomplete_rows(raw.between(train_range.start, train_range.end), cfg.window)


@dataclass
class EvalContext:
    train: PriceTable
    test: PriceTable
    trend_offset: int  # filtered rows from the first training row to the first test row
    raw: PriceTable


def load_eval_context(cfg: Config) -> EvalContext:
    train_range, test_range = cfg.require_ranges()
    raw = load_price_table(cfg.data_path, cfg.assets)
    full = raw.take(np.flatnonzero(raw.complete_mask()))
    train = drop_incomplete_rows(full.between(train_range.start, train_range.end), cfg.window)
    test = full.between(test_range.start, test_range.end)
    if test.n_rows < cfg.window + 1:
        raise DataError(
            f"insufficient history: test range has {test.n_rows} complete rows, needs {cfg.window + 1}"
        )
    offset = int(np.searchsorted(full.dates, test.dates[0]) - np.searchsorted(full.dates, train.dates[0]))
    return EvalContext(train, test, offset, raw)


# ---------------------------------------------------------------- training


def train(cfg: Config, out_dir: Path | str) -> dict:
    started = time.perf_counter()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    table = load_training_table(cfg)
    n = table.n_assets
    regime = _action_regime(cfg)

    env = Environment(table, cfg.window, cfg.initial_investment, regime=regime,
                      ma_source=cfg.ma_source)
    net = init_network([state_size(n), *cfg.hidden_dims, n], cfg.rng_seed)
    rng = np.random.default_rng(np.random.SeedSequence(cfg.rng_seed, spawn_key=(1,)))
    agent = Agent(net, rng, cfg.regime, cfg.buffer_capacity, cfg.learning_rate,
                  cfg.gamma, cfg.long_short_normalization, cfg.softmax_temperature)

    rows = []
    for episode in range(cfg.episodes):
        epsilon = cfg.epsilon(episode)
        state = env.reset()
        losses = []
        done = False
        step = 0
        while not done:
            action = agent.act(state, epsilon)
            next_state, reward, done = env.step(action)
            agent.remember(Experience(state, action, next_state, reward))
            try:
                loss = agent.replay()
            except NonFiniteLossError as exc:
                raise exc.at(episode, step) from None
            if loss is not None:
                losses.append(loss)
            state = next_state
            step += 1
        mean_loss = float(np.mean(losses)) if losses else None
        rows.append([episode, repr(epsilon), len(losses), _fmt(mean_loss),
                     repr(float(env.log.returns.sum())), repr(env.value)])
        if episode % 50 == 0 or episode == cfg.episodes - 1:
            log.info("episode %d/%d eps=%.3f loss=%s value=%.4f",
                     episode + 1, cfg.episodes, epsilon, mean_loss, env.value)

    loss_path = out / "loss_log.csv"
    with open(loss_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(LOSS_LOG_HEADER)
        writer.writerows(rows)

    ckpt_path = out / "checkpoint.json"
    net.save(ckpt_path, meta={
        "assets": list(table.assets),
        "window": cfg.window,
        "regime": cfg.regime,
        "long_short_normalization": cfg.long_short_normalization,
        "ma_source": cfg.ma_source,
        "train_first_date": str(table.dates[0]),
        "trend_intercepts": env.trend.intercepts.tolist(),
        "trend_slopes": env.trend.slopes.tolist(),
    })
    return _write_manifest(cfg, out / "manifest.json", started,
                           {"checkpoint": ckpt_path, "loss_log": loss_path})


def _write_manifest(cfg: Config, path: Path, started: float, artifacts: dict) -> dict:
    manifest = {
        "config_hash": cfg.digest(),
        "rng_seed": cfg.rng_seed,
        "data_digest": file_digest(cfg.data_path),
        "train_range": cfg.train_range.to_list() if cfg.train_range else None,
        "test_range": cfg.test_range.to_list() if cfg.test_range else None,
        "artifacts": {k: str(v) for k, v in artifacts.items()},
        "wall_clock_seconds": round(time.perf_counter() - started, 3),
    }
    path.write_text(json.dumps(manifest, indent=2))
    return manifest


# -------------------------------------------------------------- evaluation


def load_checkpoint(cfg: Config, path: Path | str, n_assets: int) -> tuple[QNetwork, dict]:
    try:
        net, meta = QNetwork.load(path)
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError(f"cannot load checkpoint {path}: {exc}") from None
    expected = (state_size(n_assets), n_assets)
    if (net.dims[0], net.dims[-1]) != expected:
        raise ConfigError(
            f"checkpoint network shape {net.dims} (input {net.dims[0]}, output {net.dims[-1]}) "
            f"does not fit {n_assets} assets (input {expected[0]}, output {expected[1]})"
        )
    if meta.get("window", cfg.window) != cfg.window:
        raise ConfigError(f"checkpoint window {meta['window']} != config window {cfg.window}")
    return net, meta


def _test_env(cfg: Config, ctx: EvalContext, regime: Regime, trend: LinearTrend) -> Environment:
    return Environment(ctx.test, cfg.window, cfg.initial_investment, regime=regime,
                       trend=trend, trend_offset=ctx.trend_offset, ma_source=cfg.ma_source)


def _training_trend(ctx: EvalContext, meta: dict | None) -> LinearTrend:
    if meta and "trend_intercepts" in meta:
        return LinearTrend(np.array(meta["trend_intercepts"]), np.array(meta["trend_slopes"]))
    return LinearTrend.fit(ctx.train.prices)


def benchmark_returns(cfg: Config, ctx: EvalContext) -> np.ndarray:
    """Benchmark returns over exactly the steps a test episode trades."""
    steps = slice(cfg.window - 1, ctx.test.n_rows - 1)
    if cfg.benchmark == "equal_weight":
        p = ctx.test.prices
        return (p[1:] / p[:-1] - 1.0)[steps] @ equal_weights(ctx.test.n_assets).weights
    if cfg.benchmark in ctx.test.assets:
        j = ctx.test.assets.index(cfg.benchmark)
        col = ctx.test.prices[:, j]
    else:
        # a benchmark column outside the traded universe
        full = load_price_table(cfg.data_path)
        if cfg.benchmark not in full.assets:
            raise ConfigError(f"benchmark {cfg.benchmark!r} is not a column of {cfg.data_path}")
        j = full.assets.index(cfg.benchmark)
        idx = np.searchsorted(full.dates, ctx.test.dates)
        col = full.prices[idx, j]
        if not np.all(np.isfinite(col) & (col > 0)):
            raise DataError(f"benchmark {cfg.benchmark!r} has missing prices in the test range")
    return (col[1:] / col[:-1] - 1.0)[steps]


def evaluate_drl(cfg: Config, ctx: EvalContext, net: QNetwork, meta: dict | None) -> EpisodeLog:
    regime = Regime(cfg.regime)
    env = _test_env(cfg, ctx, _action_regime(cfg), _training_trend(ctx, meta))
    # greedy policy: no exploration when evaluating
    return env.run_policy(
        lambda s: exploit(net, s, regime, cfg.long_short_normalization, cfg.softmax_temperature)
    )


def evaluate_fixed(cfg: Config, ctx: EvalContext, weights) -> EpisodeLog:
    env = _test_env(cfg, ctx, weights.regime, _training_trend(ctx, None))
    return env.run_policy(lambda s: weights)


def fixed_weights(cfg: Config, ctx: EvalContext, strategy: str):
    """Baseline weights estimated on the training range, held through the test range."""
    if strategy == "equal_weight":
        return equal_weights(ctx.train.n_assets)
    train_returns = simple_returns(ctx.train)
    if strategy == "min_variance":
        return min_variance_weights(train_returns, cfg.ridge)
    if strategy == "max_return":
        return max_return_weights(train_returns)
    raise ValueError(f"unknown strategy {strategy!r}")


def _report(cfg: Config, ctx: EvalContext, episode: EpisodeLog) -> MetricsReport:
    bench = benchmark_returns(cfg, ctx)
    return compute_metrics(episode.returns, bench, cfg.risk_free_rate, cfg.initial_investment)


def backtest(cfg: Config, checkpoint: Path | str, out_dir: Path | str) -> tuple[MetricsReport, EpisodeLog]:
    started = time.perf_counter()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ctx = load_eval_context(cfg)
    net, meta = load_checkpoint(cfg, checkpoint, ctx.test.n_assets)
    episode = evaluate_drl(cfg, ctx, net, meta)
    report = _report(cfg, ctx, episode)
    episode.to_csv(out / "equity.csv")
    (out / "metrics.json").write_text(report.to_json())
    _write_manifest(cfg, out / "backtest_manifest.json", started,
                    {"checkpoint": checkpoint, "equity": out / "equity.csv",
                     "metrics": out / "metrics.json"})
    return report, episode


def run_strategy(cfg: Config, ctx: EvalContext, strategy: str, checkpoint=None) -> tuple[MetricsReport, EpisodeLog]:
    if strategy == "drl":
        if checkpoint is None:
            raise ConfigError("the drl strategy needs a checkpoint")
        net, meta = load_checkpoint(cfg, checkpoint, ctx.test.n_assets)
        episode = evaluate_drl(cfg, ctx, net, meta)
    else:
        episode = evaluate_fixed(cfg, ctx, fixed_weights(cfg, ctx, strategy))
    return _report(cfg, ctx, episode), episode


def compare(cfg: Config, checkpoint: Path | str | None, out_dir: Path | str,
            strategies=STRATEGIES) -> list[dict]:
    started = time.perf_counter()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ctx = load_eval_context(cfg)
    rows = []
    reports = {}
    for name in strategies:
        try:
            report, episode = run_strategy(cfg, ctx, name, checkpoint)
        except Exception as exc:  # one failed strategy must not sink the table
            log.warning("strategy %s failed: %s", name, exc)
            rows.append({"strategy": name, "failed": True, "error": str(exc)})
            reports[name] = {"failed": True, "error": str(exc)}
            continue
        episode.to_csv(out / f"equity_{name}.csv")
        reports[name] = report.to_dict()
        rows.append({"strategy": name, "failed": False, "report": report})

    table_path = out / "comparison.csv"
    with open(table_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(COMPARISON_HEADER)
        for row in rows:
            if row["failed"]:
                writer.writerow([row["strategy"]] + ["failed"] * (len(COMPARISON_HEADER) - 1))
                continue
            r = row["report"]
            writer.writerow([row["strategy"], _fmt(r.mean_daily_return), _fmt(r.volatility_annualized),
                             _fmt(r.sharpe_annualized), _fmt(r.alpha_daily), _fmt(r.beta),
                             _fmt(r.final_value)])
    (out / "comparison.json").write_text(json.dumps(reports, indent=2))
    _write_manifest(cfg, out / "compare_manifest.json", started,
                    {"checkpoint": checkpoint, "comparison": table_path})
    return rows
