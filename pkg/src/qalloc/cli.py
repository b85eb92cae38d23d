"""Command-line entry point.

    qalloc synth    --config cfg.json --out data/
    qalloc ingest   --config cfg.json
    qalloc train    --config cfg.json --out runs/a [--seed 7]
    qalloc backtest --config cfg.json --checkpoint runs/a/checkpoint.json --out runs/a
    qalloc compare  --config cfg.json --checkpoint runs/a/checkpoint.json --out runs/a

Exit codes: 0 ok, 2 config error, 3 data error, 4 numeric abort.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from qalloc import pipeline
from qalloc.config import Config, SynthConfig
from qalloc.errors import ConfigError, QallocError
from qalloc.synth import generate_market, write_csv

log = logging.getLogger("qalloc")


def _load_config(args) -> Config:
    cfg = Config.load(args.config)
    if args.seed is not None:
        cfg = cfg.replace(rng_seed=args.seed)
    return cfg


def cmd_synth(args) -> int:
    cfg = _load_config(args)
    synth = cfg.synth or SynthConfig()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    table = generate_market(synth, seed=cfg.rng_seed)
    path = out / "prices.csv"
    write_csv(table, path)
    print(f"wrote {table.n_rows} rows x {table.n_assets} assets to {path}")
    return 0


def cmd_ingest(args) -> int:
    summary = pipeline.ingest(_load_config(args))
    print(json.dumps(summary, indent=2))
    return 0


def cmd_train(args) -> int:
    manifest = pipeline.train(_load_config(args), args.out)
    print(json.dumps(manifest, indent=2))
    return 0


def _checkpoint(args) -> Path:
    return Path(args.checkpoint) if args.checkpoint else Path(args.out) / "checkpoint.json"


def cmd_backtest(args) -> int:
    report, _ = pipeline.backtest(_load_config(args), _checkpoint(args), args.out)
    print(report.to_json())
    return 0


def cmd_compare(args) -> int:
    pipeline.compare(_load_config(args), _checkpoint(args), args.out)
    print((Path(args.out) / "comparison.csv").read_text(), end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qalloc", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn, help_ in [
        ("synth", cmd_synth, "write a seeded synthetic price CSV"),
        ("ingest", cmd_ingest, "validate the price CSV and summarize it"),
        ("train", cmd_train, "train the Q-network over the training range"),
        ("backtest", cmd_backtest, "greedy backtest of a checkpoint over the test range"),
        ("compare", cmd_compare, "compare DRL against the baseline allocators"),
    ]:
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True, type=Path)
        p.add_argument("--out", type=Path, default=Path("."))
        p.add_argument("--seed", type=int, default=None, help="overrides rng_seed")
        if name in ("backtest", "compare"):
            p.add_argument("--checkpoint", type=Path, default=None,
                           help="defaults to <out>/checkpoint.json")
        p.set_defaults(func=fn)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.seed is not None and not 0 <= args.seed < 2**64:
            raise ConfigError("--seed must be an unsigned 64-bit integer")
        return args.func(args)
    except QallocError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
