"""Run configuration.

Configs are JSON objects. Unknown keys are rejected so a typo in a
hyperparameter name fails loudly instead of silently using a default.
"""

from __future__ import annotations

import dataclasses
import datetime as dt
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from qalloc.errors import ConfigError

TRADING_DAYS = 252

REGIMES = ("LongOnly", "LongShort")
MA_SOURCES = ("detrended", "raw")
LONG_SHORT_NORMS = ("l1", "signed")


@dataclass(frozen=True)
class DateRange:
    start: dt.date
    end: dt.date

    def __post_init__(self):
        if self.end < self.start:
            raise ConfigError(f"date range ends before it starts: {self.start}..{self.end}")

    @classmethod
    def parse(cls, value, name):
        if not isinstance(value, (list, tuple)) or len(value) != 2:
            raise ConfigError(f"{name} must be a [start, end] pair of ISO dates")
        try:
            start, end = (dt.date.fromisoformat(str(v)) for v in value)
        except ValueError as exc:
            raise ConfigError(f"{name}: {exc}") from None
        return cls(start, end)

    def to_list(self):
        return [self.start.isoformat(), self.end.isoformat()]


@dataclass(frozen=True)
class SynthConfig:
    """Parameters of the seeded geometric-random-walk market generator.

    ``drift`` and ``vol`` are per-day and may be scalars or per-asset
    lists. ``correlation`` is the common pairwise correlation of the
    daily shocks. ``seed`` falls back to the run's ``rng_seed``.
    """

    n_assets: int = 5
    n_days: int = 300
    drift: float | list[float] = 0.0
    vol: float | list[float] = 0.01
    correlation: float = 0.0
    start_price: float = 100.0
    start_date: str = "2020-01-01"
    seed: int | None = None

    def __post_init__(self):
        if self.n_assets < 1:
            raise ConfigError("synth.n_assets must be >= 1")
        if self.n_days < 2:
            raise ConfigError("synth.n_days must be >= 2")
        for name in ("drift", "vol"):
            v = getattr(self, name)
            if isinstance(v, list) and len(v) != self.n_assets:
                raise ConfigError(f"synth.{name} has {len(v)} entries for {self.n_assets} assets")
        vols = self.vol if isinstance(self.vol, list) else [self.vol]
        if any(v < 0 for v in vols):
            raise ConfigError("synth.vol must be non-negative")
        if self.n_assets > 1 and not -1.0 / (self.n_assets - 1) <= self.correlation <= 1.0:
            raise ConfigError("synth.correlation does not give a valid correlation matrix")
        if self.start_price <= 0:
            raise ConfigError("synth.start_price must be positive")
        try:
            dt.date.fromisoformat(self.start_date)
        except ValueError as exc:
            raise ConfigError(f"synth.start_date: {exc}") from None


@dataclass(frozen=True)
class Config:
    data: str | None = None
    assets: list[str] | None = None
    window: int = 10
    buffer_capacity: int = 32
    episodes: int = 1000
    epsilon_start: float = 1.0
    epsilon_decay: float = 0.995
    epsilon_floor: float = 0.01
    learning_rate: float = 1e-3
    hidden_dims: list[int] = field(default_factory=lambda: [128, 64])
    regime: str = "LongOnly"
    rng_seed: int = 0
    train_range: DateRange | None = None
    test_range: DateRange | None = None
    benchmark: str = "equal_weight"
    risk_free_rate: float = 0.0
    initial_investment: float = 1.0
    gamma: float = 0.0
    ma_source: str = "detrended"
    long_short_normalization: str = "l1"
    # long-only exploit weights are softmax(q / softmax_temperature)
    softmax_temperature: float = 1.0
    ridge: float = 1e-8
    synth: SynthConfig | None = None
    # directory the config file lives in; relative data paths resolve against it
    base_dir: Path = field(default=Path("."), compare=False, repr=False)

    def __post_init__(self):
        if self.window < 2:
            raise ConfigError("window must be >= 2")
        if self.buffer_capacity < 1:
            raise ConfigError("buffer_capacity must be >= 1")
        if self.episodes < 1:
            raise ConfigError("episodes must be >= 1")
        if not 0 < self.epsilon_floor <= self.epsilon_start <= 1:
            raise ConfigError("need 0 < epsilon_floor <= epsilon_start <= 1")
        if not 0 < self.epsilon_decay <= 1:
            raise ConfigError("need 0 < epsilon_decay <= 1")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be positive")
        if any(int(h) != h or h < 1 for h in self.hidden_dims):
            raise ConfigError("hidden_dims must be positive integers")
        if self.regime not in REGIMES:
            raise ConfigError(f"regime must be one of {REGIMES}, got {self.regime!r}")
        if self.ma_source not in MA_SOURCES:
            raise ConfigError(f"ma_source must be one of {MA_SOURCES}")
        if self.long_short_normalization not in LONG_SHORT_NORMS:
            raise ConfigError(f"long_short_normalization must be one of {LONG_SHORT_NORMS}")
        if not 0 <= self.rng_seed < 2**64:
            raise ConfigError("rng_seed must be an unsigned 64-bit integer")
        if self.gamma < 0:
            raise ConfigError("gamma must be >= 0")
        if self.initial_investment <= 0:
            raise ConfigError("initial_investment must be positive")
        if not self.softmax_temperature > 0:
            raise ConfigError("softmax_temperature must be positive")
        if self.ridge < 0:
            raise ConfigError("ridge must be >= 0")
        if self.train_range and self.test_range and not self.train_range.end < self.test_range.start:
            raise ConfigError("train_range must end before test_range starts")

    @classmethod
    def from_dict(cls, raw: dict[str, Any], base_dir: Path | str = ".") -> "Config":
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        known = {f.name for f in dataclasses.fields(cls)} - {"base_dir"}
        unknown = sorted(set(raw) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        kw = dict(raw)
        for name in ("train_range", "test_range"):
            if kw.get(name) is not None:
                kw[name] = DateRange.parse(kw[name], name)
        if kw.get("synth") is not None:
            synth = kw["synth"]
            if not isinstance(synth, dict):
                raise ConfigError("synth must be an object")
            synth_known = {f.name for f in dataclasses.fields(SynthConfig)}
            bad = sorted(set(synth) - synth_known)
            if bad:
                raise ConfigError(f"unknown synth keys: {', '.join(bad)}")
            kw["synth"] = SynthConfig(**synth)
        if "hidden_dims" in kw:
            kw["hidden_dims"] = list(kw["hidden_dims"])
        try:
            return cls(**kw, base_dir=Path(base_dir))
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, path: Path | str) -> "Config":
        path = Path(path)
        try:
            raw = json.loads(path.read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from None
        return cls.from_dict(raw, base_dir=path.parent)

    def replace(self, **changes) -> "Config":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        out = {}
        for f in dataclasses.fields(self):
            if f.name == "base_dir":
                continue
            v = getattr(self, f.name)
            if isinstance(v, DateRange):
                v = v.to_list()
            elif isinstance(v, SynthConfig):
                v = dataclasses.asdict(v)
            out[f.name] = v
        return out

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    @property
    def data_path(self) -> Path:
        if self.data is None:
            raise ConfigError("config has no 'data' path")
        p = Path(self.data)
        return p if p.is_absolute() else self.base_dir / p

    def epsilon(self, episode: int) -> float:
        """Exploration rate for a 0-based episode index."""
        return max(self.epsilon_floor, self.epsilon_start * self.epsilon_decay**episode)

    def require_ranges(self) -> tuple[DateRange, DateRange]:
        if self.train_range is None or self.test_range is None:
            raise ConfigError("train_range and test_range are both required")
        return self.train_range, self.test_range
