"""Experiment configuration: a flat ``key = value`` file with JSON values and ``#`` comments.

Example::

    # synthetic smoke run
    ratings = "data/ratings.csv"
    filings = "data/filings.csv"
    fundamentals = "data/fundamentals.csv"
    macro = "data/macro.csv"
    p = [1, 2]
    encoders = ["lm", "clusters"]
    encoder_params = {"clusters": {"K": 100, "tau": 1.0}}
    model = "boost"
    out_dir = "runs/smoke"

Relative paths are resolved against the config file's directory. A value that
is not valid JSON is taken as a bare string.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

from .dataset import SplitSpec
from .encoders import ENCODER_NAMES
from .errors import ConfigError
from .features import DATA_TYPES
from .generative.prompts import Ablation

PATH_KEYS = ("ratings", "filings", "fundamentals", "macro")
ENSEMBLE_MODES = ("augment", "stack", "inject")


@dataclass
class ExperimentConfig:
    ratings: str = ""
    filings: str = ""
    fundamentals: str = ""
    macro: str = ""
    p: List[int] = field(default_factory=lambda: [1, 2, 3, 4])
    seed: int = 0
    start: str = "1994-01-01"
    train_end: str = "2012-12-31"
    val_end: str = "2014-12-31"
    test_end: str = "2016-12-31"
    encoders: List[str] = field(default_factory=lambda: list(ENCODER_NAMES))
    encoder_params: Dict[str, dict] = field(default_factory=dict)
    data_types: List[str] = field(default_factory=lambda: ["all"])
    model: str = "boost"
    ablation: str = "all"
    n_trees: int = 200
    max_depth: int = 6
    learning_rate: float = 0.1
    patience: int = 20
    gen_cache_dir: Optional[str] = None
    max_text_tokens: Optional[int] = None
    pdp_features: int = 4
    pdp_target: str = "down"
    out_dir: str = "runs/default"
    cache: bool = True

    @property
    def split_spec(self) -> SplitSpec:
        return SplitSpec(self.start, self.train_end, self.val_end, self.test_end)

    @property
    def model_kind(self) -> str:
        return self.model.partition(":")[0]

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def validate(self, check_paths: bool = True) -> "ExperimentConfig":
        if isinstance(self.p, int):
            self.p = [self.p]
        if not self.p or any(not isinstance(p, int) or isinstance(p, bool) or not 1 <= p <= 4 for p in self.p):
            raise ConfigError(f"p must be an integer (or list of integers) in 1..4, got {self.p!r}")
        if len(set(self.p)) != len(self.p):
            raise ConfigError("p values must be distinct")
        for e in self.encoders:
            if e not in ENCODER_NAMES:
                raise ConfigError(f"unknown encoder {e!r}; expected one of {ENCODER_NAMES}")
        unknown = set(self.encoder_params) - set(ENCODER_NAMES)
        if unknown:
            raise ConfigError(f"encoder_params has unknown encoders {sorted(unknown)}")
        for d in self.data_types:
            if d not in DATA_TYPES:
                raise ConfigError(f"unknown data type {d!r}; expected one of {DATA_TYPES}")
        if any(d in ("all", "text_only") for d in self.data_types) and not self.encoders:
            raise ConfigError("text data types need at least one encoder")
        kind, _, arg = self.model.partition(":")
        if kind == "boost":
            if arg:
                raise ConfigError("model 'boost' takes no argument")
        elif kind == "gen":
            if not arg:
                raise ConfigError("model 'gen' needs a client, e.g. gen:mock or gen:api:gpt-4o")
        elif kind == "ensemble":
            if arg.partition(":")[0] not in ENSEMBLE_MODES:
                raise ConfigError(f"ensemble mode must be one of {ENSEMBLE_MODES}")
        else:
            raise ConfigError(f"model must be boost, gen:CLIENT or ensemble:MODE, got {self.model!r}")
        if self.pdp_target not in ("down", "same", "up"):
            raise ConfigError("pdp_target must be down, same or up")
        try:
            Ablation.parse(self.ablation)
            self.split_spec
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if check_paths:
            for k in PATH_KEYS:
                path = getattr(self, k)
                if not path:
                    raise ConfigError(f"{k} path is not set")
                if not Path(path).exists():
                    raise ConfigError(f"{k} path does not exist: {path}")
        return self


def parse_config_text(text: str) -> dict:
    values = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key.isidentifier():
            raise ConfigError(f"line {n}: expected 'key = value', got {raw!r}")
        if key in values:
            raise ConfigError(f"line {n}: duplicate key {key!r}")
        try:
            values[key] = json.loads(value)
        except json.JSONDecodeError:
            # allow trailing comments and bare words
            stripped = value.split(" #", 1)[0].strip()
            try:
                values[key] = json.loads(stripped)
            except json.JSONDecodeError:
                values[key] = stripped
    return values


def config_from_dict(values: dict, base_dir=None) -> ExperimentConfig:
    names = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = set(values) - names
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")
    cfg = ExperimentConfig(**values)
    if base_dir is not None:
        base = Path(base_dir)
        for k in PATH_KEYS + ("out_dir", "gen_cache_dir"):
            v = getattr(cfg, k)
            if v and not Path(v).is_absolute():
                setattr(cfg, k, str(base / v))
    return cfg


def load_config(path, check_paths: bool = True, overrides: Optional[dict] = None) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    values = parse_config_text(path.read_text(encoding="utf-8"))
    values.update(overrides or {})
    return config_from_dict(values, path.parent).validate(check_paths)


def dump_config(cfg: ExperimentConfig) -> str:
    return "".join(f"{k} = {json.dumps(v)}\n" for k, v in cfg.to_dict().items())
