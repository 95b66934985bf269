"""Fusing samples into named, group-tagged feature matrices."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .core import FeatureVector, MovementLabel, QuarterId, Sample, rating_rank
from .errors import AlignmentError, SchemaError
from .ingestion import FUNDAMENTAL_CODES, FUNDAMENTAL_FLOATS

DATA_TYPES = ("numeric", "ratings", "all", "text_only")
_FUNDAMENTAL = set(FUNDAMENTAL_FLOATS) | set(FUNDAMENTAL_CODES)


@dataclass
class FeatureTable:
    keys: List[Tuple[str, QuarterId]]
    labels: List[MovementLabel]
    names: List[str]
    groups: Dict[str, str]
    X: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float).reshape(len(self.keys), len(self.names))
        if len(self.labels) != len(self.keys):
            raise AlignmentError("labels and keys differ in length")
        if set(self.groups) != set(self.names) or len(set(self.names)) != len(self.names):
            raise SchemaError("feature names must be unique and each needs exactly one group")

    def __len__(self):
        return len(self.keys)

    @property
    def y(self) -> np.ndarray:
        return np.array([l.index for l in self.labels], dtype=int)

    @property
    def schema(self) -> List[Tuple[str, str]]:
        return [(n, self.groups[n]) for n in self.names]

    def row(self, i: int) -> FeatureVector:
        return FeatureVector({n: float(v) for n, v in zip(self.names, self.X[i])},
                             {n: self.groups[n] for n in self.names})

    def select(self, names: Sequence[str]) -> "FeatureTable":
        idx = [self.names.index(n) for n in names]
        return FeatureTable(list(self.keys), list(self.labels), list(names),
                            {n: self.groups[n] for n in names}, self.X[:, idx], dict(self.meta))

    def drop_groups(self, groups: Sequence[str]) -> "FeatureTable":
        return self.select([n for n in self.names if self.groups[n] not in groups])

    def hstack(self, other: "FeatureTable") -> "FeatureTable":
        if other.keys != self.keys:
            raise AlignmentError("cannot stack feature tables over different samples")
        return FeatureTable(list(self.keys), list(self.labels), self.names + other.names,
                            {**self.groups, **other.groups}, np.hstack([self.X, other.X]), dict(self.meta))

    def save(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8") as fh:
            fh.write(json.dumps({"schema": self.schema, "meta": self.meta}, sort_keys=True) + "\n")
            for k, l, x in zip(self.keys, self.labels, self.X):
                fh.write(json.dumps({"company_id": k[0], "target_quarter": str(k[1]),
                                     "label": l.value, "x": x.tolist()}) + "\n")

    @classmethod
    def load(cls, path) -> "FeatureTable":
        with Path(path).open(encoding="utf-8") as fh:
            head = json.loads(fh.readline())
            keys, labels, rows = [], [], []
            for line in fh:
                if not line.strip():
                    continue
                d = json.loads(line)
                keys.append((d["company_id"], QuarterId.parse(d["target_quarter"])))
                labels.append(MovementLabel(d["label"]))
                rows.append(d["x"])
        names = [n for n, _ in head["schema"]]
        groups = {n: g for n, g in head["schema"]}
        X = np.array(rows, dtype=float).reshape(len(rows), len(names))
        return cls(keys, labels, names, groups, X, head.get("meta", {}))


def numeric_columns(samples: Sequence[Sample]) -> List[str]:
    """Stable column order: fundamentals first (declared order) then macro series sorted by name."""
    if not samples:
        return []
    present = set(samples[0].numeric_window[0])
    fund = [c for c in FUNDAMENTAL_FLOATS + FUNDAMENTAL_CODES if c in present]
    macro = sorted(present - _FUNDAMENTAL)
    return fund + macro


def column_group(column: str) -> str:
    return "fundamental" if column in _FUNDAMENTAL else "macro"


def build_features(samples: Sequence[Sample], data_type: str = "all", encoder=None,
                   columns: Optional[Sequence[str]] = None) -> FeatureTable:
    """Assemble a feature table; lagged copies are suffixed ``_lag1`` .. ``_lagp``."""
    if data_type not in DATA_TYPES:
        raise ValueError(f"data_type must be one of {DATA_TYPES}")
    if data_type in ("all", "text_only") and encoder is None:
        raise ValueError(f"data_type={data_type!r} needs a text encoder")
    samples = list(samples)
    p = samples[0].p if samples else 1
    if any(s.p != p for s in samples):
        raise SchemaError("all samples in a table must share the lag count p")
    columns = list(columns) if columns is not None else numeric_columns(samples)

    blocks, names, groups = [], [], {}
    n = len(samples)
    if data_type in ("numeric", "ratings", "all"):
        ranks = np.array([[rating_rank(r) for r in s.rating_window] for s in samples], float).reshape(n, p)
        for i in range(p):
            names.append(f"rating_lag{i + 1}")
            groups[names[-1]] = "credit_rating"
        blocks.append(ranks)
    if data_type in ("numeric", "all"):
        vals = np.array([[rec[c] for rec in s.numeric_window for c in columns] for s in samples],
                        float).reshape(n, p * len(columns))
        for i in range(p):
            for c in columns:
                names.append(f"{c}_lag{i + 1}")
                groups[names[-1]] = column_group(c)
        blocks.append(vals)
    if data_type in ("all", "text_only"):
        fnames = encoder.feature_names
        # one batch over all lags: a filing is lag 1 of one sample and lag 2 of the next
        enc = encoder.encode_many([s.text_window[i] for i in range(p) for s in samples])
        enc = enc.reshape(p, n, encoder.output_dim)
        for i in range(p):
            blocks.append(enc[i])
            for f in fnames:
                names.append(f"{f}_lag{i + 1}")
                groups[names[-1]] = "text"
    X = np.hstack(blocks) if blocks else np.zeros((n, 0))
    meta = {"data_type": data_type, "p": p, "encoder": getattr(encoder, "name", None)}
    return FeatureTable([s.key for s in samples], [s.label for s in samples], names, groups, X, meta)


def base_feature_name(name: str) -> str:
    """Strip the ``_lagN`` suffix."""
    head, sep, tail = name.rpartition("_lag")
    return head if sep and tail.isdigit() else name

