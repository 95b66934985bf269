"""Accuracy grids, the union-of-models metric, partial dependence, and report files."""

from __future__ import annotations

import json
import math
import re
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .core import LABEL_WORDS, MovementLabel, Prediction, QuarterId
from .errors import AlignmentError, SchemaError
from .features import FeatureTable

LAGS = (1, 2, 3, 4)
_GROUP_ORDER = ("macro", "fundamental", "text", "credit_rating", "estimate")


def _as_label(x) -> MovementLabel:
    if isinstance(x, Prediction):
        return x.label
    return MovementLabel(x)


def accuracy(preds: Sequence, labels: Sequence) -> float:
    if len(preds) != len(labels):
        raise AlignmentError(f"{len(preds)} predictions for {len(labels)} labels")
    if not labels:
        raise AlignmentError("accuracy of an empty prediction set is undefined")
    hits = sum(_as_label(p) == _as_label(l) for p, l in zip(preds, labels))
    return hits / len(labels)


@dataclass
class EvalRecord:
    """Per-sample correctness of one configuration, kept in the sample key order used."""

    config: Dict[str, object]
    keys: List[Tuple[str, QuarterId]]
    correct: np.ndarray
    predictions: List[Prediction] = field(default_factory=list)

    def __post_init__(self):
        self.correct = np.asarray(self.correct, dtype=bool).ravel()
        if len(self.correct) != len(self.keys):
            raise AlignmentError("correctness vector and keys differ in length")

    @property
    def accuracy(self) -> float:
        return float(np.mean(self.correct)) if len(self.correct) else float("nan")

    @property
    def config_id(self) -> str:
        return "|".join(f"{k}={self.config[k]}" for k in sorted(self.config))

    @classmethod
    def from_predictions(cls, config, keys, preds: Sequence, labels: Sequence) -> "EvalRecord":
        if not (len(keys) == len(preds) == len(labels)):
            raise AlignmentError("keys, predictions and labels differ in length")
        correct = [_as_label(p) == _as_label(l) for p, l in zip(preds, labels)]
        kept = [p for p in preds if isinstance(p, Prediction)]
        return cls(dict(config), list(keys), np.array(correct, dtype=bool), kept)

    def to_dict(self) -> dict:
        return {"config": self.config, "accuracy": self.accuracy, "n": int(len(self.correct)),
                "correct": "".join("1" if c else "0" for c in self.correct)}


def union_correct(records: Sequence[EvalRecord]) -> float:
    """Share of samples that at least one record gets right."""
    if len(records) < 2:
        raise ValueError("union_correct needs at least two records")
    keys = list(records[0].keys)
    for r in records[1:]:
        if list(r.keys) != keys:
            raise AlignmentError("records are not over the same samples in the same order")
    if not keys:
        raise AlignmentError("records are empty")
    hit = np.zeros(len(keys), dtype=bool)
    for r in records:
        hit |= r.correct
    return float(np.mean(hit))


@dataclass
class PDPCurve:
    feature: str
    grid: List[float]
    values: List[float]
    target_class: str = "up"

    def __post_init__(self):
        if len(self.grid) != len(self.values):
            raise ValueError("curve and grid lengths differ")

    def to_dict(self) -> dict:
        return {"feature": self.feature, "target_class": self.target_class,
                "grid": list(self.grid), "values": list(self.values)}


def quantile_grid(values, n: int = 20) -> List[float]:
    """``n`` quantile-spaced points of a feature's (train) distribution, duplicates removed."""
    v = np.asarray(values, dtype=float)
    v = v[np.isfinite(v)]
    if v.size == 0:
        raise ValueError("no finite values to build a grid from")
    return sorted({float(q) for q in np.quantile(v, np.linspace(0.0, 1.0, n))})


def pdp_compute(model, table: FeatureTable, feature: str, grid: Sequence[float],
                target_class: str = "up") -> PDPCurve:
    """Average predicted probability of ``target_class`` with ``feature`` pinned at each grid value.

    ``model.predict_proba(table)`` must return an ``(n, 3)`` array in
    down/same/up order. Every row is scored at every grid point.
    """
    if feature not in table.names:
        raise SchemaError(f"feature {feature!r} is not in the table")
    grid = [float(g) for g in grid]
    if not grid:
        raise ValueError("PDP grid is empty")
    if len(table) == 0:
        raise ValueError("PDP needs at least one row")
    col = table.names.index(feature)
    cls = LABEL_WORDS.index(MovementLabel(target_class).value)
    values = []
    for g in grid:
        X = table.X.copy()
        X[:, col] = g
        pinned = FeatureTable(list(table.keys), list(table.labels), list(table.names), dict(table.groups), X)
        probs = np.asarray(model.predict_proba(pinned), dtype=float)
        values.append(math.fsum(probs[:, cls]) / len(table))
    return PDPCurve(feature, grid, values, MovementLabel(target_class).value)


def _lag_table(records: Sequence[EvalRecord], unions: Mapping[str, Mapping[int, float]]):
    """Rows of (row label, {p: accuracy}) for the Av. + per-quarter layout."""
    rows: Dict[Tuple, Dict[int, float]] = defaultdict(dict)
    for r in records:
        c = r.config
        key = (str(c.get("model", "")), str(c.get("data_type", "")), str(c.get("encoder", "") or "-"))
        rows[key][int(c.get("p", 1))] = r.accuracy
    out = []
    for key in sorted(rows):
        out.append((key, rows[key]))
    for name in sorted(unions):
        out.append((("union", name, "-"), {int(k): float(v) for k, v in unions[name].items()}))
    return out


def _average(per_lag: Mapping[int, float]) -> float:
    vals = [per_lag[p] for p in sorted(per_lag)]
    return math.fsum(vals) / len(vals) if vals else float("nan")


def _pct(x: Optional[float]) -> str:
    return "" if x is None or (isinstance(x, float) and math.isnan(x)) else f"{100 * x:.2f}"


def render_tables(records: Sequence[EvalRecord], unions: Mapping[str, Mapping[int, float]] = {},
                  importances: Optional[Mapping] = None) -> str:
    lines = ["# Accuracy", "",
             "| Model | Data | Encoder | Av. | " + " | ".join(str(p) for p in LAGS) + " |",
             "|---|---|---|---|" + "---|" * len(LAGS)]
    for (model, data, enc), per_lag in _lag_table(records, unions):
        cells = [_pct(per_lag.get(p)) for p in LAGS]
        lines.append(f"| {model} | {data} | {enc} | {_pct(_average(per_lag))} | " + " | ".join(cells) + " |")
    if importances:
        lines += ["", "# Feature-group importance", "",
                  "| Configuration | " + " | ".join(_GROUP_ORDER) + " |",
                  "|---|" + "---|" * len(_GROUP_ORDER)]
        for name in sorted(importances):
            g = _importance_dict(importances[name])["per_group"]
            lines.append(f"| {name} | " + " | ".join(f"{g.get(k, 0.0):.4f}" for k in _GROUP_ORDER) + " |")
    return "\n".join(lines) + "\n"


def _importance_dict(rep) -> dict:
    return rep.to_dict() if hasattr(rep, "to_dict") else dict(rep)


def _slug(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", text).strip("_") or "feature"


def plot_pdp(curve: PDPCurve, path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(4, 3))
    ax.plot(curve.grid, curve.values, marker="o", ms=3)
    ax.set_xlabel(curve.feature)
    ax.set_ylabel(f"P({curve.target_class})")
    ax.set_ylim(0, 1)
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)


def emit_report(records: Sequence[EvalRecord], importances: Optional[Mapping] = None,
                curves: Sequence[PDPCurve] = (), out_dir=None,
                unions: Mapping[str, Mapping[int, float]] = {}) -> dict:
    """Build the results bundle; with ``out_dir`` also write results.json, tables.md and pdp/*.png."""
    results = {
        "records": [r.to_dict() for r in sorted(records, key=lambda r: r.config_id)],
        "grid": [{"model": m, "data_type": d, "encoder": e, "average": _average(pl),
                  "per_lag": {str(p): pl[p] for p in sorted(pl)}}
                 for (m, d, e), pl in _lag_table(records, unions)],
        "importances": {k: _importance_dict(v) for k, v in sorted((importances or {}).items())},
        "pdp": [c.to_dict() for c in curves],
    }
    if not curves:
        del results["pdp"]
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "results.json").write_text(json.dumps(results, sort_keys=True, indent=1) + "\n", encoding="utf-8")
        tables = render_tables(records, unions, importances)
        if curves:
            (out / "pdp").mkdir(exist_ok=True)
            tables += "\n# Partial dependence\n\n"
            for c in curves:
                name = f"{_slug(c.feature)}_{c.target_class}.png"
                plot_pdp(c, out / "pdp" / name)
                tables += f"- `{c.feature}` (P({c.target_class})): pdp/{name}\n"
        (out / "tables.md").write_text(tables, encoding="utf-8")
    return results
