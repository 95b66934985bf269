"""Gradient-boosted tree classifier over fused features, with modality-grouped importances."""

from __future__ import annotations

import itertools
import logging
import math
import pickle
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
from sklearn.ensemble import GradientBoostingClassifier

from .core import FEATURE_GROUPS, Prediction
from .errors import EmptySplit, SchemaError
from .features import FeatureTable, base_feature_name

logger = logging.getLogger(__name__)

MODEL_FORMAT = "creditcast-boost"
_CHUNK = 10


@dataclass
class BoostParams:
    n_trees: int = 200
    max_depth: int = 6
    learning_rate: float = 0.1
    patience: int = 20
    seed: int = 0
    subsample: float = 1.0


@dataclass
class BoostModel:
    estimator: GradientBoostingClassifier
    names: List[str]
    groups: Dict[str, str]
    params: BoostParams
    n_trees_used: int
    val_curve: List[float] = field(default_factory=list)

    def _columns(self, table: FeatureTable) -> np.ndarray:
        if set(table.names) != set(self.names) or len(table.names) != len(self.names):
            missing = sorted(set(self.names) - set(table.names))
            extra = sorted(set(table.names) - set(self.names))
            raise SchemaError(f"feature schema differs from fit schema (missing={missing[:5]}, extra={extra[:5]})")
        for n in self.names:
            if table.groups[n] != self.groups[n]:
                raise SchemaError(f"feature {n!r} is grouped {table.groups[n]!r}, model expects {self.groups[n]!r}")
        if table.names == self.names:
            return table.X
        order = [table.names.index(n) for n in self.names]
        return table.X[:, order]

    def predict_proba_matrix(self, X: np.ndarray) -> np.ndarray:
        """Class probabilities in (down, same, up) order for a matrix in fit-schema column order."""
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != len(self.names):
            raise SchemaError(f"expected {len(self.names)} columns, got shape {X.shape}")
        raw = self.estimator.predict_proba(X)
        out = np.zeros((len(X), 3))
        out[:, self.estimator.classes_] = raw
        return out

    def predict_proba(self, table: FeatureTable) -> np.ndarray:
        return self.predict_proba_matrix(self._columns(table))

    @property
    def feature_importances_(self) -> np.ndarray:
        fi = np.asarray(self.estimator.feature_importances_, dtype=float)
        total = fi.sum()
        if total <= 0:
            logger.warning("model made no splits; importances are undefined, reporting uniform")
            return np.full(len(fi), 1.0 / len(fi))
        return fi / total

    def save(self, path) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "wb") as fh:
            pickle.dump({"format": MODEL_FORMAT, "version": 1, "model": self}, fh)

    @staticmethod
    def load(path) -> "BoostModel":
        with open(path, "rb") as fh:
            payload = pickle.load(fh)
        if payload.get("format") != MODEL_FORMAT:
            raise ValueError(f"{path} is not a boosted-tree model artifact")
        return payload["model"]


def _best_iteration(curve: Sequence[float], patience: int) -> int:
    """Number of trees to keep: the first best stage, scanning until ``patience`` stages pass without gain."""
    best, best_i = -1.0, 0
    for i, acc in enumerate(curve):
        if acc > best:
            best, best_i = acc, i
        elif i - best_i >= patience:
            break
    return best_i + 1


def train_boost(train: FeatureTable, val: Optional[FeatureTable] = None,
                params: Optional[BoostParams] = None) -> BoostModel:
    """Fit a three-class boosted-tree model; early-stop on validation accuracy when ``val`` is given."""
    params = params or BoostParams()
    if len(train) == 0:
        raise EmptySplit("training split is empty")
    if val is not None:
        if len(val) == 0:
            raise EmptySplit("validation split is empty")
        if val.schema != train.schema:
            raise SchemaError("train and validation feature schemas differ")
    est = GradientBoostingClassifier(
        n_estimators=params.n_trees, max_depth=params.max_depth, learning_rate=params.learning_rate,
        subsample=params.subsample, random_state=params.seed, warm_start=val is not None,
    )
    n_used = params.n_trees
    curve: List[float] = []
    if val is None:
        est.fit(train.X, train.y)
    else:
        # grow in chunks and stop once validation accuracy has stalled for `patience` trees
        yv = val.y
        n = 0
        while n < params.n_trees:
            n = min(n + _CHUNK, params.n_trees)
            est.set_params(n_estimators=n)
            est.fit(train.X, train.y)
            staged = itertools.islice(est.staged_predict_proba(val.X), len(curve), None)
            curve += [float(np.mean(est.classes_[np.argmax(p, axis=1)] == yv)) for p in staged]
            if len(curve) - _best_iteration(curve, params.patience) >= params.patience:
                break
        n_used = _best_iteration(curve, params.patience)
        # trees are fitted sequentially, so the first n stages are exactly an n-tree model
        est.estimators_ = est.estimators_[:n_used]
        est.train_score_ = est.train_score_[:n_used]
        est.n_estimators_ = n_used
        est.set_params(n_estimators=n_used, warm_start=False)
    logger.info("train_boost: %d rows, %d features, %d trees kept", len(train), len(train.names), n_used)
    return BoostModel(est, list(train.names), dict(train.groups), params, n_used, curve)


def predict_boost(model: BoostModel, table: FeatureTable) -> List[Prediction]:
    probs = model.predict_proba(table)
    return [Prediction.from_probs(p) for p in probs]


@dataclass
class ImportanceReport:
    per_feature: Dict[str, float]
    per_group: Dict[str, float]
    per_model_groups: List[Dict[str, float]]

    def to_dict(self) -> dict:
        return {"per_feature": dict(sorted(self.per_feature.items())),
                "per_group": dict(self.per_group),
                "per_model_groups": [dict(g) for g in self.per_model_groups]}


def _group_sums(names, groups, fi) -> Dict[str, float]:
    out = {g: 0.0 for g in FEATURE_GROUPS}
    for n, v in zip(names, fi):
        out[groups[n]] += float(v)
    return out


def importance_report(models: Sequence) -> ImportanceReport:
    """Impurity importances normalized per model, grouped by modality, averaged over models.

    Each model needs ``names``, ``groups`` and ``feature_importances_``. Models
    must come from one schema family: the same base features (lag suffix
    stripped) in the same groups.
    """
    if not models:
        raise ValueError("importance_report needs at least one model")
    family = None
    per_feature: Dict[str, List[float]] = defaultdict(list)
    per_model = []
    for m in models:
        fam = {(base_feature_name(n), m.groups[n]) for n in m.names}
        if family is None:
            family = fam
        elif fam != family:
            raise SchemaError("models do not share a schema family")
        fi = np.asarray(m.feature_importances_, dtype=float)
        fi = fi / fi.sum()
        per_model.append(_group_sums(m.names, m.groups, fi))
        base_totals: Dict[str, float] = defaultdict(float)
        for n, v in zip(m.names, fi):
            base_totals[base_feature_name(n)] += float(v)
        for b, v in base_totals.items():
            per_feature[b].append(v)
    k = len(models)
    groups = {g: math.fsum(pm[g] for pm in per_model) / k for g in FEATURE_GROUPS}
    feats = {b: math.fsum(v) / k for b, v in per_feature.items()}
    return ImportanceReport(feats, groups, per_model)
