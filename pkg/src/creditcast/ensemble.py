"""Combining model estimates: feature augmentation, stacking, and prompt injection."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .core import LABEL_WORDS, MovementLabel, Prediction, QuarterId
from .errors import AlignmentError, EmptySplit
from .features import FeatureTable
from .generative.decode import predict_gen
from .generative.prompts import Ablation, Estimate
from .model_boost import BoostModel, BoostParams, predict_boost, train_boost


@dataclass
class EstimateColumn:
    """One model's estimates over a list of samples."""

    source: str
    predictions: List[Prediction]
    keys: Optional[List[Tuple[str, QuarterId]]] = None

    def __len__(self):
        return len(self.predictions)

    def matrix(self) -> np.ndarray:
        """``(n, 4)``: one-hot of the label in down/same/up order, then the label's probability."""
        out = np.zeros((len(self.predictions), 4))
        for i, p in enumerate(self.predictions):
            out[i, p.label.index] = 1.0
            out[i, 3] = p.confidence
        return out

    @property
    def names(self) -> List[str]:
        return [f"est_{self.source}_{w}" for w in LABEL_WORDS] + [f"est_{self.source}_prob"]

    def estimates(self) -> List[Estimate]:
        return [Estimate.from_prediction(p, self.source) for p in self.predictions]


def _check_rows(table_keys, est: EstimateColumn):
    if len(est) != len(table_keys):
        raise AlignmentError(f"{len(est)} estimates for {len(table_keys)} rows")
    if est.keys is not None and list(est.keys) != list(table_keys):
        raise AlignmentError("estimate keys are not in the table's row order")


def augment_features(table: FeatureTable, est: EstimateColumn) -> FeatureTable:
    """Append the estimate's four columns under group ``estimate``; existing columns are untouched."""
    _check_rows(table.keys, est)
    extra = FeatureTable(list(table.keys), list(table.labels), est.names,
                         {n: "estimate" for n in est.names}, est.matrix())
    return table.hstack(extra)


def estimate_table(est_a: EstimateColumn, est_b: EstimateColumn,
                   labels: Sequence[MovementLabel], keys=None) -> FeatureTable:
    if len(est_a) != len(est_b) or len(est_a) != len(labels):
        raise AlignmentError("estimate sets and labels differ in length")
    if len(est_a) == 0:
        raise EmptySplit("no estimates to stack")
    keys = list(keys or est_a.keys or [(str(i), QuarterId(2000, 1)) for i in range(len(labels))])
    names = est_a.names + est_b.names
    if len(set(names)) != len(names):
        raise ValueError("the two estimate sources need distinct names")
    X = np.hstack([est_a.matrix(), est_b.matrix()])
    return FeatureTable(keys, [MovementLabel(l) for l in labels], names,
                        {n: "estimate" for n in names}, X)


def stack_estimates(est_a: EstimateColumn, est_b: EstimateColumn, labels: Sequence[MovementLabel],
                    seed: int = 0, val: Optional[FeatureTable] = None,
                    params: Optional[BoostParams] = None) -> BoostModel:
    """Boosted-tree meta-model over the eight estimate columns of two sources."""
    train = estimate_table(est_a, est_b, labels)
    params = params or BoostParams(seed=seed)
    return train_boost(train, val, params)


def temporal_blocks(keys: Sequence[Tuple[str, QuarterId]], n_folds: int) -> List[np.ndarray]:
    """Row indices cut into ``n_folds`` contiguous blocks of (quarter, company) order."""
    order = sorted(range(len(keys)), key=lambda i: (keys[i][1], keys[i][0]))
    return [np.asarray(b, dtype=int) for b in np.array_split(order, n_folds) if len(b)]


def cross_fit(keys, n_folds: int, fit_predict: Callable[[np.ndarray, np.ndarray], List[Prediction]]
              ) -> List[Prediction]:
    """Out-of-fold predictions: each temporal block is predicted by a model fitted on the others."""
    if n_folds < 2:
        raise ValueError("cross-fitting needs at least two folds")
    out: List[Optional[Prediction]] = [None] * len(keys)
    all_idx = np.arange(len(keys))
    for block in temporal_blocks(keys, n_folds):
        rest = np.setdiff1d(all_idx, block)
        for i, pred in zip(block, fit_predict(rest, block)):
            out[i] = pred
    return out  # type: ignore[return-value]


def _take(table: FeatureTable, idx) -> FeatureTable:
    idx = list(idx)
    return FeatureTable([table.keys[i] for i in idx], [table.labels[i] for i in idx], list(table.names),
                        dict(table.groups), table.X[idx], dict(table.meta))


def oof_boost_estimates(train: FeatureTable, val: Optional[FeatureTable], params: BoostParams,
                        n_folds: int = 5, source: str = "boost") -> EstimateColumn:
    """Leakage-free train-row estimates from temporal-block cross-fitting."""
    def fit_predict(fit_idx, pred_idx):
        model = train_boost(_take(train, fit_idx), val, params)
        return predict_boost(model, _take(train, pred_idx))

    preds = cross_fit(train.keys, n_folds, fit_predict)
    return EstimateColumn(source, preds, list(train.keys))


def inject_estimates(client, template, samples, est: EstimateColumn, base: str = "text_only",
                     **kw) -> List[Prediction]:
    """Prompt a generative model with another model's estimate appended."""
    if len(est) != len(samples):
        raise AlignmentError(f"{len(est)} estimates for {len(samples)} samples")
    return predict_gen(client, template, samples, Ablation(base, True), est.estimates(), **kw)
