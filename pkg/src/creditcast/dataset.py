"""Lag-windowed samples, temporal splits, class balancing and min-max normalization."""

from __future__ import annotations

import datetime as dt
import json
import logging
import re
import zlib
from collections import Counter, defaultdict
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .core import LABEL_ORDER, MovementLabel, QuarterId, Sample, movement_label, sub_seed
from .errors import EmptyClass
from .ingestion import FUNDAMENTAL_CODES, FUNDAMENTAL_FLOATS, AlignedSources

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SplitSpec:
    start: dt.date = dt.date(1994, 1, 1)
    train_end: dt.date = dt.date(2012, 12, 31)
    val_end: dt.date = dt.date(2014, 12, 31)
    test_end: dt.date = dt.date(2016, 12, 31)

    def __post_init__(self):
        for name in ("start", "train_end", "val_end", "test_end"):
            v = getattr(self, name)
            if isinstance(v, str):
                object.__setattr__(self, name, dt.date.fromisoformat(v))
        if not self.start < self.train_end < self.val_end < self.test_end:
            raise ValueError("split dates must satisfy start < train_end < val_end < test_end")

    def assign(self, quarter: QuarterId) -> Optional[str]:
        end = quarter.end_date()
        if end < self.start or end > self.test_end:
            return None
        if end <= self.train_end:
            return "train"
        if end <= self.val_end:
            return "val"
        return "test"

    def to_dict(self) -> dict:
        return {k: getattr(self, k).isoformat() for k in ("start", "train_end", "val_end", "test_end")}

    @classmethod
    def from_dict(cls, d: dict) -> "SplitSpec":
        return cls(**{k: d[k] for k in ("start", "train_end", "val_end", "test_end") if k in d})


def code_to_float(code: str) -> float:
    """Numeric value for a categorical industry code; GICS codes are digit strings."""
    if re.fullmatch(r"\d+", code):
        return float(code)
    return float(zlib.crc32(code.encode("utf-8")) % 1_000_000)


def numeric_record(sources: AlignedSources, company: str, q: QuarterId) -> Dict[str, float]:
    fund = sources.fundamentals[(company, q)]
    rec = {k: float(getattr(fund, k)) for k in FUNDAMENTAL_FLOATS}
    rec.update({k: code_to_float(getattr(fund, k)) for k in FUNDAMENTAL_CODES})
    rec.update(sources.macro[q].values)
    return rec


def build_windows(sources: AlignedSources, p: int) -> Tuple[List[Sample], Counter]:
    """One sample per (company, t) whose lags t-1..t-p are complete in every source.

    Returns the samples (sorted by company then quarter) and a counter of
    exclusion reasons, one reason per excluded target.
    """
    if not 1 <= p <= 4:
        raise ValueError(f"p must be in 1..4, got {p}")
    samples: List[Sample] = []
    excluded: Counter = Counter()
    for company, t in sorted(sources.ratings, key=lambda k: (k[0], k[1])):
        lags = [t.shift(-i) for i in range(1, p + 1)]
        reason = None
        for q in lags:
            if (company, q) not in sources.ratings:
                reason = "missing_rating"
            elif (company, q) not in sources.filings:
                reason = "missing_filing"
            elif (company, q) not in sources.fundamentals:
                reason = "missing_fundamentals"
            elif q not in sources.macro:
                reason = "missing_macro"
            if reason:
                break
        if reason:
            excluded[reason] += 1
            continue
        ratings = tuple(sources.ratings[(company, q)].rating for q in lags)
        samples.append(Sample(
            company_id=company,
            target_quarter=t,
            p=p,
            text_window=tuple(sources.filings[(company, q)].mda_text for q in lags),
            rating_window=ratings,
            numeric_window=tuple(numeric_record(sources, company, q) for q in lags),
            label=movement_label(ratings[0], sources.ratings[(company, t)].rating),
        ))
    return samples, excluded


def temporal_split(samples: Sequence[Sample], spec: SplitSpec):
    """Assign samples to (train, val, test) by the end date of their target quarter."""
    parts = {"train": [], "val": [], "test": []}
    for s in samples:
        name = spec.assign(s.target_quarter)
        if name is not None:
            parts[name].append(s)
    return parts["train"], parts["val"], parts["test"]


def class_counts(samples: Sequence[Sample]) -> Dict[str, int]:
    c = Counter(s.label.value for s in samples)
    return {l.value: c.get(l.value, 0) for l in LABEL_ORDER}


def balance_classes(samples: Sequence[Sample], seed: int) -> List[Sample]:
    """Undersample every class uniformly (without replacement) to the minority count."""
    by_label: Dict[MovementLabel, List[int]] = defaultdict(list)
    for i, s in enumerate(samples):
        by_label[s.label].append(i)
    for label in LABEL_ORDER:
        if not by_label[label]:
            raise EmptyClass(label.value)
    m = min(len(v) for v in by_label.values())
    rng = np.random.default_rng(seed)
    keep = []
    for label in LABEL_ORDER:
        idx = np.asarray(by_label[label])
        keep.extend(rng.choice(idx, size=m, replace=False).tolist())
    return [samples[i] for i in sorted(keep)]


@dataclass
class NormalizationParams:
    mins: Dict[str, float] = field(default_factory=dict)
    maxs: Dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"min": dict(sorted(self.mins.items())), "max": dict(sorted(self.maxs.items()))}

    @classmethod
    def from_dict(cls, d: dict) -> "NormalizationParams":
        return cls(mins=dict(d["min"]), maxs=dict(d["max"]))


def fit_normalizer(train: Sequence[Sample], skip: Sequence[str] = FUNDAMENTAL_CODES) -> NormalizationParams:
    """Per-column min and max over every lag of the training samples.

    Industry codes are categorical and left untouched.
    """
    params = NormalizationParams()
    for s in train:
        for rec in s.numeric_window:
            for k, v in rec.items():
                if k in skip:
                    continue
                if k not in params.mins:
                    params.mins[k] = params.maxs[k] = v
                else:
                    params.mins[k] = min(params.mins[k], v)
                    params.maxs[k] = max(params.maxs[k], v)
    return params


def normalize_value(params: NormalizationParams, name: str, x: float) -> float:
    lo, hi = params.mins[name], params.maxs[name]
    if hi == lo:
        return 0.0
    return (x - lo) / (hi - lo)


def apply_normalizer(params: NormalizationParams, samples: Sequence[Sample]) -> List[Sample]:
    """Min-max scale every fitted column. Values outside the train range are not clipped."""
    out = []
    for s in samples:
        window = tuple(
            {k: (normalize_value(params, k, v) if k in params.mins else v) for k, v in rec.items()}
            for rec in s.numeric_window
        )
        out.append(replace(s, numeric_window=window))
    return out


class WhitespaceTokenizer:
    """Default tokenizer: maximal runs of non-space characters.

    Implements the two methods ``truncate_text`` needs from a tokenizer, named
    as in Hugging Face tokenizers so those can be passed directly.
    """

    def tokenize(self, text: str) -> List[str]:
        return text.split()

    def convert_tokens_to_string(self, tokens: Sequence[str]) -> str:
        return " ".join(tokens)


def truncate_text(doc: str, max_units: int, unit: str = "tokens", tokenizer=None) -> str:
    if max_units <= 0:
        raise ValueError("max_units must be positive")
    if unit == "chars":
        return doc[:max_units]
    if unit != "tokens":
        raise ValueError(f"unit must be 'tokens' or 'chars', got {unit!r}")
    if tokenizer is None:
        # keep the original spacing of the retained prefix
        spans = list(re.finditer(r"\S+", doc))
        if len(spans) <= max_units:
            return doc
        return doc[:spans[max_units - 1].end()]
    tokens = tokenizer.tokenize(doc)
    if len(tokens) <= max_units:
        return doc
    return tokenizer.convert_tokens_to_string(tokens[:max_units])


@dataclass
class DatasetBundle:
    train: List[Sample]
    val: List[Sample]
    test: List[Sample]
    norm: NormalizationParams
    p: int
    stats: dict = field(default_factory=dict)

    def split(self, name: str) -> List[Sample]:
        return {"train": self.train, "val": self.val, "test": self.test}[name]

    def save(self, out_dir) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for name in ("train", "val", "test"):
            write_samples(self.split(name), out / f"{name}.jsonl")
        stats = dict(self.stats, p=self.p, normalizer=self.norm.to_dict())
        (out / "stats.json").write_text(json.dumps(stats, indent=2, sort_keys=True))

    @classmethod
    def load(cls, in_dir) -> "DatasetBundle":
        src = Path(in_dir)
        stats = json.loads((src / "stats.json").read_text())
        norm = NormalizationParams.from_dict(stats.pop("normalizer"))
        p = stats.pop("p")
        return cls(read_samples(src / "train.jsonl"), read_samples(src / "val.jsonl"),
                   read_samples(src / "test.jsonl"), norm, p, stats)


def write_samples(samples: Sequence[Sample], path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for s in samples:
            fh.write(json.dumps(s.to_dict(), sort_keys=True) + "\n")


def read_samples(path) -> List[Sample]:
    with Path(path).open(encoding="utf-8") as fh:
        return [Sample.from_dict(json.loads(line)) for line in fh if line.strip()]


def rating_stability(sources: AlignedSources) -> dict:
    """Share of unchanged ratings, per consecutive company-quarter pair and per company."""
    by_company = defaultdict(dict)
    for (c, q), rec in sources.ratings.items():
        by_company[c][q] = rec.rating
    pairs = same = 0
    stable_companies = rated_companies = 0
    for hist in by_company.values():
        moved = False
        observed = False
        for q, r in hist.items():
            prev = hist.get(q.prev())
            if prev is not None:
                observed = True
                pairs += 1
                same += prev == r
                moved |= prev != r
        if observed:
            rated_companies += 1
            stable_companies += not moved
    return {
        "same_share_per_quarter": same / pairs if pairs else None,
        "same_share_per_company": stable_companies / rated_companies if rated_companies else None,
    }


def build_bundle(sources: AlignedSources, p: int, seed: int, spec: SplitSpec = SplitSpec()) -> DatasetBundle:
    """Windows -> temporal split -> per-split balancing -> normalizer fitted on train."""
    samples, excluded = build_windows(sources, p)
    splits = temporal_split(samples, spec)
    stats = {
        "n_windows": len(samples),
        "exclusions": dict(sorted(excluded.items())),
        "unbalanced_counts": {},
        "balanced_counts": {},
        "split_spec": spec.to_dict(),
        "seed": seed,
    }
    balanced = []
    for name, part in zip(("train", "val", "test"), splits):
        stats["unbalanced_counts"][name] = class_counts(part)
        b = balance_classes(part, sub_seed(seed, f"balance/{name}"))
        stats["balanced_counts"][name] = class_counts(b)
        balanced.append(b)
    stats.update(rating_stability(sources))
    norm = fit_normalizer(balanced[0])
    train, val, test = (apply_normalizer(norm, part) for part in balanced)
    logger.info("built p=%d bundle: %s", p, stats["balanced_counts"])
    return DatasetBundle(train, val, test, norm, p, stats)
