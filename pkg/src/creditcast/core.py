"""Domain types: the S&P rating scale, movement labels, quarters, samples and predictions."""

from __future__ import annotations

import datetime as dt
import enum
import hashlib
import math
import re
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Sequence, Tuple

from .errors import SchemaError, UnknownRating

RATING_LEVELS: Tuple[str, ...] = (
    "AAA", "AA+", "AA", "AA-", "A+", "A", "A-",
    "BBB+", "BBB", "BBB-", "BB+", "BB", "BB-",
    "B+", "B", "B-", "CCC", "CCC-", "CC", "C", "SD",
)

# Category definitions (one per letter grade; modifiers share them), printed by `creditcast scale`.
RATING_DEFINITIONS: Dict[str, str] = {
    "AAA": "Top grade. Repayment ability is as solid as ratings allow.",
    "AA": "Just below the top grade. Repayment ability is very solid.",
    "A": "Solid repayment ability, though a downturn could dent it.",
    "BBB": "Enough cushion today; a weaker economy may erode it. Lowest investment grade.",
    "BB": "Highest speculative grade. Near-term default is unlikely, but exposures to shocks are large.",
    "B": "Speculative. Paying now, with little room if conditions sour.",
    "CCC": "Repayment hinges on a benign business and financial climate.",
    "CC": "Default not yet occurred but widely anticipated.",
    "C": "Near default, with weak seniority or poor recovery prospects.",
    "SD": "Has missed payment on some, not all, of its obligations (selective default).",
}


@dataclass(frozen=True)
class RatingScale:
    levels: Tuple[str, ...] = RATING_LEVELS

    def __post_init__(self):
        if len(set(self.levels)) != len(self.levels):
            raise ValueError("rating scale contains duplicate codes")
        object.__setattr__(self, "_index", {c: i for i, c in enumerate(self.levels)})

    def __len__(self):
        return len(self.levels)

    def __iter__(self):
        return iter(self.levels)

    def __contains__(self, code):
        return isinstance(code, str) and code.strip() in self._index

    def rank(self, code: str) -> int:
        if not isinstance(code, str):
            raise UnknownRating(code)
        try:
            return self._index[code.strip()]
        except KeyError:
            raise UnknownRating(code) from None

    def code(self, rank: int) -> str:
        return self.levels[rank]


SP_SCALE = RatingScale()


def rating_rank(code: str, scale: RatingScale = SP_SCALE) -> int:
    """Position of ``code`` on the scale, 0 being the least risky (AAA)."""
    return scale.rank(code)


def compare_ratings(a: str, b: str, scale: RatingScale = SP_SCALE) -> str:
    """Return the less risky of two ratings; ``a`` on ties."""
    ra, rb = scale.rank(a), scale.rank(b)
    return a.strip() if ra <= rb else b.strip()


class MovementLabel(str, enum.Enum):
    DOWN = "down"
    SAME = "same"
    UP = "up"

    def __str__(self):
        return self.value

    @property
    def index(self) -> int:
        return LABEL_ORDER.index(self)


# Fixed order used for probability vectors and for argmax tie-breaking.
LABEL_ORDER: Tuple[MovementLabel, ...] = (MovementLabel.DOWN, MovementLabel.SAME, MovementLabel.UP)
LABEL_WORDS: Tuple[str, ...] = tuple(l.value for l in LABEL_ORDER)


def movement_label(prev: str, curr: str, scale: RatingScale = SP_SCALE) -> MovementLabel:
    rp, rc = scale.rank(prev), scale.rank(curr)
    if rc < rp:
        return MovementLabel.UP
    if rc > rp:
        return MovementLabel.DOWN
    return MovementLabel.SAME


_QUARTER_RE = re.compile(r"^\s*(\d{4})\s*-?\s*[Qq]([1-4])\s*$")


@dataclass(frozen=True, order=True)
class QuarterId:
    year: int
    quarter: int

    def __post_init__(self):
        if not 1 <= self.quarter <= 4:
            raise ValueError(f"quarter must be in 1..4, got {self.quarter}")

    @classmethod
    def parse(cls, text: str) -> "QuarterId":
        m = _QUARTER_RE.match(str(text))
        if not m:
            raise ValueError(f"cannot parse quarter {text!r}; expected e.g. '2012Q4'")
        return cls(int(m.group(1)), int(m.group(2)))

    @classmethod
    def from_date(cls, d: dt.date) -> "QuarterId":
        return cls(d.year, (d.month - 1) // 3 + 1)

    def shift(self, n: int) -> "QuarterId":
        idx = self.year * 4 + (self.quarter - 1) + n
        return QuarterId(idx // 4, idx % 4 + 1)

    def next(self) -> "QuarterId":
        return self.shift(1)

    def prev(self) -> "QuarterId":
        return self.shift(-1)

    def start_date(self) -> dt.date:
        return dt.date(self.year, 3 * self.quarter - 2, 1)

    def end_date(self) -> dt.date:
        return self.next().start_date() - dt.timedelta(days=1)

    def __str__(self):
        return f"{self.year}Q{self.quarter}"


@dataclass(frozen=True)
class Sample:
    """One prediction instance. Every window is ordered most-recent-first (t-1, ..., t-p)."""

    company_id: str
    target_quarter: QuarterId
    p: int
    text_window: Tuple[str, ...]
    rating_window: Tuple[str, ...]
    numeric_window: Tuple[Mapping[str, float], ...]
    label: MovementLabel

    def __post_init__(self):
        if not 1 <= self.p <= 4:
            raise ValueError(f"lag count p must be in 1..4, got {self.p}")
        for name in ("text_window", "rating_window", "numeric_window"):
            window = getattr(self, name)
            if len(window) != self.p:
                raise ValueError(f"{name} has length {len(window)}, expected p={self.p}")
            object.__setattr__(self, name, tuple(window))
        object.__setattr__(self, "label", MovementLabel(self.label))

    @property
    def key(self) -> Tuple[str, QuarterId]:
        return (self.company_id, self.target_quarter)

    def to_dict(self) -> dict:
        return {
            "company_id": self.company_id,
            "target_quarter": str(self.target_quarter),
            "p": self.p,
            "text_window": list(self.text_window),
            "rating_window": list(self.rating_window),
            "numeric_window": [dict(r) for r in self.numeric_window],
            "label": self.label.value,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "Sample":
        return cls(
            company_id=str(d["company_id"]),
            target_quarter=QuarterId.parse(d["target_quarter"]),
            p=int(d["p"]),
            text_window=tuple(d["text_window"]),
            rating_window=tuple(d["rating_window"]),
            numeric_window=tuple(dict(r) for r in d["numeric_window"]),
            label=MovementLabel(d["label"]),
        )


FEATURE_GROUPS = ("macro", "fundamental", "text", "credit_rating", "estimate")


@dataclass
class FeatureVector:
    """Named features, each tagged with exactly one modality group."""

    entries: Dict[str, float] = field(default_factory=dict)
    groups: Dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if set(self.entries) != set(self.groups):
            raise SchemaError("every feature needs exactly one group")
        bad = {g for g in self.groups.values() if g not in FEATURE_GROUPS}
        if bad:
            raise SchemaError(f"unknown feature groups: {sorted(bad)}")

    def add(self, name: str, value: float, group: str) -> None:
        if group not in FEATURE_GROUPS:
            raise SchemaError(f"unknown feature group {group!r}")
        if name in self.entries:
            raise SchemaError(f"duplicate feature {name!r}")
        self.entries[name] = float(value)
        self.groups[name] = group

    @property
    def names(self) -> List[str]:
        return list(self.entries)


def argmax_label(probs: Sequence[float]) -> MovementLabel:
    best = 0
    for i in range(1, 3):
        if probs[i] > probs[best]:
            best = i
    return LABEL_ORDER[best]


@dataclass(frozen=True)
class Prediction:
    label: MovementLabel
    probs: Tuple[float, float, float]

    def __post_init__(self):
        probs = tuple(float(x) for x in self.probs)
        if len(probs) != 3:
            raise ValueError("probs must have exactly three entries (down, same, up)")
        if any(not math.isfinite(x) or x < 0 for x in probs):
            raise ValueError(f"probs must be finite and nonnegative: {probs}")
        if abs(sum(probs) - 1.0) > 1e-9:
            raise ValueError(f"probs must sum to 1, got {sum(probs)!r}")
        label = MovementLabel(self.label)
        if label != argmax_label(probs):
            raise ValueError(f"label {label.value} is not the argmax of {probs}")
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "label", label)

    @classmethod
    def from_probs(cls, probs: Sequence[float]) -> "Prediction":
        total = math.fsum(probs)
        normed = tuple(float(x) / total for x in probs)
        return cls(argmax_label(normed), normed)

    @property
    def confidence(self) -> float:
        return self.probs[self.label.index]

    def to_dict(self) -> dict:
        return {"label": self.label.value, "probs": list(self.probs)}

    @classmethod
    def from_dict(cls, d: Mapping) -> "Prediction":
        return cls(MovementLabel(d["label"]), tuple(d["probs"]))


def sub_seed(seed: int, name: str) -> int:
    """Derive a stable named sub-seed so each stage draws from its own stream."""
    digest = hashlib.sha256(f"{int(seed)}/{name}".encode()).digest()
    return int.from_bytes(digest[:4], "little")
