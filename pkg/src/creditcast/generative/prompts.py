"""Prompt templates, numeric serialization and prompt assembly for the generative models."""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Callable, Dict, Mapping, Optional, Sequence, Tuple

from ..core import RATING_LEVELS, Prediction, Sample
from ..dataset import truncate_text
from ..errors import ContextOverflow
from ..ingestion import FUNDAMENTAL_CODES, FUNDAMENTAL_DESCRIPTIONS
from ..features import numeric_columns

ABLATIONS = ("all", "numeric_only", "text_only")
_SECTION_RE = re.compile(r"^\[\[([\w.]+)\]\]\s*$")


def parse_sections(text: str) -> Dict[str, str]:
    """Split a template file into ``{name: body}`` on ``[[name]]`` marker lines."""
    sections: Dict[str, list] = {}
    current = None
    for line in text.splitlines():
        m = _SECTION_RE.match(line)
        if m:
            current = m.group(1)
            sections[current] = []
        elif current is not None:
            sections[current].append(line)
        elif line.strip() and not line.startswith("#"):
            raise ValueError(f"template text outside any section: {line!r}")
    return {k: "\n".join(v).strip("\n") for k, v in sections.items()}


def load_template_text(name: str) -> str:
    return resources.files("creditcast.generative").joinpath("templates", name).read_text(encoding="utf-8")


def scale_listing(levels: Sequence[str] = RATING_LEVELS) -> str:
    return ", ".join(f"'{c}'" for c in levels)


@dataclass(frozen=True)
class Ablation:
    base: str = "all"
    inject_estimate: bool = False

    def __post_init__(self):
        if self.base not in ABLATIONS:
            raise ValueError(f"ablation must be one of {ABLATIONS}, got {self.base!r}")

    @classmethod
    def parse(cls, text: str) -> "Ablation":
        base, _, extra = text.partition("+")
        if extra and extra not in ("estimate", "injected_estimate"):
            raise ValueError(f"unknown ablation modifier {extra!r}")
        return cls(base or "all", bool(extra))

    @property
    def numeric(self) -> bool:
        return self.base in ("all", "numeric_only")

    @property
    def text(self) -> bool:
        return self.base in ("all", "text_only")

    def __str__(self):
        return self.base + ("+estimate" if self.inject_estimate else "")


@dataclass(frozen=True)
class Estimate:
    """Another model's answer, injected into the prompt."""

    label: str
    prob: float
    source: str = "model"

    @classmethod
    def from_prediction(cls, pred: Prediction, source: str = "model") -> "Estimate":
        return cls(pred.label.value, pred.confidence, source)


def _fmt(col: str, v: float) -> str:
    if col in FUNDAMENTAL_CODES:
        return str(int(round(v)))
    return f"{v:.4f}"


def serialize_numeric(sample: Sample, columns: Optional[Sequence[str]] = None) -> str:
    """Ratings then one line per numeric column, values most-recent-first.

    ``sample`` is expected to be normalized already; floats are printed with
    four decimals, industry codes as integers.
    """
    columns = list(columns) if columns is not None else numeric_columns([sample])
    lines = ["ratings: " + ", ".join(sample.rating_window)]
    for c in columns:
        lines.append(f"{c}: " + ", ".join(_fmt(c, rec[c]) for rec in sample.numeric_window))
    return "\n".join(lines)


def count_tokens_ws(text: str) -> int:
    return len(text.split())


@dataclass
class PromptTemplate:
    sections: Dict[str, str]
    fundamental_definitions: Mapping[str, str] = field(default_factory=lambda: dict(FUNDAMENTAL_DESCRIPTIONS))
    macro_definitions: Mapping[str, str] = field(default_factory=dict)
    scale: Tuple[str, ...] = RATING_LEVELS

    @classmethod
    def default(cls, macro_definitions: Optional[Mapping[str, str]] = None) -> "PromptTemplate":
        return cls(parse_sections(load_template_text("forecast.txt")),
                   macro_definitions=dict(macro_definitions or {}))

    @classmethod
    def from_file(cls, path, macro_definitions: Optional[Mapping[str, str]] = None) -> "PromptTemplate":
        return cls(parse_sections(Path(path).read_text(encoding="utf-8")),
                   macro_definitions=dict(macro_definitions or {}))

    def _definitions(self, defs: Mapping[str, str], names: Sequence[str]) -> str:
        return "\n".join(f"{n}: {defs.get(n, n)}" for n in names)

    def render(self, sample: Sample, ablation: Ablation, estimate: Optional[Estimate] = None) -> str:
        s = self.sections
        columns = numeric_columns([sample])
        fund_cols = [c for c in columns if c in self.fundamental_definitions]
        macro_cols = [c for c in columns if c not in self.fundamental_definitions]
        parts = [s[f"system.{ablation.base}"]]
        if ablation.numeric:
            parts.append(s["scale"].format(scale=scale_listing(self.scale)))
            if fund_cols:
                parts.append(s["fundamentals"].format(
                    fundamental_definitions=self._definitions(self.fundamental_definitions, fund_cols)))
            if macro_cols:
                parts.append(s["macro"].format(
                    macro_definitions=self._definitions(self.macro_definitions, macro_cols)))
        parts.append(s["user"])
        if ablation.inject_estimate:
            if estimate is None:
                raise ValueError("ablation injects an estimate but none was given")
            parts.append(s["estimate"].format(source=estimate.source, label=estimate.label,
                                              prob=f"{estimate.prob:.4f}"))
        parts.append(s[f"lead.{ablation.base}"])
        if ablation.numeric:
            parts.append(serialize_numeric(sample, columns))
        if ablation.text:
            body = "\n".join(f"[t-{i + 1}] {doc}" for i, doc in enumerate(sample.text_window))
            parts.append(s["text_header"] + "\n" + body)
        return "\n".join(parts) + "\n"


def build_prompt(template: PromptTemplate, sample: Sample, ablation="all",
                 estimate: Optional[Estimate] = None, context_tokens: Optional[int] = None,
                 count_tokens: Callable[[str], int] = count_tokens_ws) -> str:
    if isinstance(ablation, str):
        ablation = Ablation.parse(ablation)
    prompt = template.render(sample, ablation, estimate)
    if context_tokens is not None:
        n = count_tokens(prompt)
        if n > context_tokens:
            raise ContextOverflow(n - context_tokens, context_tokens)
    return prompt


def fit_text_budget(sample: Sample, max_tokens_per_doc: int, tokenizer=None) -> Sample:
    """Truncate every filing in the window to its first ``max_tokens_per_doc`` tokens."""
    return replace(sample, text_window=tuple(
        truncate_text(d, max_tokens_per_doc, "tokens", tokenizer) for d in sample.text_window))
