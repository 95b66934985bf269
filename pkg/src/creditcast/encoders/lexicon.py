"""Word-count lexicon features normalized by the per-category training maximum."""

from __future__ import annotations

from typing import Dict, Iterable, List, Mapping, Optional, Sequence

import numpy as np

from .base import TextEncoder
from .lexicons import LM_CATEGORIES, LM_SEED, NRC_CATEGORIES, NRC_SEED
from .text import word_tokens


def lexicon_counts(doc: str, lexicon: Mapping[str, Iterable[str]], categories: Sequence[str]) -> np.ndarray:
    words = word_tokens(doc)
    return np.array([sum(w in lexicon[c] for w in words) for c in categories], dtype=float)


def lexicon_encode(doc: str, lexicon: Mapping[str, Iterable[str]], train_max: Sequence[float],
                   categories: Optional[Sequence[str]] = None) -> np.ndarray:
    """Per-category counts divided by the category's train maximum (0 where that maximum is 0)."""
    categories = list(categories or lexicon)
    counts = lexicon_counts(doc, lexicon, categories)
    maxima = np.asarray(train_max, dtype=float)
    out = np.zeros_like(counts)
    nz = maxima > 0
    out[nz] = counts[nz] / maxima[nz]
    return out


class LexiconEncoder(TextEncoder):
    """Usable straight away with raw counts; ``fit`` sets the normalizing maxima."""

    fitted = True

    def __init__(self, lexicon: Mapping[str, Iterable[str]], name: str = "lexicon",
                 categories: Optional[Sequence[str]] = None):
        self.categories: List[str] = list(categories or lexicon)
        self.lexicon: Dict[str, frozenset] = {c: frozenset(lexicon[c]) for c in self.categories}
        self.name = name
        self.output_dim = len(self.categories)
        self.train_max = np.ones(self.output_dim)

    def _fit(self, docs):
        maxima = np.zeros(self.output_dim)
        for d in docs:
            maxima = np.maximum(maxima, lexicon_counts(d, self.lexicon, self.categories))
        self.train_max = maxima

    def _encode(self, doc):
        return lexicon_encode(doc, self.lexicon, self.train_max, self.categories)

    @property
    def feature_names(self):
        return [f"{self.name}_{c}" for c in self.categories]


def lm_encoder(lexicon=None) -> LexiconEncoder:
    return LexiconEncoder(lexicon or LM_SEED, name="lm", categories=LM_CATEGORIES)


def nrc_encoder(lexicon=None) -> LexiconEncoder:
    return LexiconEncoder(lexicon or NRC_SEED, name="nrc", categories=NRC_CATEGORIES)
