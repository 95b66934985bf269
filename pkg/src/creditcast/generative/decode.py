"""Closed-set label decoding and the rating-order probe."""

from __future__ import annotations

import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..core import LABEL_WORDS, RATING_LEVELS, Prediction, argmax_label, compare_ratings
from ..errors import ClientError
from .prompts import build_prompt, fit_text_budget, load_template_text, parse_sections, scale_listing

logger = logging.getLogger(__name__)


def softmax(scores: Sequence[float]) -> Tuple[float, ...]:
    m = max(scores)
    e = [math.exp(s - m) for s in scores]
    z = math.fsum(e)
    return tuple(x / z for x in e)


def _score(client, prompt: str, candidates: Sequence[str]) -> List[float]:
    try:
        scores = list(client.score_continuations(prompt, list(candidates)))
    except ClientError:
        raise
    except Exception as exc:
        raise ClientError(f"{getattr(client, 'model_id', 'client')}: {exc}") from exc
    if len(scores) != len(candidates) or not all(math.isfinite(s) for s in scores):
        raise ClientError(f"client returned invalid scores {scores!r}")
    return scores


def constrained_decode(client, prompt: str, labels: Sequence[str] = LABEL_WORDS) -> Prediction:
    """Score each movement label as a continuation and softmax the raw summed log-probs.

    The result always carries one of down/same/up, with ties going to the
    earliest of down < same < up.
    """
    if sorted(labels) != sorted(LABEL_WORDS):
        raise ValueError(f"labels must be a permutation of {LABEL_WORDS}")
    scores = dict(zip(labels, _score(client, prompt, labels)))
    probs = softmax([scores[w] for w in LABEL_WORDS])
    return Prediction(argmax_label(probs), probs)


def choose(client, prompt: str, candidates: Sequence[str]) -> Tuple[str, Tuple[float, ...]]:
    """Pick among arbitrary candidates; ties go to the first."""
    probs = softmax(_score(client, prompt, candidates))
    best = max(range(len(candidates)), key=lambda i: (probs[i], -i))
    return candidates[best], probs


@dataclass
class RankProbeReport:
    n_pairs: int
    n_correct: int
    mistakes: List[Tuple[str, str, str]] = field(default_factory=list)
    errors: List[Tuple[str, str, str]] = field(default_factory=list)

    @property
    def accuracy(self) -> float:
        scored = self.n_pairs - len(self.errors)
        return self.n_correct / scored if scored else float("nan")

    def to_dict(self) -> dict:
        return {"n_pairs": self.n_pairs, "n_correct": self.n_correct, "accuracy": self.accuracy,
                "mistakes": [list(m) for m in self.mistakes], "errors": [list(e) for e in self.errors]}


def rating_pairs(levels: Sequence[str] = RATING_LEVELS, ordered: bool = False, seed: int = 0):
    """Unordered pairs shown in a seeded random left/right order, or every ordered pair."""
    if ordered:
        return list(itertools.permutations(levels, 2))
    rng = np.random.default_rng(seed)
    pairs = []
    for a, b in itertools.combinations(levels, 2):
        pairs.append((a, b) if rng.random() < 0.5 else (b, a))
    return pairs


def rank_prompt(x: str, y: str, levels: Sequence[str] = RATING_LEVELS) -> str:
    tmpl = parse_sections(load_template_text("rank_probe.txt"))["probe"]
    return tmpl.format(scale=scale_listing(levels), x=x, y=y)


def rank_probe(client, levels: Sequence[str] = RATING_LEVELS, pairs: Optional[Sequence[tuple]] = None,
               ordered: bool = False, seed: int = 0) -> RankProbeReport:
    if pairs is None:
        pairs = rating_pairs(levels, ordered, seed)
    pairs = list(pairs)
    if not pairs:
        raise ValueError("rank probe needs at least one rating pair")
    report = RankProbeReport(n_pairs=len(pairs), n_correct=0)
    for x, y in pairs:
        try:
            answer, _ = choose(client, rank_prompt(x, y, levels), [x, y])
        except ClientError as exc:
            report.errors.append((x, y, str(exc)))
            continue
        truth = compare_ratings(x, y)
        if answer == truth:
            report.n_correct += 1
        else:
            report.mistakes.append((x, y, answer))
    return report


def predict_gen(client, template, samples, ablation="all", estimates=None,
                max_text_tokens: Optional[int] = None, max_workers: int = 1) -> List[Prediction]:
    """Prompt and decode every sample; ``estimates`` (one per sample) feed injection ablations.

    Calls run on a bounded thread pool when ``max_workers > 1``; output order
    always follows ``samples``.
    """
    samples = list(samples)
    if estimates is not None and len(estimates) != len(samples):
        raise ValueError("need exactly one estimate per sample")

    def one(i):
        s = samples[i]
        if max_text_tokens:
            s = fit_text_budget(s, max_text_tokens)
        prompt = build_prompt(template, s, ablation, estimate=estimates[i] if estimates else None,
                              context_tokens=getattr(client, "context_tokens", None),
                              count_tokens=client.count_tokens)
        return constrained_decode(client, prompt)

    if max_workers <= 1:
        return [one(i) for i in range(len(samples))]
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        return list(pool.map(one, range(len(samples))))
