"""Synthetic four-source corpus with a planted text-to-movement signal.

Each company-quarter draws a hidden outlook ``z`` in {down, same, up}. The
filing for that quarter mentions positive seed words when ``z`` is up and
negative seed words when it is down. With probability ``strength`` the rating
moves in direction ``z`` over the following quarter; otherwise the movement is
drawn independently from the base rates. Fundamentals and macro series are
noise, so text is the only informative modality.

The rest of every filing is filler drawn from ``n_topics`` disjoint
pseudo-word vocabularies, which gives sentence-level clusters for the cluster
encoder to find.
"""

from __future__ import annotations

import csv
import datetime as dt
from pathlib import Path
from typing import Dict, List

import numpy as np

from .core import RATING_LEVELS, QuarterId
from .encoders.lexicons import LM_SEED, all_lexicon_words

BASE_RATES = {"down": 0.2, "same": 0.6, "up": 0.2}
MACRO_SERIES = ("cpi_yoy", "fed_funds", "gdp_growth", "unemployment")
LAST_QUARTER = QuarterId(2016, 4)

_CONSONANTS = "bdfgklmnprstvz"
_VOWELS = "aeiou"
# vocabulary is fixed across seeds so cluster structure does not depend on the corpus seed
_VOCAB_SEED = 20240601


def _pseudo_words(n_topics: int, words_per_topic: int) -> List[List[str]]:
    rng = np.random.default_rng(_VOCAB_SEED)
    taken = set(all_lexicon_words())
    topics = []
    for _ in range(n_topics):
        vocab = []
        while len(vocab) < words_per_topic:
            n_syl = int(rng.integers(2, 4))
            w = "".join(_CONSONANTS[rng.integers(len(_CONSONANTS))] + _VOWELS[rng.integers(len(_VOWELS))]
                        for _ in range(n_syl))
            if w not in taken:
                taken.add(w)
                vocab.append(w)
        topics.append(vocab)
    return topics


def _sentence(rng, words: List[str], lo: int, hi: int) -> str:
    n = int(rng.integers(lo, hi + 1))
    picked = [words[i] for i in rng.integers(0, len(words), size=n)]
    return " ".join(picked).capitalize() + "."


def _signal_counts(rng, z: str):
    """(positive, negative) signal sentence counts for an outlook."""
    if z == "up":
        return int(rng.integers(2, 5)), 0
    if z == "down":
        return 0, int(rng.integers(2, 5))
    return int(rng.integers(0, 2)), int(rng.integers(0, 2))


def _filing_text(rng, z: str, topics, pos_words, neg_words) -> str:
    n_pos, n_neg = _signal_counts(rng, z)
    sentences = []
    for t in rng.choice(len(topics), size=int(rng.integers(4, 8)), replace=False):
        sentences.append(_sentence(rng, topics[t], 5, 8))
    for _ in range(n_pos):
        sentences.append(_sentence(rng, pos_words, 3, 5))
    for _ in range(n_neg):
        sentences.append(_sentence(rng, neg_words, 3, 5))
    order = rng.permutation(len(sentences))
    text = " ".join(sentences[i] for i in order)
    if rng.random() < 0.1:
        text = f"<p>{text}</p> &nbsp; See https://example.com/filings for details."
    return text


def _fmt(x: float) -> str:
    return f"{x:.6f}"


def generate_synthetic_corpus(out_dir, seed: int = 0, n_companies: int = 80, n_quarters: int = 40,
                              strength: float = 1.0, n_topics: int = 130,
                              words_per_topic: int = 8) -> Dict[str, Path]:
    """Write ratings.csv, filings.csv, fundamentals.csv and macro.csv; return their paths.

    Quarters end at 2016Q4 so the default temporal split applies. Output is
    byte-identical for a fixed argument set.
    """
    if n_companies < 1 or n_quarters < 1:
        raise ValueError("n_companies and n_quarters must be at least 1")
    if not 0.0 <= strength <= 1.0:
        raise ValueError("strength must be in [0, 1]")
    rng = np.random.default_rng(seed)
    topics = _pseudo_words(n_topics, words_per_topic)
    pos_words = sorted(LM_SEED["positive"])
    neg_words = sorted(LM_SEED["negative"])
    labels = list(BASE_RATES)
    base_p = np.array([BASE_RATES[k] for k in labels])
    quarters = [LAST_QUARTER.shift(i - n_quarters + 1) for i in range(n_quarters)]
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    ratings_rows, filing_rows, fund_rows = [], [], []
    top = len(RATING_LEVELS) - 2  # SD is never reached
    for c in range(n_companies):
        cid = f"C{c:04d}"
        sector = int(rng.choice([10, 15, 20, 25, 30, 35, 40, 45, 50, 55, 60]))
        group = sector * 100 + int(rng.integers(1, 4)) * 10
        ind = group * 100 + int(rng.integers(1, 4)) * 10
        subind = ind * 100 + int(rng.integers(1, 4)) * 10
        rank = int(rng.integers(6, 15))
        assets = float(rng.lognormal(8.0, 1.0))
        z_prev = None
        for q in quarters:
            if z_prev is not None:
                move = z_prev if rng.random() < strength else labels[int(rng.choice(3, p=base_p))]
                step = {"down": 1, "same": 0, "up": -1}[move]
                if 0 <= rank + step <= top:
                    rank += step
            z = labels[int(rng.choice(3, p=base_p))]
            start = q.start_date()
            day = start + dt.timedelta(days=int(rng.integers(0, (q.end_date() - start).days + 1)))
            ratings_rows.append((cid, day.isoformat(), RATING_LEVELS[rank]))
            ftype = "10-K" if q.quarter == 4 else "10-Q"
            fdate = q.end_date() + dt.timedelta(days=int(rng.integers(30, 60)))
            filing_rows.append((cid, q.year, "" if ftype == "10-K" else q.quarter, ftype, fdate.isoformat(),
                                _filing_text(rng, z, topics, pos_words, neg_words)))
            assets *= float(np.exp(rng.normal(0.01, 0.05)))
            liab = assets * float(rng.uniform(0.3, 0.9))
            pretax = assets * float(rng.normal(0.02, 0.02))
            net = pretax * float(rng.uniform(0.6, 0.8))
            fund_rows.append((cid, str(q), _fmt(net), _fmt(liab), _fmt(pretax), _fmt(assets),
                              group, ind, sector, subind))
            z_prev = z

    macro_rows = []
    levels = np.array([2.0, 2.5, 2.0, 5.5])
    for q in quarters:
        for m in range(3):
            levels = levels + rng.normal(0.0, 0.15, size=len(levels))
            macro_rows.append((dt.date(q.year, 3 * (q.quarter - 1) + m + 1, 1).isoformat(),
                               *(_fmt(v) for v in levels)))

    paths = {k: out / f"{k}.csv" for k in ("ratings", "filings", "fundamentals", "macro")}
    _write(paths["ratings"], ("company_id", "date", "rating"), ratings_rows)
    _write(paths["filings"], ("company_id", "fiscal_year", "fiscal_quarter", "filing_type", "filing_date",
                              "mda_text"), filing_rows)
    _write(paths["fundamentals"], ("company_id", "quarter", "niq", "ltq", "piq", "atq", "ggroup", "gind",
                                   "gsector", "gsubind"), fund_rows)
    _write(paths["macro"], ("date",) + MACRO_SERIES, macro_rows)
    return paths


def _write(path: Path, header, rows) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
