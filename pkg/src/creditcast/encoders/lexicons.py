"""Word lists for the lexicon encoders.

The bundled lists are short seed samples so the package runs out of the box.
For real experiments load the full Loughran-McDonald master dictionary and the
NRC word-emotion association lexicon with the loaders below.
"""

import csv
from pathlib import Path
from typing import Dict, FrozenSet

LM_CATEGORIES = ("positive", "negative", "litigious", "uncertainty")
NRC_CATEGORIES = ("anger", "anticipation", "disgust", "fear", "joy",
                  "negative", "positive", "sadness", "surprise", "trust")


def _ws(text: str) -> FrozenSet[str]:
    return frozenset(text.split())


LM_SEED: Dict[str, FrozenSet[str]] = {
    "positive": _ws("""able abundance accomplish accomplished achieve achieved achievement advancement
        advantage advantageous attractive beneficial benefit benefited best better boom breakthrough
        efficient enhance enhanced excellent exceptional favorable gain gained gains good great greater
        highest improve improved improvement improving innovative opportunities opportunity outperform
        positive profitable progress rebound record strength strengthen strong stronger succeed
        success successful superior"""),
    "negative": _ws("""adverse adversely bankruptcy breach challenge challenging closure concern
        decline declined declining default deficit delay deteriorate deteriorated deterioration
        difficult difficulties disruption downgrade failure impaired impairment loss losses negative
        restructuring shortfall termination unfavorable volatile weak weakened weakness worse
        writedown"""),
    "litigious": _ws("""adjudicate allegation allegations appeal arbitration attorney claimant
        contractual court courts defendant indemnification jurisdiction lawsuit lawsuits legal
        legislation litigation plaintiff regulation settlement statute testimony tribunal"""),
    "uncertainty": _ws("""almost anticipate apparently approximately assume believe could depend
        doubt fluctuate fluctuation indefinite likely may might possible possibly predict probable
        risk risks roughly seldom uncertain uncertainty unclear unknown unpredictable variable
        volatility"""),
}

NRC_SEED: Dict[str, FrozenSet[str]] = {
    "anger": _ws("abuse anger attack dispute fight fraud hostile lawsuit penalty violation"),
    "anticipation": _ws("anticipate expect forecast future hope plan prospect ready soon target"),
    "disgust": _ws("corruption disgrace fraud misconduct scandal shameful toxic waste"),
    "fear": _ws("bankruptcy crisis danger default fear risk threat uncertain volatile warning"),
    "joy": _ws("achievement celebrate growth happy improve pleased profit success reward win"),
    "negative": _ws("bad decline default failure loss negative poor problem weak worse"),
    "positive": _ws("benefit good gain growth improve positive profit strong success trust"),
    "sadness": _ws("decline depressed failure lose loss lost poor sad suffer weak"),
    "surprise": _ws("sudden surprise unexpected unusual shock abrupt"),
    "trust": _ws("assurance confidence faith guarantee reliable secure stable trust verify"),
}


def load_lm_master_dictionary(path) -> Dict[str, FrozenSet[str]]:
    """Read the Loughran-McDonald master dictionary CSV.

    A word belongs to a category when the category column (``Positive``,
    ``Negative``, ``Litigious``, ``Uncertainty``) is nonzero.
    """
    out = {c: set() for c in LM_CATEGORIES}
    with Path(path).open(newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            word = row["Word"].strip().lower()
            for cat in LM_CATEGORIES:
                val = row.get(cat.capitalize(), "0") or "0"
                if float(val) != 0:
                    out[cat].add(word)
    return {c: frozenset(w) for c, w in out.items()}


def load_nrc_lexicon(path) -> Dict[str, FrozenSet[str]]:
    """Read the NRC word-emotion association file (``word<TAB>emotion<TAB>0|1`` per line)."""
    out = {c: set() for c in NRC_CATEGORIES}
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            parts = line.strip().split("\t")
            if len(parts) != 3:
                continue
            word, emotion, flag = parts
            if emotion in out and flag.strip() == "1":
                out[emotion].add(word.lower())
    return {c: frozenset(w) for c, w in out.items()}


def all_lexicon_words() -> FrozenSet[str]:
    words = set()
    for lex in (LM_SEED, NRC_SEED):
        for ws in lex.values():
            words |= ws
    return frozenset(words)
