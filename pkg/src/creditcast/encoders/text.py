"""Sentence splitting and word tokenization shared by the encoders."""

import re
from typing import List

# lower-cased tokens (with trailing period) that end in '.' without ending a sentence
ABBREVIATIONS = frozenset("""
inc. corp. co. ltd. llc. plc. l.p. n.a. u.s. u.k. e.g. i.e. etc. vs. v. no. nos.
mr. mrs. ms. dr. st. jr. sr. approx. est. dept. fig. figs. sec. art. ref. refs.
jan. feb. mar. apr. jun. jul. aug. sep. sept. oct. nov. dec.
""".split())

_BOUNDARY_RE = re.compile(r"[.!?]+[\"')\]]*(?=\s)")
_WORD_RE = re.compile(r"[a-z]+")


def sentence_split(doc: str) -> List[str]:
    """Split on terminal punctuation followed by whitespace, skipping known abbreviations."""
    sentences = []
    start = 0
    for m in _BOUNDARY_RE.finditer(doc):
        if doc[m.start()] == ".":
            head = doc[start:m.start() + 1].split()
            if head and head[-1].lower() in ABBREVIATIONS:
                continue
        piece = doc[start:m.end()].strip()
        if piece:
            sentences.append(piece)
        start = m.end()
    tail = doc[start:].strip()
    if tail:
        sentences.append(tail)
    return sentences


def word_tokens(doc: str) -> List[str]:
    """Lower-cased alphabetic tokens."""
    return _WORD_RE.findall(doc.lower())
