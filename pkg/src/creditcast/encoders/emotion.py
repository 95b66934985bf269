"""Chunked emotion-classifier features."""

from __future__ import annotations

from typing import Optional

import numpy as np

from .backends import EmotionClassifier, StubEmotionClassifier
from .base import TextEncoder


def chunk_classify_encode(doc: str, classifier: EmotionClassifier, chunk: int = 512) -> np.ndarray:
    """Average of the classifier's simplex over consecutive ``chunk``-token pieces of ``doc``."""
    tokens = classifier.tokenize(doc)
    if len(tokens) <= chunk:
        pieces = [doc]
    else:
        pieces = [classifier.detokenize(tokens[i:i + chunk]) for i in range(0, len(tokens), chunk)]
    probs = np.asarray(classifier.classify(pieces), dtype=float)
    if len(pieces) == 1:
        return probs[0]
    return probs.mean(axis=0)


class EmotionEncoder(TextEncoder):
    name = "emotion"
    fitted = True

    def __init__(self, classifier: Optional[EmotionClassifier] = None, chunk: int = 512):
        self.classifier = classifier or StubEmotionClassifier()
        self.chunk = chunk
        self.output_dim = len(self.classifier.labels)

    def _encode(self, doc):
        return chunk_classify_encode(doc, self.classifier, self.chunk)

    @property
    def feature_names(self):
        return [f"emotion_{e}" for e in self.classifier.labels]
