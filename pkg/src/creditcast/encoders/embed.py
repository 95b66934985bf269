"""Mean final-layer token embedding of a document's opening tokens."""

from __future__ import annotations

import logging
from typing import Optional

import numpy as np

from .backends import EmbeddingBackend, StubEmbeddingBackend
from .base import TextEncoder

logger = logging.getLogger(__name__)


def truncated_embed_encode(doc: str, backend: EmbeddingBackend, max_tokens: int = 512) -> np.ndarray:
    vecs = backend.token_vectors(doc, max_tokens)
    if len(vecs) == 0:
        logger.warning("truncated_embed_encode: empty document, returning zero vector")
        return np.zeros(backend.dim)
    return vecs[:max_tokens].mean(axis=0)


class EmbedEncoder(TextEncoder):
    name = "embed"
    fitted = True

    def __init__(self, backend: Optional[EmbeddingBackend] = None, max_tokens: int = 512):
        self.backend = backend or StubEmbeddingBackend()
        self.max_tokens = max_tokens
        self.output_dim = self.backend.dim

    def _encode(self, doc):
        return truncated_embed_encode(doc, self.backend, self.max_tokens)
