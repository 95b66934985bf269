"""The six text encoders and their factory/persistence helpers."""

from __future__ import annotations

import pickle
from pathlib import Path
from typing import Optional

from .backends import (EMOTIONS, StubEmbeddingBackend, StubEmotionClassifier,
                       make_embedding_backend, make_emotion_classifier)
from .base import TextEncoder
from .clusters import ClusterEncoder, ClusterModel, cluster_encode, cluster_fit
from .embed import EmbedEncoder, truncated_embed_encode
from .emotion import EmotionEncoder, chunk_classify_encode
from .lda import LDAEncoder, lda_encode, lda_fit
from .lexicon import LexiconEncoder, lexicon_encode, lm_encoder, nrc_encoder
from .lexicons import load_lm_master_dictionary, load_nrc_lexicon
from .text import sentence_split, word_tokens

ENCODER_NAMES = ("lm", "nrc", "lda", "clusters", "emotion", "embed")
BUNDLE_FORMAT = "creditcast-encoder"
BUNDLE_VERSION = 1

__all__ = ["BUNDLE_FORMAT", "EMOTIONS", "ENCODER_NAMES", "ClusterEncoder", "ClusterModel", "EmbedEncoder",
           "EmotionEncoder", "LDAEncoder", "LexiconEncoder", "StubEmbeddingBackend", "StubEmotionClassifier",
           "TextEncoder", "chunk_classify_encode", "cluster_encode", "cluster_fit", "lda_encode", "lda_fit",
           "lexicon_encode", "lm_encoder", "load_encoder", "load_lm_master_dictionary", "load_nrc_lexicon",
           "make_embedding_backend", "make_emotion_classifier", "make_encoder", "nrc_encoder", "save_encoder",
           "sentence_split", "truncated_embed_encode", "word_tokens"]


def make_encoder(name: str, seed: int = 0, params: Optional[dict] = None) -> TextEncoder:
    """Build an unfitted encoder from a name and a flat parameter dict."""
    params = dict(params or {})
    if name == "lm":
        path = params.pop("lexicon_path", None)
        return lm_encoder(load_lm_master_dictionary(path) if path else None)
    if name == "nrc":
        path = params.pop("lexicon_path", None)
        return nrc_encoder(load_nrc_lexicon(path) if path else None)
    if name == "lda":
        return LDAEncoder(n_topics=params.pop("T", 25), seed=seed, **params)
    if name == "clusters":
        backend = make_embedding_backend(params.pop("backend", None))
        return ClusterEncoder(backend=backend, K=params.pop("K", 100), seed=seed,
                              temperature=params.pop("tau", 1.0), **params)
    if name == "emotion":
        clf = make_emotion_classifier(params.pop("classifier", None))
        return EmotionEncoder(classifier=clf, chunk=params.pop("chunk", 512))
    if name == "embed":
        backend = make_embedding_backend(params.pop("backend", None))
        return EmbedEncoder(backend=backend, max_tokens=params.pop("max_tokens", 512))
    raise ValueError(f"unknown encoder {name!r}; expected one of {ENCODER_NAMES}")


def save_encoder(encoder: TextEncoder, path) -> None:
    payload = {"format": BUNDLE_FORMAT, "version": BUNDLE_VERSION, "name": encoder.name,
               "encoder": encoder}
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        pickle.dump(payload, fh, protocol=pickle.HIGHEST_PROTOCOL)


def load_encoder(path) -> TextEncoder:
    with open(path, "rb") as fh:
        payload = pickle.load(fh)
    if payload.get("format") != BUNDLE_FORMAT or payload.get("version") != BUNDLE_VERSION:
        raise ValueError(f"{path} is not a version-{BUNDLE_VERSION} encoder bundle")
    return payload["encoder"]
