"""Embedding and classifier backends.

The stub backends are deterministic, dependency-free and thread-safe; the
Hugging Face backends load their weights lazily on first use and drop them when
pickled, so fitted encoders can be saved without the model.
"""

from __future__ import annotations

import hashlib
import logging
from typing import Dict, List, Optional, Protocol, Sequence

import numpy as np

from .text import word_tokens

logger = logging.getLogger(__name__)

EMOTIONS = ("anger", "disgust", "fear", "joy", "neutral", "sadness", "surprise")


class EmbeddingBackend(Protocol):
    dim: int
    max_sequence_units: int

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        """One vector per text, shape ``(len(texts), dim)``."""

    def token_vectors(self, text: str, max_tokens: int) -> np.ndarray:
        """Final-layer vectors of the first ``max_tokens`` tokens, shape ``(n, dim)``."""


class EmotionClassifier(Protocol):
    labels: Sequence[str]

    def tokenize(self, text: str) -> List[str]: ...

    def detokenize(self, tokens: Sequence[str]) -> str: ...

    def classify(self, texts: Sequence[str]) -> np.ndarray:
        """Probability simplex over ``labels`` per text."""


def _seed_for(token: str, salt: str) -> int:
    return int.from_bytes(hashlib.blake2b(f"{salt}:{token}".encode(), digest_size=8).digest(), "little")


class StubEmbeddingBackend:
    """Hashed bag-of-words embeddings.

    Every alphabetic token maps to a fixed pseudo-random Gaussian vector; a
    text embeds to the unit-normalized mean of its token vectors. Texts sharing
    vocabulary land close together, which is all the clustering stage needs.
    """

    def __init__(self, dim: int = 64, max_sequence_units: int = 512, salt: str = "stub"):
        self.dim = dim
        self.max_sequence_units = max_sequence_units
        self.salt = salt
        self._cache: Dict[str, np.ndarray] = {}

    def spec(self) -> dict:
        return {"kind": "stub", "dim": self.dim, "max_sequence_units": self.max_sequence_units,
                "salt": self.salt}

    def _vec(self, token: str) -> np.ndarray:
        v = self._cache.get(token)
        if v is None:
            rng = np.random.default_rng(_seed_for(token, self.salt))
            v = rng.standard_normal(self.dim)
            self._cache[token] = v
        return v

    def token_vectors(self, text: str, max_tokens: Optional[int] = None) -> np.ndarray:
        tokens = word_tokens(text)
        limit = self.max_sequence_units if max_tokens is None else min(max_tokens, self.max_sequence_units)
        tokens = tokens[:limit]
        if not tokens:
            return np.zeros((0, self.dim))
        return np.stack([self._vec(t) for t in tokens])

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        out = np.zeros((len(texts), self.dim))
        for i, text in enumerate(texts):
            vecs = self.token_vectors(text)
            if len(vecs):
                m = vecs.mean(axis=0)
                out[i] = m / np.linalg.norm(m)
        return out

    def __getstate__(self):
        state = dict(self.__dict__)
        state["_cache"] = {}
        return state


# Keyword cues for the stub emotion classifier.
STUB_EMOTION_CUES = {
    "anger": {"dispute", "breach", "violation", "penalty", "lawsuit", "hostile", "unfair"},
    "disgust": {"misconduct", "fraud", "improper", "scandal", "misstatement"},
    "fear": {"risk", "risks", "uncertain", "uncertainty", "default", "volatility", "threat", "exposure"},
    "joy": {"growth", "improved", "strong", "record", "success", "gain", "gains", "favorable"},
    "neutral": {"quarter", "company", "period", "results", "compared", "million", "operations"},
    "sadness": {"decline", "declined", "loss", "losses", "impairment", "weak", "deteriorated"},
    "surprise": {"unexpected", "unusual", "sudden", "unanticipated", "surprising"},
}


class StubEmotionClassifier:
    """Smoothed keyword counts over the seven emotion labels."""

    labels = EMOTIONS

    def __init__(self, smoothing: float = 1.0):
        self.smoothing = smoothing

    def spec(self) -> dict:
        return {"kind": "stub", "smoothing": self.smoothing}

    def tokenize(self, text: str) -> List[str]:
        return text.split()

    def detokenize(self, tokens: Sequence[str]) -> str:
        return " ".join(tokens)

    def classify(self, texts: Sequence[str]) -> np.ndarray:
        out = np.empty((len(texts), len(self.labels)))
        for i, text in enumerate(texts):
            words = word_tokens(text)
            counts = np.array([sum(w in STUB_EMOTION_CUES[e] for w in words) for e in self.labels], float)
            counts += self.smoothing
            out[i] = counts / counts.sum()
        return out


class SentenceTransformerBackend:
    """Sentence embeddings from ``sentence-transformers`` (default ``all-mpnet-base-v2``)."""

    def __init__(self, model_name: str = "sentence-transformers/all-mpnet-base-v2",
                 batch_size: int = 64, device: str = "cpu"):
        self.model_name = model_name
        self.batch_size = batch_size
        self.device = device
        self._model = None

    def spec(self) -> dict:
        return {"kind": "sentence-transformers", "model_name": self.model_name}

    @property
    def model(self):
        if self._model is None:
            from sentence_transformers import SentenceTransformer

            self._model = SentenceTransformer(self.model_name, device=self.device)
        return self._model

    @property
    def dim(self) -> int:
        return self.model.get_sentence_embedding_dimension()

    @property
    def max_sequence_units(self) -> int:
        return self.model.max_seq_length

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        return np.asarray(self.model.encode(list(texts), batch_size=self.batch_size,
                                            show_progress_bar=False), dtype=float)

    def token_vectors(self, text: str, max_tokens: Optional[int] = None) -> np.ndarray:
        raise NotImplementedError("use HFTokenBackend for token-level vectors")

    def __getstate__(self):
        return dict(self.__dict__, _model=None)


class HFTokenBackend:
    """Final-layer token vectors from a Hugging Face encoder (default ``bert-base-uncased``)."""

    def __init__(self, model_name: str = "bert-base-uncased", max_sequence_units: int = 512):
        self.model_name = model_name
        self.max_sequence_units = max_sequence_units
        self._model = None
        self._tokenizer = None

    def spec(self) -> dict:
        return {"kind": "hf-token", "model_name": self.model_name}

    def _load(self):
        if self._model is None:
            from transformers import AutoModel, AutoTokenizer

            self._tokenizer = AutoTokenizer.from_pretrained(self.model_name)
            self._model = AutoModel.from_pretrained(self.model_name).eval()

    @property
    def dim(self) -> int:
        self._load()
        return self._model.config.hidden_size

    def token_vectors(self, text: str, max_tokens: Optional[int] = None) -> np.ndarray:
        import torch

        self._load()
        limit = min(max_tokens or self.max_sequence_units, self.max_sequence_units)
        enc = self._tokenizer(text, truncation=True, max_length=limit, return_tensors="pt")
        with torch.no_grad():
            hidden = self._model(**enc).last_hidden_state[0]
        return hidden.numpy().astype(float)

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        return np.stack([self.token_vectors(t).mean(axis=0) for t in texts])

    def __getstate__(self):
        return dict(self.__dict__, _model=None, _tokenizer=None)


class HFEmotionClassifier:
    """Seven-way emotion classifier (default ``j-hartmann/emotion-english-distilroberta-base``)."""

    labels = EMOTIONS

    def __init__(self, model_name: str = "j-hartmann/emotion-english-distilroberta-base"):
        self.model_name = model_name
        self._model = None
        self._tokenizer = None

    def spec(self) -> dict:
        return {"kind": "hf-emotion", "model_name": self.model_name}

    def _load(self):
        if self._model is None:
            from transformers import AutoModelForSequenceClassification, AutoTokenizer

            self._tokenizer = AutoTokenizer.from_pretrained(self.model_name)
            self._model = AutoModelForSequenceClassification.from_pretrained(self.model_name).eval()

    def tokenize(self, text: str) -> List[str]:
        self._load()
        return self._tokenizer.tokenize(text)

    def detokenize(self, tokens: Sequence[str]) -> str:
        self._load()
        return self._tokenizer.convert_tokens_to_string(list(tokens))

    def classify(self, texts: Sequence[str]) -> np.ndarray:
        import torch

        self._load()
        enc = self._tokenizer(list(texts), truncation=True, max_length=512, padding=True,
                              return_tensors="pt")
        with torch.no_grad():
            probs = torch.softmax(self._model(**enc).logits, dim=-1).numpy().astype(float)
        id2label = self._model.config.id2label
        order = [next(i for i, l in id2label.items() if l.lower() == e) for e in self.labels]
        return probs[:, order]

    def __getstate__(self):
        return dict(self.__dict__, _model=None, _tokenizer=None)


def make_embedding_backend(spec: Optional[dict] = None) -> EmbeddingBackend:
    spec = dict(spec or {"kind": "stub"})
    kind = spec.pop("kind", "stub")
    if kind == "stub":
        return StubEmbeddingBackend(**spec)
    if kind == "sentence-transformers":
        return SentenceTransformerBackend(**spec)
    if kind == "hf-token":
        return HFTokenBackend(**spec)
    raise ValueError(f"unknown embedding backend {kind!r}")


def make_emotion_classifier(spec: Optional[dict] = None) -> EmotionClassifier:
    spec = dict(spec or {"kind": "stub"})
    kind = spec.pop("kind", "stub")
    if kind == "stub":
        return StubEmotionClassifier(**spec)
    if kind == "hf-emotion":
        return HFEmotionClassifier(**spec)
    raise ValueError(f"unknown emotion classifier {kind!r}")
