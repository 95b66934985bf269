"""Topic-proportion features from latent Dirichlet allocation."""

from __future__ import annotations

import numpy as np
from sklearn.decomposition import LatentDirichletAllocation
from sklearn.feature_extraction.text import CountVectorizer

from .base import TextEncoder


class LDAEncoder(TextEncoder):
    name = "lda"

    def __init__(self, n_topics: int = 25, seed: int = 0, max_features: int = 5000,
                 max_iter: int = 20):
        if n_topics < 2:
            raise ValueError("LDA needs at least two topics")
        self.output_dim = n_topics
        self.seed = seed
        self.max_features = max_features
        self.max_iter = max_iter
        self.vectorizer = None
        self.model = None

    def _fit(self, docs):
        self.vectorizer = CountVectorizer(lowercase=True, token_pattern=r"(?u)\b[a-zA-Z]{2,}\b",
                                          stop_words="english", max_features=self.max_features)
        counts = self.vectorizer.fit_transform(docs)
        self.model = LatentDirichletAllocation(n_components=self.output_dim, random_state=self.seed,
                                               learning_method="batch", max_iter=self.max_iter)
        self.model.fit(counts)

    def _encode(self, doc):
        counts = self.vectorizer.transform([doc])
        if counts.nnz == 0:
            return np.full(self.output_dim, 1.0 / self.output_dim)
        theta = self.model.transform(counts)[0]
        return theta / theta.sum()


def lda_fit(train_docs, n_topics: int = 25, seed: int = 0, **kw) -> LDAEncoder:
    return LDAEncoder(n_topics=n_topics, seed=seed, **kw).fit(train_docs, split="train")


def lda_encode(model: LDAEncoder, doc: str) -> np.ndarray:
    return model.encode(doc)
