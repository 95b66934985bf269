"""High-density sentence-embedding cluster features.

Fit: every sentence of every training document is embedded, projected to a
lower-dimensional space (PCA re-normalized to the unit sphere by default, UMAP
optionally), and density-clustered with HDBSCAN (leaf selection, which favours
many fine clusters over a few merged ones). The K largest
clusters are kept and summarized by their centroids (noise points are left out
of the centroid estimates).

Encode: each sentence gets a softmax over negative distances to the K
centroids; the document vector is the mean of its sentences' distributions.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from sklearn.cluster import HDBSCAN
from sklearn.decomposition import PCA

from ..errors import ClusterCountError
from .backends import EmbeddingBackend, StubEmbeddingBackend
from .base import TextEncoder
from .text import sentence_split

logger = logging.getLogger(__name__)


def make_reducer(kind: str, n_components: int, seed: int):
    if kind == "pca":
        return PCA(n_components=n_components, svd_solver="full", random_state=seed)
    if kind == "umap":
        try:
            import umap
        except ImportError as exc:  # optional dependency
            raise ImportError("reducer='umap' needs the umap-learn package") from exc
        return umap.UMAP(n_components=n_components, random_state=seed, min_dist=0.0,
                         n_neighbors=15, metric="cosine")
    if kind == "none":
        return None
    raise ValueError(f"unknown reducer {kind!r}")


def _unit_rows(z: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(z, axis=1, keepdims=True)
    return z / np.where(norms > 0, norms, 1.0)


@dataclass
class ClusterModel:
    centroids: np.ndarray  # (K, d_reduced)
    reducer: object
    temperature: float = 1.0
    cluster_sizes: Optional[np.ndarray] = None
    renormalize: bool = False

    @property
    def K(self) -> int:
        return len(self.centroids)

    def reduce(self, embeddings: np.ndarray) -> np.ndarray:
        z = embeddings if self.reducer is None else self.reducer.transform(embeddings)
        return _unit_rows(z) if self.renormalize else z

    def soft_assign(self, points: np.ndarray) -> np.ndarray:
        """Row-wise softmax of ``-distance / temperature`` to each centroid."""
        points = np.atleast_2d(points)
        d = np.sqrt(((points[:, None, :] - self.centroids[None, :, :]) ** 2).sum(axis=-1))
        logits = -d / self.temperature
        logits -= logits.max(axis=1, keepdims=True)
        w = np.exp(logits)
        return w / w.sum(axis=1, keepdims=True)


def cluster_fit(train_docs: Sequence[str], backend: EmbeddingBackend, K: int = 100, seed: int = 0,
                reducer: str = "pca", n_components: Optional[int] = None, min_cluster_size: int = 10,
                min_samples: Optional[int] = None, cluster_selection_method: str = "leaf",
                temperature: float = 1.0, max_sentences: Optional[int] = 50000,
                renormalize: Optional[bool] = None) -> ClusterModel:
    """Sentences -> embeddings -> reducer -> HDBSCAN -> centroids of the K largest clusters.

    ``n_components`` defaults to 5 for UMAP and 32 for PCA; a linear projection
    needs more room to keep many clusters apart. ``renormalize`` (default: on
    for PCA) puts reduced points back on the unit sphere so distances stay
    angular, as they are for the unit-norm embeddings themselves.
    """
    if n_components is None:
        n_components = 5 if reducer == "umap" else 32
    if renormalize is None:
        renormalize = reducer == "pca"
    sentences = [s for d in train_docs for s in sentence_split(d)]
    if max_sentences is not None and len(sentences) > max_sentences:
        rng = np.random.default_rng(seed)
        keep = np.sort(rng.choice(len(sentences), size=max_sentences, replace=False))
        sentences = [sentences[i] for i in keep]
    if len(sentences) < K:
        raise ClusterCountError(0, K)
    emb = backend.embed(sentences)
    red = make_reducer(reducer, min(n_components, emb.shape[1]), seed)
    z = emb if red is None else red.fit_transform(emb)
    if renormalize:
        z = _unit_rows(z)
    labels = HDBSCAN(min_cluster_size=min_cluster_size, min_samples=min_samples,
                     cluster_selection_method=cluster_selection_method).fit_predict(z)
    ids, sizes = np.unique(labels[labels >= 0], return_counts=True)
    if len(ids) < K:
        raise ClusterCountError(len(ids), K)
    # largest first; ties broken by cluster id for determinism
    order = sorted(range(len(ids)), key=lambda i: (-sizes[i], ids[i]))[:K]
    centroids = np.stack([z[labels == ids[i]].mean(axis=0) for i in order])
    logger.info("cluster_fit: %d sentences, %d clusters found, kept %d, noise share %.3f",
                len(sentences), len(ids), K, float(np.mean(labels < 0)))
    return ClusterModel(centroids=centroids, reducer=red, temperature=temperature,
                        cluster_sizes=sizes[order], renormalize=renormalize)


def cluster_encode(model: ClusterModel, doc: str, backend: EmbeddingBackend) -> np.ndarray:
    # canonical sentence order makes the result bit-identical under sentence permutation
    sentences = sorted(sentence_split(doc))
    if not sentences:
        return np.full(model.K, 1.0 / model.K)
    probs = model.soft_assign(model.reduce(backend.embed(sentences)))
    return np.sort(probs, axis=0).sum(axis=0) / len(sentences)


class ClusterEncoder(TextEncoder):
    name = "clusters"

    def __init__(self, backend: Optional[EmbeddingBackend] = None, K: int = 100, seed: int = 0, **fit_kw):
        self.backend = backend or StubEmbeddingBackend()
        self.output_dim = K
        self.seed = seed
        self.fit_kw = fit_kw
        self.model: Optional[ClusterModel] = None

    def _fit(self, docs):
        self.model = cluster_fit(docs, self.backend, K=self.output_dim, seed=self.seed, **self.fit_kw)

    def _encode(self, doc):
        return cluster_encode(self.model, doc, self.backend)
