"""Common encoder interface."""

from __future__ import annotations

from typing import Dict, List, Sequence

import numpy as np

from ..errors import NotFitted


class TextEncoder:
    """Maps a document to a fixed-length real vector.

    Subclasses implement ``_fit`` (optional) and ``_encode``. ``fit`` takes a
    split tag and refuses anything but training documents.
    """

    name = "base"
    output_dim: int = 0
    fitted = False

    def fit(self, docs: Sequence[str], split: str) -> "TextEncoder":
        if split != "train":
            raise ValueError(f"encoders may only be fitted on the train split, got split={split!r}")
        self._fit(list(docs))
        self.fitted = True
        return self

    def _fit(self, docs: List[str]) -> None:
        pass

    def encode(self, doc: str) -> np.ndarray:
        if not self.fitted:
            raise NotFitted(f"{self.name} encoder used before fit()")
        out = np.asarray(self._encode(doc), dtype=float)
        if out.shape != (self.output_dim,):
            raise AssertionError(f"{self.name} produced shape {out.shape}, expected ({self.output_dim},)")
        return out

    def _encode(self, doc: str) -> np.ndarray:
        raise NotImplementedError

    def encode_many(self, docs: Sequence[str]) -> np.ndarray:
        """Encode a batch; repeated documents are encoded once."""
        seen: Dict[str, np.ndarray] = {}
        rows = []
        for d in docs:
            if d not in seen:
                seen[d] = self.encode(d)
            rows.append(seen[d])
        return np.stack(rows) if rows else np.zeros((0, self.output_dim))

    @property
    def feature_names(self) -> List[str]:
        return [f"{self.name}_{j}" for j in range(self.output_dim)]
