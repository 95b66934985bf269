"""Low-rank adapters: the update ``delta W = B @ A`` and merging into frozen weights.

These numpy functions are the reference math; ``lora_torch`` applies the same
parameterization to a local PyTorch model.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from ..errors import ShapeError


@dataclass
class LoRAAdapter:
    A: np.ndarray  # (r, k)
    B: np.ndarray  # (d, r)

    def __post_init__(self):
        self.A = np.asarray(self.A, dtype=float)
        self.B = np.asarray(self.B, dtype=float)
        if self.A.ndim != 2 or self.B.ndim != 2 or self.B.shape[1] != self.A.shape[0]:
            raise ShapeError(f"B {self.B.shape} and A {self.A.shape} do not compose")

    @property
    def r(self) -> int:
        return self.A.shape[0]

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.B.shape[0], self.A.shape[1])


def lora_init(d: int, k: int, r: int, seed: int = 0, init_std: float = 0.01) -> LoRAAdapter:
    """``B`` starts at zero so the adapter is a no-op until trained; ``A`` is small Gaussian noise."""
    if r < 1 or r > min(d, k):
        raise ShapeError(f"rank r={r} must be in 1..min(d, k)={min(d, k)}")
    rng = np.random.default_rng(seed)
    return LoRAAdapter(A=rng.normal(0.0, init_std, size=(r, k)), B=np.zeros((d, r)))


def lora_delta(adapter: LoRAAdapter) -> np.ndarray:
    return adapter.B @ adapter.A


def lora_merge(W: np.ndarray, adapter: LoRAAdapter) -> np.ndarray:
    W = np.asarray(W, dtype=float)
    if W.shape != adapter.shape:
        raise ShapeError(f"W has shape {W.shape}, adapter produces {adapter.shape}")
    return W + lora_delta(adapter)
