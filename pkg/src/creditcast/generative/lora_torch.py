"""Thin PyTorch driver for low-rank adaptation of a local causal language model."""

from __future__ import annotations

import logging
from typing import Iterable, List, Sequence, Tuple

import torch
from torch import nn

from .lora import LoRAAdapter, lora_init

logger = logging.getLogger(__name__)


class LoRALinear(nn.Module):
    """Frozen ``nn.Linear`` plus a trainable update ``B @ A`` (B zero-initialized)."""

    def __init__(self, base: nn.Linear, r: int = 8, seed: int = 0, init_std: float = 0.01):
        super().__init__()
        self.base = base
        for p in self.base.parameters():
            p.requires_grad_(False)
        d, k = base.weight.shape  # (out_features, in_features)
        init = lora_init(d, k, r, seed, init_std)
        dtype = base.weight.dtype
        self.lora_A = nn.Parameter(torch.tensor(init.A, dtype=dtype))
        self.lora_B = nn.Parameter(torch.tensor(init.B, dtype=dtype))

    def forward(self, x):
        return self.base(x) + (x @ self.lora_A.T) @ self.lora_B.T

    def adapter(self) -> LoRAAdapter:
        return LoRAAdapter(self.lora_A.detach().double().numpy(), self.lora_B.detach().double().numpy())

    def merged(self) -> nn.Linear:
        out = nn.Linear(self.base.in_features, self.base.out_features, bias=self.base.bias is not None)
        with torch.no_grad():
            out.weight.copy_(self.base.weight + self.lora_B @ self.lora_A)
            if self.base.bias is not None:
                out.bias.copy_(self.base.bias)
        return out


def inject_lora(model: nn.Module, target_names: Sequence[str], r: int = 8, seed: int = 0) -> List[str]:
    """Swap in ``LoRALinear`` for every linear layer whose qualified name ends with a target.

    All other parameters are frozen. Returns the replaced module names.
    """
    replaced = []
    for name, module in list(model.named_modules()):
        for child_name, child in list(module.named_children()):
            full = f"{name}.{child_name}" if name else child_name
            if isinstance(child, nn.Linear) and any(full.endswith(t) for t in target_names):
                setattr(module, child_name, LoRALinear(child, r=r, seed=seed + len(replaced)))
                replaced.append(full)
    for n, p in model.named_parameters():
        if "lora_" not in n:
            p.requires_grad_(False)
    return replaced


def merge_lora(model: nn.Module) -> nn.Module:
    """Replace every ``LoRALinear`` by its merged ``nn.Linear`` in place."""
    for module in list(model.modules()):
        for child_name, child in list(module.named_children()):
            if isinstance(child, LoRALinear):
                setattr(module, child_name, child.merged())
    return model


def finetune_lora(model, tokenizer, examples: Iterable[Tuple[str, str]], epochs: int = 1,
                  lr: float = 1e-3, seed: int = 0) -> List[float]:
    """Maximize the log-likelihood of each ``(prompt, label_word)`` continuation.

    Returns the mean loss of every epoch.
    """
    torch.manual_seed(seed)
    params = [p for p in model.parameters() if p.requires_grad]
    if not params:
        raise ValueError("model has no trainable parameters; call inject_lora first")
    opt = torch.optim.AdamW(params, lr=lr)
    examples = list(examples)
    history = []
    model.train()
    for _ in range(epochs):
        total = 0.0
        for prompt, label in examples:
            p_ids = list(tokenizer.encode(prompt, add_special_tokens=False))
            l_ids = list(tokenizer.encode(" " + label, add_special_tokens=False))
            logits = model(torch.tensor([p_ids + l_ids])).logits[0]
            logp = torch.log_softmax(logits, dim=-1)
            loss = -sum(logp[len(p_ids) + j - 1, t] for j, t in enumerate(l_ids))
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += loss.item()
        history.append(total / max(len(examples), 1))
        logger.info("finetune_lora epoch loss %.4f", history[-1])
    model.eval()
    return history
