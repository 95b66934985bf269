"""Prompt-based forecasting with generative language models."""

from .clients import (CachedClient, HFLocalClient, MockClient, OpenAIChatClient, keyword_client,
                      make_client, rank_oracle_client, table_client)
from .decode import (RankProbeReport, constrained_decode, predict_gen, rank_probe, rank_prompt,
                     rating_pairs, softmax)
from .lora import LoRAAdapter, lora_delta, lora_init, lora_merge
from .prompts import (Ablation, Estimate, PromptTemplate, build_prompt, fit_text_budget,
                      serialize_numeric)

__all__ = ["Ablation", "CachedClient", "Estimate", "HFLocalClient", "LoRAAdapter", "MockClient", "OpenAIChatClient",
           "PromptTemplate", "RankProbeReport", "build_prompt", "constrained_decode", "fit_text_budget",
           "keyword_client", "lora_delta", "lora_init", "lora_merge", "make_client", "predict_gen",
           "rank_oracle_client", "rank_probe", "rank_prompt", "rating_pairs", "serialize_numeric",
           "softmax", "table_client"]
