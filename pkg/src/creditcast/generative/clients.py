"""Language-model clients exposing continuation scoring.

Every client implements ``score_continuations(prompt, candidates)``: one finite
log-probability per candidate, the summed token log-probabilities of the
candidate appended to the prompt.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import re
import threading
import time
from pathlib import Path
from typing import Callable, Dict, List, Optional, Protocol, Sequence

from ..core import compare_ratings
from ..encoders.lexicons import LM_SEED
from ..encoders.text import word_tokens
from ..errors import ClientError

logger = logging.getLogger(__name__)


class LLMClient(Protocol):
    model_id: str
    context_tokens: Optional[int]

    def score_continuations(self, prompt: str, candidates: Sequence[str]) -> List[float]: ...

    def count_tokens(self, text: str) -> int: ...


class MockClient:
    """Deterministic client driven by a ``scorer(prompt, candidate) -> log-prob`` callable."""

    def __init__(self, scorer: Callable[[str, str], float], model_id: str = "mock",
                 context_tokens: Optional[int] = None):
        self.scorer = scorer
        self.model_id = model_id
        self.context_tokens = context_tokens
        self.calls = 0

    def score_continuations(self, prompt, candidates):
        self.calls += 1
        return [float(self.scorer(prompt, c)) for c in candidates]

    def complete(self, prompt: str, candidates: Sequence[str]) -> str:
        scores = self.score_continuations(prompt, candidates)
        return candidates[max(range(len(scores)), key=lambda i: scores[i])]

    def count_tokens(self, text):
        return len(text.split())


def table_client(scores: Dict[str, float], model_id: str = "mock-table") -> MockClient:
    """Client returning fixed scores per candidate, whatever the prompt."""
    return MockClient(lambda _prompt, cand: scores[cand], model_id)


_PAIR_RE = re.compile(r"(\S+) vs\. (\S+) Answer:\s*$")


def rank_oracle_client(wrong_pairs: Sequence[tuple] = (), margin: float = 5.0,
                       model_id: str = "mock-rank-oracle") -> MockClient:
    """Scores the truly higher rating ``margin`` nats above the other, except on ``wrong_pairs``."""
    wrong = {frozenset(p) for p in wrong_pairs}

    def scorer(prompt, cand):
        m = _PAIR_RE.search(prompt.rstrip())
        if not m:
            raise ClientError("prompt does not end with a rating pair")
        x, y = m.group(1), m.group(2)
        truth = compare_ratings(x, y)
        if frozenset((x, y)) in wrong:
            truth = y if truth == x else x
        return 0.0 if cand == truth else -margin

    return MockClient(scorer, model_id)


def keyword_client(model_id: str = "mock-keyword", strength: float = 1.0) -> MockClient:
    """Scores movement labels from Loughran-McDonald seed-word counts in the prompt's text block.

    Only the newest filing after the MD&A header is read, so numeric-only
    prompts always lean to "same".
    """
    pos, neg = LM_SEED["positive"], LM_SEED["negative"]

    def scorer(prompt, cand):
        _, _, text = prompt.partition("MD&A text, most recent filing first:")
        words = word_tokens(text.split("[t-2]")[0])
        balance = sum(w in pos for w in words) - sum(w in neg for w in words)
        logits = {"up": balance, "down": -balance, "same": 0.5 - abs(balance)}
        return strength * logits[cand] - 1.0

    return MockClient(scorer, model_id)


class CachedClient:
    """Wraps a client with an append-only JSONL cache keyed by (model id, prompt, candidates)."""

    def __init__(self, client, cache_dir):
        self.client = client
        self.model_id = client.model_id
        self.context_tokens = getattr(client, "context_tokens", None)
        self.path = Path(cache_dir) / f"{re.sub(r'[^A-Za-z0-9_.-]', '_', self.model_id)}.jsonl"
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._mem: Dict[str, List[float]] = {}
        if self.path.exists():
            with self.path.open(encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        d = json.loads(line)
                        self._mem[d["key"]] = d["scores"]
        self.hits = 0

    def key(self, prompt: str, candidates: Sequence[str]) -> str:
        h = hashlib.sha256()
        h.update(self.model_id.encode())
        h.update(b"\0" + prompt.encode())
        for c in candidates:
            h.update(b"\0" + c.encode())
        return h.hexdigest()

    def score_continuations(self, prompt, candidates):
        k = self.key(prompt, candidates)
        cached = self._mem.get(k)
        if cached is not None:
            self.hits += 1
            return list(cached)
        scores = self.client.score_continuations(prompt, candidates)
        with self._lock:
            self._mem[k] = list(scores)
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps({"key": k, "scores": list(scores)}) + "\n")
        return scores

    def count_tokens(self, text):
        return self.client.count_tokens(text)


class OpenAIChatClient:
    """Chat-completions client scoring candidates from first-token log-probabilities.

    One request per prompt with ``max_tokens=1`` and ``top_logprobs``. A
    candidate's score is the log-probability of the returned top token equal to
    it (after stripping whitespace), else of the longest top token that is a
    prefix of it, else ``floor``. The API key is read from ``api_key_env`` and
    never logged.
    """

    def __init__(self, model: str, base_url: str = "https://api.openai.com/v1",
                 api_key_env: str = "OPENAI_API_KEY", max_retries: int = 5, backoff: float = 1.0,
                 max_concurrency: int = 4, top_logprobs: int = 20, floor: float = -100.0,
                 context_tokens: Optional[int] = 128000, http_client=None, sleep=time.sleep):
        self.model = model
        self.model_id = f"api:{model}"
        self.base_url = base_url.rstrip("/")
        self.api_key_env = api_key_env
        self.max_retries = max_retries
        self.backoff = backoff
        self.top_logprobs = top_logprobs
        self.floor = floor
        self.context_tokens = context_tokens
        self._sem = threading.Semaphore(max_concurrency)
        self._http = http_client
        self._sleep = sleep

    @property
    def http(self):
        if self._http is None:
            import httpx

            self._http = httpx.Client(timeout=60.0)
        return self._http

    def _post(self, payload: dict) -> dict:
        key = os.environ.get(self.api_key_env)
        if not key:
            raise ClientError(f"environment variable {self.api_key_env} is not set")
        headers = {"Authorization": f"Bearer {key}"}
        last = None
        for attempt in range(self.max_retries + 1):
            try:
                with self._sem:
                    resp = self.http.post(f"{self.base_url}/chat/completions", json=payload, headers=headers)
                if resp.status_code == 200:
                    return resp.json()
                last = f"HTTP {resp.status_code}"
                if resp.status_code not in (408, 409, 429) and resp.status_code < 500:
                    break
            except Exception as exc:  # transport errors are retried
                last = type(exc).__name__
            if attempt < self.max_retries:
                self._sleep(self.backoff * 2 ** attempt)
        raise ClientError(f"{self.model_id}: request failed after retries ({last})")

    def score_continuations(self, prompt, candidates):
        payload = {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": 0,
            "max_tokens": 1,
            "logprobs": True,
            "top_logprobs": self.top_logprobs,
        }
        data = self._post(payload)
        try:
            top = data["choices"][0]["logprobs"]["content"][0]["top_logprobs"]
        except (KeyError, IndexError, TypeError) as exc:
            raise ClientError(f"{self.model_id}: response lacks logprobs") from exc
        table = {}
        for entry in top:
            tok = entry["token"].strip()
            if tok and tok not in table:
                table[tok] = float(entry["logprob"])
        scores = []
        for cand in candidates:
            if cand in table:
                scores.append(table[cand])
                continue
            prefixes = [t for t in table if cand.startswith(t)]
            scores.append(table[max(prefixes, key=len)] if prefixes else self.floor)
        return scores

    def count_tokens(self, text):
        # rough BPE estimate; exact counts need the provider's tokenizer
        return math.ceil(len(text) / 4)


class HFLocalClient:
    """Exact continuation scoring with a local causal language model."""

    def __init__(self, model, tokenizer, model_id: str = "local", context_tokens: Optional[int] = None):
        self.model = model
        self.tokenizer = tokenizer
        self.model_id = model_id
        self.context_tokens = context_tokens

    @classmethod
    def from_pretrained(cls, name: str, **kw) -> "HFLocalClient":
        from transformers import AutoModelForCausalLM, AutoTokenizer

        tok = AutoTokenizer.from_pretrained(name)
        model = AutoModelForCausalLM.from_pretrained(name).eval()
        ctx = getattr(model.config, "max_position_embeddings", None)
        return cls(model, tok, model_id=f"local:{name}", context_tokens=ctx, **kw)

    def _ids(self, text: str) -> List[int]:
        return list(self.tokenizer.encode(text, add_special_tokens=False))

    def score_continuations(self, prompt, candidates):
        import torch

        prompt_ids = self._ids(prompt)
        scores = []
        for cand in candidates:
            cand_ids = self._ids(" " + cand) if prompt and not prompt[-1].isspace() else self._ids(cand)
            ids = torch.tensor([prompt_ids + cand_ids])
            with torch.no_grad():
                logits = self.model(ids).logits[0]
            logp = torch.log_softmax(logits.double(), dim=-1)
            start = len(prompt_ids)
            total = sum(float(logp[start + j - 1, t]) for j, t in enumerate(cand_ids))
            scores.append(total)
        return scores

    def count_tokens(self, text):
        return len(self._ids(text))


def make_client(spec: str, cache_dir=None):
    """``mock`` | ``mock:rank`` | ``api:MODEL`` | ``local:MODEL``, optionally cached."""
    kind, _, name = spec.partition(":")
    if kind == "mock":
        client = rank_oracle_client() if name == "rank" else keyword_client()
    elif kind == "api":
        if not name:
            raise ValueError("api client needs a model name, e.g. api:gpt-4o-2024-05-13")
        client = OpenAIChatClient(name)
    elif kind == "local":
        client = HFLocalClient.from_pretrained(name)
    else:
        raise ValueError(f"unknown client spec {spec!r}")
    return CachedClient(client, cache_dir) if cache_dir else client
