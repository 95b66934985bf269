import json
import logging
import math

import httpx
import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from creditcast.core import MovementLabel
from creditcast.errors import ClientError, ContextOverflow, ShapeError
from creditcast.generative import predict_gen
from creditcast.generative.clients import (CachedClient, MockClient, OpenAIChatClient, keyword_client,
                                           make_client, rank_oracle_client, table_client)
from creditcast.generative.decode import constrained_decode, rank_probe, rating_pairs
from creditcast.generative.lora import LoRAAdapter, lora_delta, lora_init, lora_merge
from creditcast.generative.prompts import Ablation, Estimate, PromptTemplate, build_prompt, serialize_numeric

from conftest import make_sample

NUM = {"niq": 0.5, "ltq": 0.1, "piq": 0.2, "atq": 0.3, "ggroup": 2010.0, "gind": 201010.0,
       "gsector": 20.0, "gsubind": 20101010.0, "gdp": 0.4}


def test_serialize_numeric_format():
    s = make_sample(ratings=["BBB"], numeric=[NUM])
    text = serialize_numeric(s)
    lines = text.splitlines()
    assert lines[0] == "ratings: BBB"
    assert "niq: 0.5000" in lines
    assert "ggroup: 2010" in lines
    assert text == serialize_numeric(s)


def test_serialize_numeric_recency_order():
    s = make_sample(p=2, ratings=["BBB", "BB+"], numeric=[dict(NUM, niq=0.2), dict(NUM, niq=0.9)])
    lines = serialize_numeric(s).splitlines()
    assert lines[0] == "ratings: BBB, BB+"
    assert "niq: 0.2000, 0.9000" in lines


@pytest.fixture
def template():
    return PromptTemplate.default(macro_definitions={"gdp": "GDP growth"})


def test_prompt_ablations(template):
    s = make_sample(texts=["Margins improved."], numeric=[NUM])
    text_only = build_prompt(template, s, "text_only")
    assert "Margins improved." in text_only
    assert "### Company fundamentals:" not in text_only
    assert "niq:" not in text_only and "ratings:" not in text_only

    full = build_prompt(template, s, "all")
    assert "'AAA', 'AA+', 'AA', 'AA-'" in full
    assert "### Company fundamentals:" in full and "niq: Net Income (Loss)" in full
    assert "gdp: GDP growth" in full
    assert "Margins improved." in full

    num = build_prompt(template, s, "numeric_only")
    assert "Margins improved." not in num and "niq: 0.5000" in num

    for p in (text_only, full, num):
        for word in ('"down"', '"same"', '"up"'):
            assert word in p
    assert len({text_only, full, num}) == 3


def test_prompt_estimate_clause(template):
    s = make_sample(numeric=[NUM])
    p = build_prompt(template, s, "text_only+estimate", estimate=Estimate("up", 0.62, "boost"))
    clause = [line for line in p.splitlines() if line.startswith("Another model")][0]
    assert '"up"' in clause and "0.62" in clause
    assert p != build_prompt(template, s, "text_only")
    with pytest.raises(ValueError):
        build_prompt(template, s, "text_only+estimate")
    with pytest.raises(ValueError):
        Ablation.parse("everything")


def test_context_overflow_names_size(template):
    s = make_sample(texts=["word " * 500], numeric=[NUM])
    p = build_prompt(template, s, "text_only")
    n = len(p.split())
    with pytest.raises(ContextOverflow) as exc:
        build_prompt(template, s, "text_only", context_tokens=n - 7)
    assert exc.value.overflow == 7
    assert build_prompt(template, s, "text_only", context_tokens=n) == p


def test_constrained_decode_example():
    pred = constrained_decode(table_client({"up": -1.0, "down": -2.0, "same": -3.0}), "prompt")
    assert pred.label is MovementLabel.UP
    # independent oracle: exponentiate and normalize
    e = {k: math.e ** v for k, v in {"up": -1.0, "down": -2.0, "same": -3.0}.items()}
    assert pred.probs[2] == pytest.approx(e["up"] / sum(e.values()), abs=1e-12)
    assert round(pred.probs[2], 4) == 0.6652


def test_constrained_decode_tie():
    pred = constrained_decode(table_client({"up": -4.0, "down": -4.0, "same": -4.0}), "p")
    assert pred.probs == pytest.approx((1 / 3,) * 3)
    assert pred.label is MovementLabel.DOWN


@given(st.lists(st.floats(-50, 0), min_size=3, max_size=3))
def test_decode_matches_brute_force_argmax(v):
    # gaps below double resolution collapse to ties after exponentiation
    assume(all(a == b or abs(a - b) > 1e-9 for a in v for b in v))
    scores = dict(zip(("down", "same", "up"), v))
    pred = constrained_decode(table_client(scores), "p")
    assert abs(sum(pred.probs) - 1) <= 1e-9
    best = max(v)
    assert pred.label.index == min(i for i, x in enumerate(v) if x == best)


def test_decode_client_failures():
    with pytest.raises(ClientError):
        constrained_decode(MockClient(lambda p, c: float("nan")), "p")

    def boom(p, c):
        raise RuntimeError("down")
    with pytest.raises(ClientError):
        constrained_decode(MockClient(boom), "p")


def test_rank_probe_oracle_and_one_mistake():
    assert len(rating_pairs()) == 210 and len(rating_pairs(ordered=True)) == 420
    rep = rank_probe(rank_oracle_client())
    assert rep.n_pairs == 210 and rep.accuracy == 1.0
    rep = rank_probe(rank_oracle_client(wrong_pairs=[("C", "CC")]))
    assert rep.n_correct == 209
    assert round(rep.accuracy, 4) == 0.9952
    assert [sorted(m[:2]) for m in rep.mistakes] == [["C", "CC"]]
    with pytest.raises(ValueError):
        rank_probe(rank_oracle_client(), pairs=[])


def test_rank_probe_counts_client_errors():
    def flaky(prompt, cand):
        if "AAA vs. SD Answer:" in prompt.splitlines()[-1] or "SD vs. AAA Answer:" in prompt.splitlines()[-1]:
            raise ClientError("timeout")
        return rank_oracle_client().scorer(prompt, cand)
    rep = rank_probe(MockClient(flaky))
    assert len(rep.errors) == 1 and rep.n_correct == 209 and rep.accuracy == 1.0


def test_lora_examples():
    fresh = lora_init(4, 3, 2, seed=0)
    W = np.arange(12.0).reshape(4, 3)
    assert np.array_equal(lora_merge(W, fresh), W)
    ad = LoRAAdapter(A=[[1, 2]], B=[[3], [0]])
    # independent product written out by hand
    assert lora_delta(ad).tolist() == [[3 * 1, 3 * 2], [0 * 1, 0 * 2]]
    with pytest.raises(ShapeError):
        lora_merge(np.zeros((3, 3)), ad)
    with pytest.raises(ShapeError):
        LoRAAdapter(A=np.zeros((2, 3)), B=np.zeros((4, 1)))
    with pytest.raises(ShapeError):
        lora_init(2, 2, 3)


def test_lora_rank_bound_and_linearity(rng):
    for _ in range(20):
        d, k = rng.integers(2, 9, size=2)
        r = int(rng.integers(1, min(d, k) + 1))
        ad = LoRAAdapter(A=rng.standard_normal((r, k)), B=rng.standard_normal((d, r)))
        sv = np.linalg.svd(lora_delta(ad), compute_uv=False)
        assert int((sv > 1e-9 * max(sv[0], 1)).sum()) <= r
        W = rng.standard_normal((d, k))
        B2 = rng.standard_normal((d, r))
        lhs = lora_merge(W, LoRAAdapter(ad.A, ad.B + B2)) - W
        rhs = (lora_merge(W, ad) - W) + (lora_merge(W, LoRAAdapter(ad.A, B2)) - W)
        assert np.allclose(lhs, rhs)


def openai_response(top):
    return {"choices": [{"logprobs": {"content": [{"top_logprobs": [
        {"token": t, "logprob": lp} for t, lp in top]}]}}]}


def test_openai_client_scores_and_hides_key(monkeypatch, caplog):
    secret = "sk-test-SECRET-123"
    monkeypatch.setenv("CC_TEST_KEY", secret)
    seen = []

    def handler(request):
        seen.append(request)
        body = json.loads(request.content)
        assert body["temperature"] == 0 and body["max_tokens"] == 1
        return httpx.Response(200, json=openai_response([(" up", -0.2), ("down", -1.9), ("sa", -3.0)]))

    client = OpenAIChatClient("m", api_key_env="CC_TEST_KEY",
                              http_client=httpx.Client(transport=httpx.MockTransport(handler)))
    with caplog.at_level(logging.DEBUG):
        scores = client.score_continuations("prompt", ["down", "same", "up", "zzz"])
    assert scores == [-1.9, -3.0, -0.2, -100.0]
    assert seen[0].headers["authorization"] == f"Bearer {secret}"
    assert secret not in caplog.text
    assert secret not in repr(client.__dict__)


def test_openai_client_retries_then_fails(monkeypatch):
    monkeypatch.setenv("CC_TEST_KEY", "k")
    calls = []

    def handler(request):
        calls.append(1)
        return httpx.Response(429) if len(calls) < 3 else httpx.Response(200, json=openai_response([("up", -1)]))

    sleeps = []
    client = OpenAIChatClient("m", api_key_env="CC_TEST_KEY", max_retries=4, sleep=sleeps.append,
                              http_client=httpx.Client(transport=httpx.MockTransport(handler)))
    assert client.score_continuations("p", ["up"]) == [-1.0]
    assert sleeps == [1.0, 2.0]

    bad = OpenAIChatClient("m", api_key_env="CC_TEST_KEY", max_retries=1, sleep=lambda s: None,
                           http_client=httpx.Client(transport=httpx.MockTransport(lambda r: httpx.Response(400))))
    with pytest.raises(ClientError):
        bad.score_continuations("p", ["up"])
    monkeypatch.delenv("CC_TEST_KEY")
    with pytest.raises(ClientError):
        client.score_continuations("p", ["up"])


def test_cached_client(tmp_path):
    inner = table_client({"down": -1.0, "same": -2.0, "up": -3.0})
    c = CachedClient(inner, tmp_path)
    a = c.score_continuations("p", ["down", "same", "up"])
    b = c.score_continuations("p", ["down", "same", "up"])
    assert a == b and inner.calls == 1 and c.hits == 1
    assert CachedClient(inner, tmp_path).score_continuations("p", ["down", "same", "up"]) == a
    assert inner.calls == 1


def test_keyword_client_and_predict_gen(template):
    client = keyword_client()
    up = make_sample(texts=["Profit growth was strong and improved."], numeric=[NUM])
    down = make_sample(company="C2", texts=["Losses and impairment, weak decline."], numeric=[NUM])
    same = make_sample(company="C3", texts=["The period was ordinary."], numeric=[NUM])
    preds = predict_gen(client, template, [up, down, same], "text_only")
    assert [p.label.value for p in preds] == ["up", "down", "same"]
    par = predict_gen(client, template, [up, down, same] * 5, "text_only", max_workers=4)
    assert [p.label.value for p in par] == ["up", "down", "same"] * 5
    flat = predict_gen(client, template, [up, down], "numeric_only")
    # no text means no evidence either way
    assert all(p.label is MovementLabel.SAME and p.probs[0] == p.probs[2] for p in flat)
    with pytest.raises(ValueError):
        predict_gen(client, template, [up], "text_only+estimate", estimates=[])


def test_make_client_specs(tmp_path):
    assert make_client("mock").model_id == "mock-keyword"
    assert isinstance(make_client("mock:rank", cache_dir=tmp_path), CachedClient)
    with pytest.raises(ValueError):
        make_client("api:")
    with pytest.raises(ValueError):
        make_client("bogus")
