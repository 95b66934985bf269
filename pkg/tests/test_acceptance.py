"""Acceptance criteria 1 to 10.

Each test prints a single ``PASS``/``FAIL`` line (visible even under pytest's
output capture) and then asserts. Run just this file with::

    pytest tests/test_acceptance.py -v

Criterion 10 runs the full synthetic pipeline twice and takes several minutes.
"""

import itertools
import json
import math
import time

import numpy as np
import pytest

from creditcast.config import ExperimentConfig
from creditcast.core import LABEL_ORDER, RATING_LEVELS, QuarterId, compare_ratings, movement_label
from creditcast.dataset import balance_classes, build_bundle, build_windows, temporal_split
from creditcast.encoders import (EmotionEncoder, StubEmbeddingBackend, StubEmotionClassifier, cluster_encode,
                                 cluster_fit, lda_encode, lda_fit, make_encoder, sentence_split)
from creditcast.evaluation import EvalRecord, pdp_compute, union_correct
from creditcast.features import FeatureTable, build_features
from creditcast.generative.clients import MockClient, rank_oracle_client
from creditcast.generative.decode import constrained_decode, rank_probe
from creditcast.generative.lora import LoRAAdapter, lora_delta, lora_init, lora_merge
from creditcast.ingestion import ingest
from creditcast.model_boost import BoostParams, importance_report, predict_boost, train_boost
from creditcast.pipeline import run_pipeline
from creditcast.synth import generate_synthetic_corpus

SOURCES = ("ratings", "filings", "fundamentals", "macro")


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {n:2d}: {detail}")
        return ok
    return emit


@pytest.fixture(scope="module")
def full_corpus(tmp_path_factory):
    # the bundled generator at its defaults: 80 companies, 40 quarters, strength 1
    out = tmp_path_factory.mktemp("full_corpus")
    generate_synthetic_corpus(out, seed=0)
    return out


@pytest.fixture(scope="module")
def full_sources(full_corpus):
    sources, _ = ingest(*(full_corpus / f"{k}.csv" for k in SOURCES))
    return sources


# 1 -----------------------------------------------------------------------------------------

def test_c01_rating_scale_oracle(report):
    t0 = time.perf_counter()
    order = {code: i for i, code in enumerate(RATING_LEVELS)}
    bad = 0
    for a, b in itertools.product(RATING_LEVELS, repeat=2):
        want_cmp = a if order[a] <= order[b] else b
        want_lab = "up" if order[b] < order[a] else "down" if order[b] > order[a] else "same"
        bad += compare_ratings(a, b) != want_cmp
        bad += movement_label(a, b).value != want_lab
    truth = rank_probe(rank_oracle_client())
    one_off = rank_probe(rank_oracle_client(wrong_pairs=[("C", "CC")]))
    dt = time.perf_counter() - t0
    ok = (len(RATING_LEVELS) == 21 and bad == 0 and truth.n_pairs == 210 and truth.accuracy == 1.0
          and one_off.n_correct == 209 and round(one_off.accuracy, 5) == 0.99524 and dt < 1.0)
    report(1, ok, f"441 pairs, {bad} mismatches; probe {truth.accuracy:.5f} and "
                  f"{one_off.n_correct}/{one_off.n_pairs} = {one_off.accuracy:.5f}; {dt:.3f}s")
    assert ok


# 2 -----------------------------------------------------------------------------------------

def test_c02_constrained_decode_oracle(report):
    rng = np.random.default_rng(2)
    t0 = time.perf_counter()
    label_bad, worst = 0, 0.0
    for _ in range(1000):
        s = rng.uniform(-30, 0, 3)
        table = dict(zip(("down", "same", "up"), s))
        pred = constrained_decode(MockClient(lambda prompt, c: table[c]), "prompt")
        want = max(range(3), key=lambda i: (s[i], -i))
        e = np.exp(s - s.max())
        ref = e / e.sum()
        label_bad += pred.label is not LABEL_ORDER[want]
        worst = max(worst, float(np.max(np.abs(np.asarray(pred.probs) - ref))))
    dt = time.perf_counter() - t0
    ok = label_bad == 0 and worst <= 1e-9 and dt < 5.0
    report(2, ok, f"1000 triples, {label_bad} label mismatches, max |dp| {worst:.2e}; {dt:.2f}s")
    assert ok


# 3 -----------------------------------------------------------------------------------------

def random_documents(sources, n, rng):
    pool = sorted({s for f in sources.filings.values() for s in sentence_split(f.mda_text)})
    vocab = sorted({w for s in pool[:2000] for w in s.rstrip(".").split()})
    docs = []
    for _ in range(n):
        sents = [pool[i] for i in rng.choice(len(pool), size=rng.integers(1, 12))]
        sents += [" ".join(rng.choice(vocab, size=rng.integers(3, 15))) + "." for _ in range(rng.integers(0, 3))]
        docs.append(sents)
    return docs


def test_c03_simplex_invariants(full_sources, report):
    rng = np.random.default_rng(3)
    bundle = build_bundle(full_sources, 1, seed=0)
    train_docs = sorted({s.text_window[0] for s in bundle.train})
    backend = StubEmbeddingBackend()
    lda = lda_fit(train_docs, n_topics=25, seed=0)
    clusters = cluster_fit(train_docs, backend, K=100, seed=0)
    emotion = EmotionEncoder(StubEmotionClassifier())
    worst, negative, perm_bad = 0.0, 0, 0
    dims = set()
    for sents in random_documents(full_sources, 500, rng):
        doc = " ".join(sents)
        c = cluster_encode(clusters, doc, backend)
        for v in (lda_encode(lda, doc), c, emotion.encode(doc)):
            dims.add(v.shape[0])
            negative += int((v < 0).any())
            worst = max(worst, abs(math.fsum(v) - 1.0))
        shuffled = " ".join(sents[i] for i in rng.permutation(len(sents)))
        perm_bad += not np.array_equal(c, cluster_encode(clusters, shuffled, backend))
    ok = dims == {25, 100, 7} and negative == 0 and worst <= 1e-6 and perm_bad == 0
    report(3, ok, f"500 docs, dims {sorted(dims)}, {negative} negative, max |sum-1| {worst:.1e}, "
                  f"{perm_bad} permutation mismatches")
    assert ok


# 4 -----------------------------------------------------------------------------------------

def test_c04_dataset_invariants(full_sources, report):
    t0 = time.perf_counter()
    problems = []
    spec = ExperimentConfig().split_spec
    for p in (1, 2, 3):
        samples, _ = build_windows(full_sources, p)
        parts = temporal_split(samples, spec)
        keys = [{s.key for s in part} for part in parts]
        if any(a & b for a, b in itertools.combinations(keys, 2)):
            problems.append(f"p={p} splits overlap")
        for name, part in zip(("train", "val", "test"), parts):
            bal = balance_classes(part, seed=p)
            counts = {l: sum(s.label is l for s in bal) for l in LABEL_ORDER}
            if len(set(counts.values())) != 1:
                problems.append(f"p={p} {name} unbalanced {counts}")
            if [s.key for s in balance_classes(part, seed=p)] != [s.key for s in bal]:
                problems.append(f"p={p} {name} balancing not reproducible")
        if p < 3:
            longer, _ = build_windows(full_sources, p + 1)
            if not {s.key for s in longer} <= {s.key for s in samples}:
                problems.append(f"targets(p={p + 1}) not within targets(p={p})")
    dt = time.perf_counter() - t0
    ok = not problems and dt < 10.0
    report(4, ok, f"p in 1..3, {len(problems)} violations {problems[:2]}; {dt:.2f}s")
    assert ok


# 5 -----------------------------------------------------------------------------------------

def lexicon_tables(sources):
    bundle = build_bundle(sources, 1, seed=0)
    enc = make_encoder("lm").fit(list(dict.fromkeys(s.text_window[0] for s in bundle.train)), "train")
    return {s: build_features(bundle.split(s), "text_only", enc) for s in ("train", "val", "test")}


def test_c05_planted_signal_recovery(full_sources, report):
    t0 = time.perf_counter()
    tables = lexicon_tables(full_sources)
    n_bal = sum(len(t) for t in tables.values())
    test = tables["test"]
    params = BoostParams(n_trees=100, max_depth=3)
    model = train_boost(tables["train"], tables["val"], params)
    acc = float(np.mean([p.label == l for p, l in zip(predict_boost(model, test), test.labels)]))
    shuffled = []
    for seed in range(10):
        rng = np.random.default_rng(seed)
        tr, va = (FeatureTable(t.keys, [t.labels[i] for i in rng.permutation(len(t))], t.names, t.groups, t.X)
                  for t in (tables["train"], tables["val"]))
        m = train_boost(tr, va, BoostParams(n_trees=100, max_depth=3, seed=seed))
        shuffled.append(float(np.mean([p.label == l for p, l in zip(predict_boost(m, test), test.labels)])))
    mean_shuf = float(np.mean(shuffled))
    dt = time.perf_counter() - t0
    ok = n_bal >= 300 and acc > 0.80 and abs(mean_shuf - 1 / 3) <= 0.10 and dt < 120
    report(5, ok, f"{n_bal} balanced samples, lexicon test acc {acc:.3f}, shuffled-label mean "
                  f"{mean_shuf:.3f} (range {min(shuffled):.3f}..{max(shuffled):.3f}); {dt:.1f}s")
    assert ok


# 6 -----------------------------------------------------------------------------------------

def test_c06_union_metric(report):
    rng = np.random.default_rng(6)
    keys = [(f"C{i}", QuarterId(2015, 1)) for i in range(40)]
    violations = 0
    for _ in range(1000):
        n = int(rng.integers(1, 41))
        a, b = (EvalRecord({}, keys[:n], rng.integers(0, 2, n).tolist()) for _ in range(2))
        violations += union_correct([a, b]) < max(a.accuracy, b.accuracy)
    hand = union_correct([EvalRecord({}, keys[:3], [1, 0, 1]), EvalRecord({}, keys[:3], [0, 0, 1])])
    ok = violations == 0 and hand == 2 / 3
    report(6, ok, f"1000 random pairs, {violations} below max accuracy; ([1,0,1],[0,0,1]) -> {hand!r}")
    assert ok


# 7 -----------------------------------------------------------------------------------------

class StubModel:
    def __init__(self, fi, names, groups):
        self.feature_importances_ = np.asarray(fi, float)
        self.names, self.groups = names, groups


def test_c07_importance_partition(report):
    stub = StubModel([0.5, 0.25, 0.25], ["f1", "f2", "f3"], {"f1": "macro", "f2": "fundamental", "f3": "text"})
    rep = importance_report([stub])
    stub_ok = (rep.per_group["macro"] == 0.5 and rep.per_group["fundamental"] == 0.25
               and rep.per_group["text"] == 0.25 and rep.per_group["credit_rating"] == 0.0)

    rng = np.random.default_rng(7)
    y = np.repeat([0, 1, 2], 40)
    X = np.column_stack([y + rng.normal(0, 0.6, 120), rng.standard_normal(120), rng.standard_normal(120),
                         np.full(120, 4.2)])
    names = ["niq", "gdp", "lm_negative", "const"]
    groups = {"niq": "fundamental", "gdp": "macro", "lm_negative": "text", "const": "macro"}
    table = FeatureTable([(f"C{i}", QuarterId(2012, 1)) for i in range(120)], [LABEL_ORDER[v] for v in y],
                         names, groups, X)
    model = train_boost(table, params=BoostParams(n_trees=50, max_depth=3))
    real = importance_report([model])
    fi = model.feature_importances_
    hand = {"fundamental": fi[0], "macro": fi[1] + fi[3], "text": fi[2]}
    sums = abs(math.fsum(real.per_feature.values()) - 1), abs(math.fsum(real.per_group.values()) - 1)
    group_ok = all(abs(real.per_group[g] - v) <= 1e-12 for g, v in hand.items())
    ok = stub_ok and max(sums) <= 1e-6 and group_ok and fi[3] == 0.0
    report(7, ok, f"stub groups {'ok' if stub_ok else 'wrong'}, |sum-1| {max(sums):.1e}, "
                  f"hand grouping {'ok' if group_ok else 'wrong'}, constant feature {fi[3]}")
    assert ok


# 8 -----------------------------------------------------------------------------------------

class ConstantModel:
    def predict_proba(self, t):
        return np.tile([0.25, 0.35, 0.4], (len(t), 1))


def test_c08_pdp_oracle(report):
    rng = np.random.default_rng(8)
    names = [f"x{j}" for j in range(4)]
    y = rng.integers(0, 3, 50)
    X = rng.standard_normal((50, 4)) + y[:, None] * [0.8, 0, 0.3, 0]
    table = FeatureTable([(f"C{i}", QuarterId(2013, 2)) for i in range(50)], [LABEL_ORDER[v] for v in y],
                         names, {n: "text" for n in names}, X)
    model = train_boost(table, params=BoostParams(n_trees=30, max_depth=3))
    grid = np.linspace(-2, 2, 9)
    worst = 0.0
    for feat, cls in (("x0", "down"), ("x2", "up")):
        curve = pdp_compute(model, table, feat, grid, cls)
        j, c = names.index(feat), ("down", "same", "up").index(cls)
        for g, v in zip(grid, curve.values):
            total = 0.0
            for i in range(50):
                row = X[i].copy()
                row[j] = g
                raw = model.estimator.predict_proba(row[None, :])[0]
                total += raw[list(model.estimator.classes_).index(c)]
            worst = max(worst, abs(v - total / 50))
    flat = pdp_compute(ConstantModel(), table, "x1", grid, "up").values
    ok = worst <= 1e-12 and len(set(flat)) == 1
    report(8, ok, f"max |pdp - brute force| {worst:.1e}; constant-model curve values {sorted(set(flat))}")
    assert ok


# 9 -----------------------------------------------------------------------------------------

def test_c09_lora_math(report):
    rng = np.random.default_rng(9)
    W = rng.standard_normal((6, 5))
    fresh_ok = np.array_equal(lora_merge(W, lora_init(6, 5, 2, seed=1)), W)
    A, B = [[1.0, 2.0, -1.0]], [[3.0], [0.0], [-2.0]]
    ad = LoRAAdapter(A=A, B=B)
    ref = [[B[i][0] * A[0][j] for j in range(3)] for i in range(3)]
    worked_ok = lora_delta(ad).tolist() == ref == [[3.0, 6.0, -3.0], [0.0, 0.0, 0.0], [-2.0, -4.0, 2.0]]
    rank_bad = 0
    for _ in range(100):
        d, k = rng.integers(4, 20, 2)
        r = int(rng.integers(1, min(d, k) + 1))
        delta = lora_delta(LoRAAdapter(A=rng.standard_normal((r, k)), B=rng.standard_normal((d, r))))
        sv = np.linalg.svd(delta, compute_uv=False)
        rank_bad += bool((sv[r:] >= 1e-10 * max(1.0, sv[0])).any())
    ok = fresh_ok and worked_ok and rank_bad == 0
    report(9, ok, f"fresh merge exact: {fresh_ok}; r=1 example: {worked_ok}; "
                  f"{rank_bad}/100 adapters exceed rank r")
    assert ok


# 10 ----------------------------------------------------------------------------------------

def test_c10_pipeline_determinism(full_corpus, tmp_path, report):
    common = dict(**{k: str(full_corpus / f"{k}.csv") for k in SOURCES}, p=[1, 2], data_types=["all"],
                  model="boost")
    t0 = time.perf_counter()
    a = run_pipeline(ExperimentConfig(**common, out_dir=str(tmp_path / "a")))
    dt = time.perf_counter() - t0
    b = run_pipeline(ExperimentConfig(**common, out_dir=str(tmp_path / "b"), cache=False))
    ja = (tmp_path / "a" / "report" / "results.json").read_bytes()
    jb = (tmp_path / "b" / "report" / "results.json").read_bytes()
    encoders = {g["encoder"] for g in json.loads(ja)["grid"]}
    rerun = run_pipeline(ExperimentConfig(**common, out_dir=str(tmp_path / "a")))
    same = ja == jb == (tmp_path / "a" / "report" / "results.json").read_bytes()
    ok = same and dt < 600 and len(encoders) == 6 and rerun["all_cache_hits"] and not b["all_cache_hits"]
    report(10, ok, f"byte-identical results.json across runs: {same}; {len(encoders)} encoders; "
                   f"first run {dt:.0f}s; rerun all cache hits: {rerun['all_cache_hits']}")
    assert ok and a["results"] == json.loads(ja)
