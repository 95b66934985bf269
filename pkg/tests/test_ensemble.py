import numpy as np
import pytest

from creditcast.core import LABEL_ORDER, MovementLabel, Prediction, QuarterId
from creditcast.ensemble import (EstimateColumn, augment_features, cross_fit, estimate_table, inject_estimates,
                                 oof_boost_estimates, stack_estimates, temporal_blocks)
from creditcast.errors import AlignmentError, EmptySplit
from creditcast.features import FeatureTable
from creditcast.generative.clients import MockClient
from creditcast.generative.prompts import PromptTemplate
from creditcast.model_boost import BoostParams, predict_boost, train_boost

from conftest import make_sample

FAST = BoostParams(n_trees=20, max_depth=2, patience=10)


def keys(n):
    return [(f"C{i % 4}", QuarterId(2010, 1).shift(i // 4)) for i in range(n)]


def base_table(n=10, d=6, seed=0):
    rng = np.random.default_rng(seed)
    names = [f"x{j}" for j in range(d)]
    return FeatureTable(keys(n), [LABEL_ORDER[i % 3] for i in range(n)], names,
                        {c: "macro" for c in names}, rng.standard_normal((n, d)))


def onehot_pred(label, conf):
    idx = MovementLabel(label).index
    probs = [(1 - conf) / 2] * 3
    probs[idx] = conf
    return Prediction(label, tuple(probs))


def test_estimate_column_matrix():
    col = EstimateColumn("gen", [onehot_pred("up", 0.62)])
    assert col.matrix().tolist() == [[0.0, 0.0, 1.0, 0.62]]
    assert col.names == ["est_gen_down", "est_gen_same", "est_gen_up", "est_gen_prob"]
    m = EstimateColumn("g", [onehot_pred(l, 0.5) for l in ("down", "same", "up")]).matrix()
    assert (m[:, :3].sum(axis=1) == 1).all() and ((m[:, 3] >= 0) & (m[:, 3] <= 1)).all()


def test_augment_shape_and_untouched_columns():
    t = base_table()
    est = EstimateColumn("gen", [onehot_pred("up", 0.62)] * 10, list(t.keys))
    out = augment_features(t, est)
    assert out.X.shape == (10, 10)
    assert out.X[0, 6:].tolist() == [0.0, 0.0, 1.0, 0.62]
    assert [out.groups[n] for n in out.names[6:]] == ["estimate"] * 4
    back = out.drop_groups(["estimate"])
    assert np.array_equal(back.X, t.X) and back.names == t.names


def test_augment_mismatch():
    t = base_table()
    with pytest.raises(AlignmentError):
        augment_features(t, EstimateColumn("g", [onehot_pred("up", 0.6)] * 9))
    with pytest.raises(AlignmentError):
        augment_features(t, EstimateColumn("g", [onehot_pred("up", 0.6)] * 10, list(reversed(t.keys))))


def test_augmented_model_base_predictions_reproducible():
    t = base_table(n=60)
    est = EstimateColumn("gen", [onehot_pred(l.value, 0.7) for l in t.labels], list(t.keys))
    base = train_boost(t, params=FAST)
    aug = augment_features(t, est)
    assert np.array_equal(base.predict_proba(aug.drop_groups(["estimate"])), base.predict_proba(t))


def test_stack_identical_estimates_reproduced():
    labels = [LABEL_ORDER[i % 3] for i in range(30)]
    est = EstimateColumn("a", [onehot_pred(l.value, 0.8) for l in labels])
    est_b = EstimateColumn("b", list(est.predictions))
    meta = stack_estimates(est, est_b, labels, params=FAST)
    preds = predict_boost(meta, estimate_table(est, est_b, labels))
    assert [p.label for p in preds] == labels


def test_stack_prefers_correct_source():
    # Monte-Carlo: a is always right, b is uniform noise
    wins = []
    for seed in range(10):
        rng = np.random.default_rng(seed)

        def draw(n):
            labels = [LABEL_ORDER[i] for i in rng.integers(0, 3, n)]
            a = EstimateColumn("a", [onehot_pred(l.value, rng.uniform(0.4, 1)) for l in labels])
            b = EstimateColumn("b", [onehot_pred(LABEL_ORDER[i].value, rng.uniform(0.4, 1))
                                     for i in rng.integers(0, 3, n)])
            return labels, a, b

        tr_l, tr_a, tr_b = draw(90)
        te_l, te_a, te_b = draw(90)
        meta = stack_estimates(tr_a, tr_b, tr_l, seed=seed, params=FAST)
        preds = predict_boost(meta, estimate_table(te_a, te_b, te_l))
        meta_acc = np.mean([p.label == l for p, l in zip(preds, te_l)])
        b_acc = np.mean([p.label == l for p, l in zip(te_b.predictions, te_l)])
        wins.append(meta_acc >= b_acc)
    assert all(wins)


def test_stack_errors():
    with pytest.raises(EmptySplit):
        stack_estimates(EstimateColumn("a", []), EstimateColumn("b", []), [])
    with pytest.raises(AlignmentError):
        estimate_table(EstimateColumn("a", [onehot_pred("up", 1.0)]), EstimateColumn("b", []), ["up"])
    e = EstimateColumn("a", [onehot_pred("up", 1.0)])
    with pytest.raises(ValueError):
        estimate_table(e, e, ["up"])


def test_temporal_blocks_partition_in_time():
    ks = keys(23)
    blocks = temporal_blocks(ks, 5)
    assert len(blocks) == 5
    flat = np.concatenate(blocks)
    assert sorted(flat.tolist()) == list(range(23))
    for a, b in zip(blocks, blocks[1:]):
        assert max(ks[i][1] for i in a) <= min(ks[i][1] for i in b)


def test_cross_fit_never_sees_own_row():
    ks = keys(20)

    def fit_predict(fit_idx, pred_idx):
        assert not set(fit_idx) & set(pred_idx)
        assert len(fit_idx) + len(pred_idx) == 20
        return [onehot_pred("up", 1.0)] * len(pred_idx)

    assert len(cross_fit(ks, 4, fit_predict)) == 20
    with pytest.raises(ValueError):
        cross_fit(ks, 1, fit_predict)


def test_oof_boost_estimates():
    t = base_table(n=60, d=3)
    est = oof_boost_estimates(t, None, FAST, n_folds=3)
    assert len(est) == 60 and est.keys == t.keys
    assert all(isinstance(p, Prediction) for p in est.predictions)
    assert augment_features(t, est).X.shape == (60, 7)


def test_inject_estimates_reaches_prompt():
    prompts = []

    def scorer(prompt, cand):
        prompts.append(prompt)
        return 0.0 if cand == "up" else -1.0

    samples = [make_sample(company=f"C{i}") for i in range(3)]
    est = EstimateColumn("boost", [onehot_pred("down", 0.75)] * 3)
    preds = inject_estimates(MockClient(scorer), PromptTemplate.default(), samples, est)
    assert [p.label.value for p in preds] == ["up"] * 3
    assert all('"down" with probability 0.7500' in p for p in prompts)
    with pytest.raises(AlignmentError):
        inject_estimates(MockClient(scorer), PromptTemplate.default(), samples[:2], est)
