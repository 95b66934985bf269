import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from creditcast.encoders import (ENCODER_NAMES, ClusterModel, EmbedEncoder, EmotionEncoder, LexiconEncoder,
                                 StubEmbeddingBackend, StubEmotionClassifier, chunk_classify_encode, cluster_encode,
                                 cluster_fit, lda_encode, lda_fit, lexicon_encode, load_encoder, make_encoder,
                                 save_encoder, sentence_split, truncated_embed_encode, word_tokens)
from creditcast.errors import ClusterCountError, NotFitted


def test_sentence_split_examples():
    assert sentence_split("A. B. ") == ["A.", "B."]
    assert sentence_split("No terminator") == ["No terminator"]
    assert sentence_split("") == []
    assert sentence_split("Sales at Acme Inc. rose. Costs fell!") == ["Sales at Acme Inc. rose.", "Costs fell!"]


@given(st.text(alphabet=st.sampled_from(list("ab .!?\n")), max_size=60))
def test_sentence_split_covers_doc(doc):
    parts = sentence_split(doc)
    assert all(p and p == p.strip() for p in parts)
    assert "".join("".join(parts).split()) == "".join(doc.split())


def test_word_tokens():
    assert word_tokens("Good, GOOD-bad 3x") == ["good", "good", "bad", "x"]


LEX = {"pos": {"good"}, "neg": {"bad"}}


def test_lexicon_examples():
    assert lexicon_encode("good good bad", LEX, (2, 2)).tolist() == [1.0, 0.5]
    assert lexicon_encode("", LEX, (2, 2)).tolist() == [0.0, 0.0]
    assert lexicon_encode("good good good good", LEX, (2, 2)).tolist() == [2.0, 0.0]
    assert lexicon_encode("good bad", LEX, (0, 1)).tolist() == [0.0, 1.0]


def test_lexicon_encoder_fits_per_category_max():
    enc = LexiconEncoder(LEX, name="t").fit(["good good bad", "bad bad bad bad", "neutral"], split="train")
    assert enc.train_max.tolist() == [2.0, 4.0]
    assert enc.encode("good bad").tolist() == [0.5, 0.25]
    assert enc.feature_names == ["t_pos", "t_neg"]
    with pytest.raises(ValueError):
        enc.fit(["x"], split="test")


def test_lm_and_nrc_dims():
    assert make_encoder("lm").output_dim == 4
    assert make_encoder("nrc").output_dim == 10


@pytest.fixture(scope="module")
def train_docs(bundle1):
    return sorted({s.text_window[0] for s in bundle1.train})


@pytest.fixture(scope="module")
def lda25(train_docs):
    return lda_fit(train_docs, n_topics=25, seed=0, max_iter=10)


def test_lda_simplex(lda25, train_docs):
    for doc in train_docs[:20] + ["unrelated words entirely"]:
        v = lda_encode(lda25, doc)
        assert v.shape == (25,)
        assert (v >= 0).all() and abs(v.sum() - 1) <= 1e-6
    assert np.array_equal(lda_encode(lda25, ""), np.full(25, 1 / 25))
    assert np.array_equal(lda_encode(lda25, train_docs[0]), lda_encode(lda25, train_docs[0]))


def test_lda_requires_fit():
    enc = make_encoder("lda")
    with pytest.raises(NotFitted):
        enc.encode("text")
    with pytest.raises(ValueError):
        make_encoder("lda", params={"T": 1})


def test_lda_seed_determinism(train_docs, lda25):
    again = lda_fit(train_docs, n_topics=25, seed=0, max_iter=10)
    assert np.array_equal(again.encode(train_docs[3]), lda25.encode(train_docs[3]))


class PointBackend:
    """Sentence "cK ..." embeds at basis vector K plus a tiny deterministic jitter."""

    def __init__(self, K, dim=8):
        self.dim = dim
        self.K = K

    def embed(self, texts):
        out = np.zeros((len(texts), self.dim))
        for i, t in enumerate(texts):
            k = int(t.split()[0][1:])
            out[i, k] = 10.0
            out[i, -1] = 1e-3 * (len(t) % 7) / 7
        return out


def separated_docs(K, per=12):
    return [" ".join(f"c{k} item{j}." for j in range(per)) for k in range(K)]


def test_cluster_separable_recovers_K():
    K = 5
    model = cluster_fit(separated_docs(K), PointBackend(K), K=K, reducer="none", min_cluster_size=5)
    assert model.K == K
    # each centroid sits on one of the planted points
    hits = sorted(int(np.argmax(c[:K])) for c in model.centroids)
    assert hits == list(range(K))
    assert np.allclose(np.sort(model.centroids[:, :K].max(axis=1)), 10.0)
    again = cluster_fit(separated_docs(K), PointBackend(K), K=K, reducer="none", min_cluster_size=5)
    assert np.array_equal(again.centroids, model.centroids)


def test_cluster_count_error_reports_achieved():
    with pytest.raises(ClusterCountError) as exc:
        cluster_fit(separated_docs(3), PointBackend(3), K=4, reducer="none", min_cluster_size=5)
    assert exc.value.achieved == 3 and exc.value.requested == 4


def test_soft_assign_limit_and_mean():
    cents = np.eye(10)
    model = ClusterModel(centroids=cents, reducer=None, temperature=1e-6)
    p = model.soft_assign(cents[7])[0]
    assert np.allclose(p, np.eye(10)[7])

    warm = ClusterModel(centroids=cents, reducer=None, temperature=1.0)

    class Fixed:
        def embed(self, texts):
            return np.array([cents[2] if "two" in t else cents[5] * 0.5 for t in texts])

    p1 = warm.soft_assign(cents[2])[0]
    p2 = warm.soft_assign(cents[5] * 0.5)[0]
    got = cluster_encode(warm, "Sentence two. Sentence five.", Fixed())
    assert np.allclose(got, (p1 + p2) / 2, atol=1e-12)
    assert np.array_equal(cluster_encode(warm, "", Fixed()), np.full(10, 0.1))


def test_cluster_simplex_and_permutation_on_random_corpus(rng):
    backend = StubEmbeddingBackend(dim=16)
    K = 6
    cents = rng.standard_normal((K, 4))
    from sklearn.decomposition import PCA
    red = PCA(n_components=4).fit(rng.standard_normal((50, 16)))
    model = ClusterModel(centroids=cents, reducer=red, temperature=0.7)
    vocab = [f"w{i}" for i in range(40)]
    for _ in range(30):
        sents = [" ".join(rng.choice(vocab, size=5)) + "." for _ in range(rng.integers(1, 6))]
        v = cluster_encode(model, " ".join(sents), backend)
        assert v.shape == (K,) and (v >= 0).all()
        assert abs(sum(float(x) for x in v) - 1.0) <= 1e-6
        perm = list(rng.permutation(len(sents)))
        w = cluster_encode(model, " ".join(sents[i] for i in perm), backend)
        assert np.array_equal(v, w)


def test_cluster_encoder_on_corpus(train_docs):
    enc = make_encoder("clusters", seed=0, params={"K": 20})
    enc.fit(train_docs, split="train")
    v = enc.encode(train_docs[0])
    assert v.shape == (20,) and abs(v.sum() - 1) <= 1e-6


class ChunkClassifier:
    labels = ("anger", "disgust", "fear", "joy", "neutral", "sadness", "surprise")
    Q = {"a": np.array([.4, .1, .1, .1, .1, .1, .1]), "b": np.array([.1, .1, .1, .1, .1, .1, .4])}

    def tokenize(self, text):
        return text.split()

    def detokenize(self, toks):
        return " ".join(toks)

    def classify(self, texts):
        return np.stack([self.Q[t.split()[0]] for t in texts])


def test_emotion_chunks():
    clf = ChunkClassifier()
    one = " ".join(["a"] * 100)
    assert np.array_equal(chunk_classify_encode(one, clf), clf.Q["a"])
    two = " ".join(["a"] * 512 + ["b"] * 512)
    assert np.allclose(chunk_classify_encode(two, clf), (clf.Q["a"] + clf.Q["b"]) / 2)
    three = " ".join(["a"] * 512 + ["b"] * 10)
    v = chunk_classify_encode(three, clf)
    assert abs(v.sum() - 1) <= 1e-6


def test_emotion_encoder_stub_simplex():
    enc = EmotionEncoder(StubEmotionClassifier())
    v = enc.encode("Strong growth but risk of default.")
    assert v.shape == (7,) and abs(v.sum() - 1) <= 1e-6
    assert enc.feature_names[3] == "emotion_joy"


class OnesBackend:
    dim = 4

    def token_vectors(self, text, max_tokens):
        n = min(len(text.split()), max_tokens)
        return np.ones((n, self.dim))


def test_embed_examples():
    assert np.array_equal(truncated_embed_encode("one two three", OnesBackend()), np.ones(4))
    b = StubEmbeddingBackend(dim=8)
    assert np.allclose(truncated_embed_encode("revenue", b), b.token_vectors("revenue", 1)[0])
    head = " ".join(f"w{i % 37}" for i in range(512))
    a = truncated_embed_encode(head + " " + " ".join(["x"] * 88), b)
    c = truncated_embed_encode(head + " " + " ".join(["y"] * 88), b)
    assert np.array_equal(a, c)
    assert np.array_equal(truncated_embed_encode("", b), np.zeros(8))


@pytest.mark.parametrize("name", ENCODER_NAMES)
def test_every_encoder_shape_and_persistence(name, train_docs, tmp_path):
    params = {"K": 10} if name == "clusters" else {"T": 5, "max_iter": 5} if name == "lda" else None
    enc = make_encoder(name, seed=0, params=params).fit(train_docs, split="train")
    X = enc.encode_many(train_docs[:8])
    assert X.shape == (8, enc.output_dim) and np.isfinite(X).all()
    assert len(enc.feature_names) == enc.output_dim
    save_encoder(enc, tmp_path / "e.pkl")
    back = load_encoder(tmp_path / "e.pkl")
    assert np.array_equal(back.encode_many(train_docs[:8]), X)


def test_unknown_encoder():
    with pytest.raises(ValueError):
        make_encoder("bow")


@settings(max_examples=25, deadline=None)
@given(st.lists(st.sampled_from(["growth", "risk", "loss", "quarter", "fraud", "x"]), max_size=40))
def test_embed_encoder_finite(words):
    v = EmbedEncoder().encode(" ".join(words))
    assert v.shape == (64,) and np.isfinite(v).all()
