import numpy as np
import pytest

from creditcast.core import QuarterId, Sample, movement_label
from creditcast.dataset import build_bundle
from creditcast.ingestion import ingest
from creditcast.synth import generate_synthetic_corpus


def make_sample(company="C1", quarter="2012Q4", p=1, ratings=None, label=None, texts=None, numeric=None):
    ratings = ratings or ["BBB"] * p
    texts = texts or [f"Filing {i} text." for i in range(p)]
    numeric = numeric or [{"niq": 0.5, "ltq": 0.1, "piq": 0.2, "atq": 0.3, "ggroup": 2010.0, "gind": 201010.0,
                           "gsector": 20.0, "gsubind": 20101010.0, "gdp": 0.4}] * p
    if label is None:
        label = movement_label(ratings[0], ratings[0])
    return Sample(company, QuarterId.parse(quarter), p, tuple(texts), tuple(ratings), tuple(numeric), label)


@pytest.fixture(scope="session")
def corpus_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("corpus")
    generate_synthetic_corpus(out, seed=3, n_companies=40, n_quarters=40, strength=1.0)
    return out


@pytest.fixture(scope="session")
def aligned(corpus_dir):
    d = corpus_dir
    sources, report = ingest(d / "ratings.csv", d / "filings.csv", d / "fundamentals.csv", d / "macro.csv")
    return sources


@pytest.fixture(scope="session")
def bundle1(aligned):
    return build_bundle(aligned, 1, seed=0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def write_csv(path, header, rows):
    path.write_text("\n".join([",".join(header)] + [",".join(map(str, r)) for r in rows]) + "\n")
    return path

