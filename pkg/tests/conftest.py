import os

# Cap BLAS threads before numpy first loads: the acceptance runtime budgets
# are stated for one CPU core, and single-threaded GEMM keeps timings honest.
for _var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, "1")

import time
from types import SimpleNamespace

import pytest

from typobench import scrnn, taskheads
from typobench.corpus import TaskKind, type_pair_rows
from typobench.datagen import make_corpus, make_nli
from typobench.nncore import OptimConfig


@pytest.fixture(scope="session")
def desk_scrnn():
    """Recognizer trained at the desk-scale profile on a 20k-sentence
    synthetic corpus.  Shared by the defense-quality, restoration, and
    persistence acceptance tests; `train_seconds` feeds the runtime budget."""
    corpus = make_corpus(20000, seed=11)
    t0 = time.perf_counter()
    model, metrics = scrnn.train(corpus, scrnn.desk_profile(seed=0))
    seconds = time.perf_counter() - t0
    return SimpleNamespace(model=model, metrics=metrics, train_seconds=seconds)


@pytest.fixture(scope="session")
def held_corpus():
    """Held-out corpus, disjoint seed from the training corpus."""
    return make_corpus(2000, seed=12)


@pytest.fixture(scope="session")
def nli_train_ds():
    return type_pair_rows(make_nli(2400, seed=101), TaskKind.PAIRWISE_CLASSIFICATION)


@pytest.fixture(scope="session")
def nli_eval_ds():
    return type_pair_rows(make_nli(600, seed=102), TaskKind.PAIRWISE_CLASSIFICATION)


@pytest.fixture(scope="session")
def nli_head(nli_train_ds):
    """Task head for the end-to-end restoration criterion."""
    t0 = time.perf_counter()
    head, reports = taskheads.train_head(
        nli_train_ds,
        cfg=OptimConfig(learning_rate=0.5, epochs=40),
        seed=303,
        dim=64,
    )
    seconds = time.perf_counter() - t0
    return SimpleNamespace(head=head, reports=reports, train_seconds=seconds)


@pytest.fixture(scope="session")
def tiny_scrnn():
    """Small recognizer that memorizes a tiny corpus; enough signal for
    correction-behavior tests without the desk-scale training cost."""
    corpus = make_corpus(400, seed=33)
    cfg = scrnn.desk_profile(seed=5, hidden_size=64, vocab_size=400, epochs=3)
    model, metrics = scrnn.train(corpus, cfg)
    return SimpleNamespace(model=model, metrics=metrics, corpus=corpus)
