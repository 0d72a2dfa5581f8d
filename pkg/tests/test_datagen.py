"""Synthetic dataset generator tests: every label must be recomputable
from the emitted sentences alone."""

import re

import pytest

from typobench.corpus import (
    TaskKind,
    load_pair_dataset,
    load_text_corpus,
    type_pair_rows,
)
from typobench.datagen import (
    FILLER_WORDS,
    NLI_LABELS,
    NLI_TOPICS,
    ZipfSampler,
    lexicon,
    main,
    make_corpus,
    make_nli,
    make_ranking,
    make_similarity,
)
from typobench.rng import SplitMix64

_TOPICS = tuple(NLI_TOPICS)


# ---------------------------------------------------------------- lexicon


def test_lexicon_is_clean_and_frequency_ranked():
    words = lexicon()
    assert len(words) > 3000
    assert len(set(words)) == len(words)
    assert all(re.fullmatch(r"[a-z]+", w) for w in words)
    assert words[0] == "the"  # most frequent word leads


def test_marker_and_filler_words_sit_in_the_lexicon_head():
    words = lexicon()
    rank = {w: i for i, w in enumerate(words)}
    # any vocabulary cut >= 2000 must keep every planted signal word
    for fam in NLI_TOPICS.values():
        for w in fam:
            assert rank[w] < 2000
            assert len(w) >= 8  # long enough to be attackable
    for w in FILLER_WORDS:
        assert rank[w] < 2000


def test_zipf_sampler_prefers_early_ranks():
    sampler = ZipfSampler(lexicon())
    draws = sampler.draw_many(SplitMix64(2), 20000)
    counts = {}
    for w in draws:
        counts[w] = counts.get(w, 0) + 1
    assert counts.get("the", 0) > counts.get(lexicon()[500], 0)
    assert sampler.draw_many(SplitMix64(2), 50) == draws[:50]


# ---------------------------------------------------------------- corpus


def test_make_corpus_shape_and_determinism():
    c1 = make_corpus(50, seed=3, min_len=5, max_len=12)
    c2 = make_corpus(50, seed=3, min_len=5, max_len=12)
    assert c1.sentences == c2.sentences
    assert len(c1) == 50
    for sent in c1.sentences:
        assert 5 + 1 <= len(sent) <= 12 + 1  # words plus the period token
        assert sent[0][0].isupper()
        assert sent[-1] == "."
    c3 = make_corpus(50, seed=4)
    assert c1.sentences != c3.sentences


def test_make_corpus_validation():
    with pytest.raises(ValueError):
        make_corpus(0, seed=1)
    with pytest.raises(ValueError):
        make_corpus(5, seed=1, min_len=8, max_len=4)
    with pytest.raises(ValueError):
        make_corpus(5, seed=1, min_len=0, max_len=4)


# ---------------------------------------------------------------- nli


def _topic_of(tokens):
    """The unique topic whose marker appears in `tokens`."""
    hits = [
        i
        for i, fam in enumerate(_TOPICS)
        for t in tokens
        if t in NLI_TOPICS[fam]
    ]
    assert len(hits) == 1, f"expected exactly one marker in {tokens}"
    return hits[0]


def test_make_nli_labels_encode_the_topic_relation():
    for ex in make_nli(300, seed=17):
        a = _topic_of(ex.sentence_a)
        b = _topic_of(ex.sentence_b)
        distance = (b - a) % len(_TOPICS)
        assert ex.label_text == NLI_LABELS[distance]


def test_make_nli_fillers_carry_no_signal():
    markers = {w for fam in NLI_TOPICS.values() for w in fam}
    for ex in make_nli(100, seed=18):
        for sent in (ex.sentence_a, ex.sentence_b):
            rest = [t for t in sent if t not in markers]
            assert len(rest) == len(sent) - 1
            assert all(t in FILLER_WORDS for t in rest)
            assert 5 <= len(sent) <= 6


def test_make_nli_deterministic_and_validated():
    assert make_nli(40, seed=9) == make_nli(40, seed=9)
    assert make_nli(40, seed=9) != make_nli(40, seed=10)
    with pytest.raises(ValueError):
        make_nli(0, seed=1)


def test_make_nli_covers_all_labels():
    seen = {ex.label_text for ex in make_nli(200, seed=21)}
    assert seen == set(NLI_LABELS)


# ---------------------------------------------------------------- similarity


def test_make_similarity_label_counts_shared_words():
    for ex in make_similarity(200, seed=23):
        shared = len(set(ex.sentence_a) & set(ex.sentence_b))
        assert float(ex.label_text) == float(shared)
        assert len(ex.sentence_a) == 5
        assert len(ex.sentence_b) == 5
        assert len(set(ex.sentence_a)) == 5  # draws are distinct
        assert 0.0 <= float(ex.label_text) <= 5.0


def test_make_similarity_spans_the_score_range():
    labels = {ex.label_text for ex in make_similarity(300, seed=24)}
    assert labels == {f"{k}.0" for k in range(6)}


def test_make_similarity_deterministic():
    assert make_similarity(30, seed=5) == make_similarity(30, seed=5)
    with pytest.raises(ValueError):
        make_similarity(0, seed=5)


# ---------------------------------------------------------------- ranking


def test_make_ranking_positive_candidate_shares_the_question_topic():
    for ex in make_ranking(150, seed=29):
        q_topic = _topic_of(ex.sentence_a)
        pos = int(ex.label_text)
        assert 0 <= pos < len(ex.candidates)
        assert len(ex.candidates) == 4
        for j, cand in enumerate(ex.candidates):
            if j == pos:
                assert _topic_of(cand) == q_topic
            else:
                assert _topic_of(cand) != q_topic
        assert ex.sentence_b == []


def test_make_ranking_candidate_count_and_validation():
    for ex in make_ranking(20, seed=31, n_candidates=6):
        assert len(ex.candidates) == 6
    with pytest.raises(ValueError):
        make_ranking(0, seed=1)
    with pytest.raises(ValueError):
        make_ranking(5, seed=1, n_candidates=1)


# ---------------------------------------------------------------- CLI entry


def test_main_writes_loadable_corpus(tmp_path):
    out = tmp_path / "corpus.txt"
    assert main(["corpus", "--sentences", "12", "--seed", "3", "--out", str(out)]) == 0
    text = out.read_text()
    assert text.startswith("#")
    corpus = load_text_corpus(out)
    assert corpus.sentences == make_corpus(12, seed=3).sentences


def test_main_writes_loadable_pair_files(tmp_path):
    cases = [
        (["nli", "--pairs", "10", "--seed", "4"], TaskKind.PAIRWISE_CLASSIFICATION),
        (["sim", "--pairs", "10", "--seed", "4"], TaskKind.SIMILARITY),
        (["rank", "--items", "10", "--seed", "4"], TaskKind.RANKING),
    ]
    makers = {
        "nli": lambda: make_nli(10, seed=4),
        "sim": lambda: make_similarity(10, seed=4),
        "rank": lambda: make_ranking(10, seed=4),
    }
    for argv, kind in cases:
        out = tmp_path / f"{argv[0]}.tsv"
        assert main(argv + ["--out", str(out)]) == 0
        assert out.read_text().startswith("#")
        ds = load_pair_dataset(out, kind)
        want = type_pair_rows(makers[argv[0]](), kind)
        assert len(ds.examples) == 10
        assert ds.examples == want.examples
