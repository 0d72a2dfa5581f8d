"""Deterministic synthetic dataset generators.

The recovery and robustness thresholds in the test suite need corpora whose
word distribution and task signal are controlled, license-free, and byte
reproducible, so we synthesize them from a frozen frequency-ranked lexicon
(`data/words.txt`) instead of shipping third-party text.

Text corpora are Zipf-ish word salad: sentence content carries no syntax,
which keeps word recovery a property of the encoding and the recognizer
rather than of memorized n-grams.  Pair datasets plant one long "marker"
word per sentence and derive the label from the two markers jointly, so a
bag-of-embeddings head is learnable but must read both sentences, and
character attacks (which favor long words by construction) measurably
damage it.

Run `python -m typobench.datagen --help` to write the files from a shell.
"""

from __future__ import annotations

import argparse
import sys
from importlib import resources

import numpy as np

from .corpus import PairExample, TextCorpus, dump_pair_rows, dump_text_corpus
from .rng import SplitMix64

# Topic -> family of long marker words (all length >= 8, all common enough
# in the lexicon head to survive any vocabulary cut >= 2000).  Each NLI
# sentence carries exactly one marker; the pair's label is the RELATION
# between the two topics, so neither sentence alone reveals it and a typo
# landing on either marker removes the class signal.
NLI_TOPICS = {
    "government": (
        "government", "president", "parliament", "congress", "minister", "election",
    ),
    "science": (
        "chemistry", "laboratory", "molecules", "reactions", "scientist", "chemicals",
    ),
    "music": (
        "orchestra", "symphony", "musicians", "composers", "melodies", "concerts",
    ),
}
_TOPIC_ORDER = tuple(NLI_TOPICS)
# label = cyclic distance from sentence_a's topic to sentence_b's topic
NLI_LABELS = ("entailment", "neutral", "contradiction")

# Class-neutral short nouns; shared across labels so they carry no signal.
FILLER_WORDS = (
    "time", "work", "life", "world", "house", "water", "place", "group",
    "night", "point", "home", "hand", "room", "fact", "month", "study",
    "book", "word", "side", "kind", "game", "line", "city", "name",
    "team", "area", "road", "food", "door", "idea", "body",
)


def lexicon() -> tuple[str, ...]:
    """The frozen frequency-ranked word list (most common first)."""
    text = (resources.files("typobench") / "data" / "words.txt").read_text("utf-8")
    words = []
    for line in text.splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            words.append(line)
    if len(set(words)) != len(words):
        raise ValueError("lexicon contains duplicates")
    if not words:
        raise ValueError("lexicon is empty")
    return tuple(words)


class ZipfSampler:
    """Rank-weighted sampling: P(rank r) proportional to 1/(r + shift)."""

    def __init__(self, words, shift: float = 2.7):
        self.words = tuple(words)
        weights = 1.0 / (np.arange(len(self.words)) + 1.0 + shift)
        cum = np.cumsum(weights / weights.sum())
        cum[-1] = 1.0
        self._cum = cum

    def draw_many(self, rng: SplitMix64, n: int) -> list[str]:
        idx = np.searchsorted(self._cum, rng.doubles(n), side="right")
        idx = np.minimum(idx, len(self.words) - 1)
        return [self.words[i] for i in idx]


def make_corpus(
    n_sentences: int,
    seed: int,
    min_len: int = 5,
    max_len: int = 12,
) -> TextCorpus:
    """Zipf word-salad corpus: capitalized first word, trailing period token."""
    if n_sentences < 1:
        raise ValueError("n_sentences must be positive")
    if not 1 <= min_len <= max_len:
        raise ValueError("need 1 <= min_len <= max_len")
    sampler = ZipfSampler(lexicon())
    rng = SplitMix64(seed)
    sentences = []
    for _ in range(n_sentences):
        length = min_len + rng.randbelow(max_len - min_len + 1)
        words = sampler.draw_many(rng, length)
        words[0] = words[0].capitalize()
        words.append(".")
        sentences.append(words)
    return TextCorpus(sentences, source=f"datagen:corpus:{seed}")


def _marker_sentence(marker: str, rng: SplitMix64) -> list[str]:
    """4-5 shared fillers with one class marker spliced in."""
    n_fill = 4 + rng.randbelow(2)
    words = [FILLER_WORDS[rng.randbelow(len(FILLER_WORDS))] for _ in range(n_fill)]
    words.insert(rng.randbelow(n_fill + 1), marker)
    return words


def make_nli(n_pairs: int, seed: int) -> list[PairExample]:
    """Pairwise classification where the label names the topic relation:
    same topic = entailment, next topic (cyclic) = neutral, the remaining
    one = contradiction.  Fillers are label-independent, so the class
    signal is the conjunction of the two marker words: a model must read
    both sentences, and losing either marker to a typo destroys it."""
    if n_pairs < 1:
        raise ValueError("n_pairs must be positive")
    rng = SplitMix64(seed)
    out = []
    for _ in range(n_pairs):
        topic_a = rng.randbelow(len(_TOPIC_ORDER))
        distance = rng.randbelow(len(NLI_LABELS))
        topic_b = (topic_a + distance) % len(_TOPIC_ORDER)
        m_a = _pick(NLI_TOPICS[_TOPIC_ORDER[topic_a]], rng)
        m_b = _pick(NLI_TOPICS[_TOPIC_ORDER[topic_b]], rng)
        out.append(
            PairExample(
                sentence_a=_marker_sentence(m_a, rng),
                sentence_b=_marker_sentence(m_b, rng),
                label_text=NLI_LABELS[distance],
            )
        )
    return out


def make_similarity(n_pairs: int, seed: int, width: int = 5) -> list[PairExample]:
    """Regression pairs scored 0..5 by how many of `width` content words the
    two sentences share."""
    if n_pairs < 1:
        raise ValueError("n_pairs must be positive")
    words = lexicon()
    pool = words[200:1400]
    rng = SplitMix64(seed)
    out = []
    for _ in range(n_pairs):
        a = _distinct_draw(pool, width, rng)
        shared = rng.randbelow(width + 1)
        keep = sorted(_distinct_draw(range(width), shared, rng))
        b = [a[i] for i in keep]
        while len(b) < width:
            w = pool[rng.randbelow(len(pool))]
            if w not in a and w not in b:
                b.append(w)
        rng.shuffle(b)
        out.append(
            PairExample(
                sentence_a=list(a),
                sentence_b=b,
                label_text=f"{float(shared):.1f}",
            )
        )
    return out


def make_ranking(n_items: int, seed: int, n_candidates: int = 4) -> list[PairExample]:
    """Ranking items: the positive candidate is the one whose marker shares
    the question marker's family."""
    if n_items < 1:
        raise ValueError("n_items must be positive")
    if n_candidates < 2:
        raise ValueError("need at least 2 candidates")
    rng = SplitMix64(seed)
    out = []
    for _ in range(n_items):
        fam = _TOPIC_ORDER[rng.randbelow(len(_TOPIC_ORDER))]
        others = [f for f in _TOPIC_ORDER if f != fam]
        question = _marker_sentence(_pick(NLI_TOPICS[fam], rng), rng)
        positive = rng.randbelow(n_candidates)
        cands = []
        for j in range(n_candidates):
            f = fam if j == positive else others[rng.randbelow(len(others))]
            cands.append(_marker_sentence(_pick(NLI_TOPICS[f], rng), rng))
        out.append(
            PairExample(
                sentence_a=question,
                sentence_b=[],
                label_text=str(positive),
                candidates=cands,
            )
        )
    return out


def _pick(seq, rng: SplitMix64):
    return seq[rng.randbelow(len(seq))]


def _distinct_draw(pool, k: int, rng: SplitMix64) -> list:
    pool = list(pool)
    if k > len(pool):
        raise ValueError("cannot draw more distinct items than the pool holds")
    out = []
    chosen = set()
    while len(out) < k:
        item = pool[rng.randbelow(len(pool))]
        if item not in chosen:
            chosen.add(item)
            out.append(item)
    return out


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="python -m typobench.datagen",
        description="Write deterministic synthetic datasets.",
    )
    sub = parser.add_subparsers(dest="what", required=True)

    p = sub.add_parser("corpus", help="plain-text corpus, one sentence per line")
    p.add_argument("--sentences", type=int, default=20000)
    p.add_argument("--min-len", type=int, default=5)
    p.add_argument("--max-len", type=int, default=12)

    p = sub.add_parser("nli", help="3-way pairwise classification TSV")
    p.add_argument("--pairs", type=int, default=2500)

    p = sub.add_parser("sim", help="0..5 similarity regression TSV")
    p.add_argument("--pairs", type=int, default=500)

    p = sub.add_parser("rank", help="candidate-ranking TSV")
    p.add_argument("--items", type=int, default=500)
    p.add_argument("--candidates", type=int, default=4)

    for sp in sub.choices.values():
        sp.add_argument("--seed", type=int, required=True)
        sp.add_argument("--out", required=True)

    args = parser.parse_args(argv)
    if args.what == "corpus":
        body = dump_text_corpus(
            make_corpus(args.sentences, args.seed, args.min_len, args.max_len)
        )
        head = f"# synthetic corpus sentences={args.sentences} seed={args.seed}\n"
    elif args.what == "nli":
        body = dump_pair_rows(make_nli(args.pairs, args.seed))
        head = f"# synthetic nli pairs={args.pairs} seed={args.seed}\n"
    elif args.what == "sim":
        body = dump_pair_rows(make_similarity(args.pairs, args.seed))
        head = f"# synthetic similarity pairs={args.pairs} seed={args.seed}\n"
    else:
        body = dump_pair_rows(make_ranking(args.items, args.seed, args.candidates))
        head = f"# synthetic ranking items={args.items} seed={args.seed}\n"
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(head)
        fh.write(body)
    print(f"wrote {args.out}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
