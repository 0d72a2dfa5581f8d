"""Tokenization, vocabulary construction, and dataset loading.

Sentences are plain lists of token strings; tokenization is whitespace-only
so punctuation stays glued to the word it touches.  Pair datasets are
3-column TSV (`label<TAB>sentence_a<TAB>sentence_b`); ranking files pack the
candidate answers into column 3 separated by `|||`.
"""

from __future__ import annotations

import enum
import math
from collections import Counter
from dataclasses import dataclass, field, replace

UNK_WORD = "<unk>"
UNK_ID = 0
CANDIDATE_SEP = "|||"


class DataFormatError(ValueError):
    """Raised for malformed corpus or dataset files."""


class TaskKind(enum.Enum):
    SINGLE_CLASSIFICATION = "single"
    PAIRWISE_CLASSIFICATION = "nli"
    SIMILARITY = "sim"
    RANKING = "rank"


def tokenize(text: str) -> list[str]:
    """Split on whitespace; no punctuation handling, empty input -> []."""
    return text.split()


@dataclass(frozen=True)
class TextCorpus:
    sentences: list[list[str]]
    source: str = ""

    def __post_init__(self):
        for i, sent in enumerate(self.sentences):
            if not sent:
                raise DataFormatError(f"{self.source or 'corpus'}: sentence {i} is empty")

    def __len__(self) -> int:
        return len(self.sentences)


@dataclass(frozen=True)
class Vocabulary:
    """Fixed word inventory; id 0 is the reserved unknown marker."""

    words: tuple[str, ...]
    ids: dict[str, int] = field(repr=False)
    max_size: int = 0
    unk_id: int = UNK_ID

    @classmethod
    def from_words(cls, words, max_size=None) -> "Vocabulary":
        words = tuple(words)
        if not words or words[UNK_ID] != UNK_WORD:
            raise DataFormatError(f"vocabulary must start with the {UNK_WORD!r} marker")
        ids = {w: i for i, w in enumerate(words)}
        if len(ids) != len(words):
            raise DataFormatError("vocabulary contains duplicate words")
        return cls(words=words, ids=ids, max_size=max_size or len(words))

    def __len__(self) -> int:
        return len(self.words)

    def id(self, word: str) -> int:
        """Lowercased lookup; anything unknown maps to unk_id."""
        return self.ids.get(word.lower(), self.unk_id)

    def __contains__(self, word: str) -> bool:
        return word.lower() in self.ids


def build_vocab(corpus: TextCorpus, max_size: int) -> Vocabulary:
    """Unknown marker plus the (max_size - 1) most frequent lowercased words.

    Frequency ties break by first occurrence, so the ordering is a pure
    function of the corpus.
    """
    if max_size < 2:
        raise ValueError(f"max_size must be >= 2, got {max_size}")
    if not corpus.sentences:
        raise DataFormatError("cannot build a vocabulary from an empty corpus")
    counts: Counter[str] = Counter()
    first_seen: dict[str, int] = {}
    pos = 0
    for sent in corpus.sentences:
        for tok in sent:
            w = tok.lower()
            counts[w] += 1
            if w not in first_seen:
                first_seen[w] = pos
                pos += 1
    ranked = sorted(counts, key=lambda w: (-counts[w], first_seen[w]))
    words = (UNK_WORD, *ranked[: max_size - 1])
    return Vocabulary.from_words(words, max_size=max_size)


@dataclass
class PairExample:
    """One labeled example.

    `label` is the task-typed value (class id, float score, or positive
    candidate index); `label_text` preserves the raw first column for
    byte-faithful rewriting.  Ranking examples carry their answers in
    `candidates` and leave sentence_b empty.
    """

    sentence_a: list[str]
    sentence_b: list[str]
    label: int | float | str | None = None
    label_text: str = ""
    candidates: list[list[str]] | None = None

    def token_seq(self) -> list[str]:
        """All attackable tokens: sentence_a + sentence_b + candidates."""
        toks = list(self.sentence_a) + list(self.sentence_b)
        if self.candidates:
            for cand in self.candidates:
                toks.extend(cand)
        return toks

    def with_token(self, index: int, word: str) -> "PairExample":
        """Copy with the token at flat position `index` replaced."""
        a, b = list(self.sentence_a), list(self.sentence_b)
        if index < len(a):
            a[index] = word
            return replace(self, sentence_a=a, sentence_b=b)
        index -= len(a)
        if index < len(b):
            b[index] = word
            return replace(self, sentence_a=a, sentence_b=b)
        index -= len(b)
        cands = [list(c) for c in self.candidates or ()]
        for ci, cand in enumerate(cands):
            if index < len(cand):
                cand[index] = word
                cands[ci] = cand
                return replace(self, sentence_a=a, sentence_b=b, candidates=cands)
            index -= len(cand)
        raise IndexError(f"token index out of range for example: {index}")


@dataclass
class PairDataset:
    examples: list[PairExample]
    task_kind: TaskKind
    label_names: tuple[str, ...] = ()  # classification kinds only, sorted

    @property
    def n_classes(self) -> int:
        return len(self.label_names)

    def __len__(self) -> int:
        return len(self.examples)


def _data_lines(path):
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            yield lineno, line


def _split_row(path, lineno, line):
    cols = line.split("\t")
    if len(cols) != 3:
        raise DataFormatError(f"{path}:{lineno}: expected 3 tab-separated columns, got {len(cols)}")
    return cols


def load_pair_rows(path) -> list[PairExample]:
    """Kind-agnostic load: label kept as raw text, candidates by `|||`."""
    rows = []
    for lineno, line in _data_lines(path):
        label, a, b = _split_row(path, lineno, line)
        if CANDIDATE_SEP in b:
            cands = [tokenize(c) for c in b.split(CANDIDATE_SEP)]
            rows.append(PairExample(tokenize(a), [], label_text=label, candidates=cands))
        else:
            rows.append(PairExample(tokenize(a), tokenize(b), label_text=label))
    return rows


def type_pair_rows(rows, task_kind: TaskKind, origin: str = "dataset") -> PairDataset:
    """Assign typed labels from label_text per task kind (in place)."""
    if task_kind in (TaskKind.SINGLE_CLASSIFICATION, TaskKind.PAIRWISE_CLASSIFICATION):
        names = tuple(sorted({r.label_text for r in rows}))
        name_to_id = {n: i for i, n in enumerate(names)}
        for r in rows:
            r.label = name_to_id[r.label_text]
        return PairDataset(rows, task_kind, label_names=names)
    if task_kind is TaskKind.SIMILARITY:
        for r in rows:
            try:
                r.label = float(r.label_text)
            except ValueError:
                raise DataFormatError(f"{origin}: similarity label {r.label_text!r} is not a number") from None
            if not math.isfinite(r.label):
                raise DataFormatError(f"{origin}: similarity label {r.label_text!r} is not finite")
        return PairDataset(rows, task_kind)
    if task_kind is TaskKind.RANKING:
        for r in rows:
            if not r.candidates:
                raise DataFormatError(f"{origin}: ranking rows need '|||'-separated candidates")
            try:
                r.label = int(r.label_text)
            except ValueError:
                raise DataFormatError(f"{origin}: ranking label {r.label_text!r} is not an index") from None
            if not 0 <= r.label < len(r.candidates):
                raise DataFormatError(
                    f"{origin}: positive index {r.label} out of range for {len(r.candidates)} candidates"
                )
        return PairDataset(rows, task_kind)
    raise ValueError(f"unhandled task kind {task_kind}")


def load_pair_dataset(path, task_kind: TaskKind) -> PairDataset:
    """Typed load; one PairExample per non-header line, order preserved."""
    return type_pair_rows(load_pair_rows(path), task_kind, origin=str(path))


def dump_pair_rows(examples) -> str:
    """TSV body for a pair dataset (no header lines)."""
    out = []
    for ex in examples:
        if ex.candidates is not None:
            col3 = CANDIDATE_SEP.join(" ".join(c) for c in ex.candidates)
            out.append(f"{ex.label_text}\t{' '.join(ex.sentence_a)}\t{col3}")
        else:
            out.append(f"{ex.label_text}\t{' '.join(ex.sentence_a)}\t{' '.join(ex.sentence_b)}")
    return "".join(line + "\n" for line in out)


def load_text_corpus(path) -> TextCorpus:
    """UTF-8 plain text, one sentence per line; blank/# lines skipped."""
    sentences = []
    for _, line in _data_lines(path):
        toks = tokenize(line)
        if toks:
            sentences.append(toks)
    if not sentences:
        raise DataFormatError(f"{path}: no sentences found")
    return TextCorpus(sentences, source=str(path))


def dump_text_corpus(corpus: TextCorpus) -> str:
    return "".join(" ".join(s) + "\n" for s in corpus.sentences)
