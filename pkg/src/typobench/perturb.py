"""Character-level adversarial noise for words, sentences, and datasets.

Five noise kinds: swap two adjacent characters, insert a letter, delete a
character, replace a character with a keyboard neighbor, or jumble (permute)
a word's interior.  All randomness flows through an explicit SplitMix64
stream, so any (input, kind, seed) triple reproduces bit-exactly.

Attack positions are uniform over *characters*, not words: each attack draws
from the pool of eligible intra-word positions across the whole sentence, so
long words absorb proportionally more attacks.  A jumbled word contributes
one pool slot per interior character under the same rule.
"""

from __future__ import annotations

import dataclasses
import enum
import string
from importlib import resources

from .corpus import DataFormatError, PairExample
from .rng import SplitMix64

__all__ = [
    "INSERT_LETTERS",
    "AttackLog",
    "AttackRecord",
    "IneligibleError",
    "KeyboardMap",
    "NoiseKind",
    "apply_noise",
    "attack_dataset",
    "attack_sentence",
    "eligible_positions",
    "enumerate_swaps",
    "swap_adjacent",
]

# Inserted characters are drawn from the 52 ASCII letters only, index order
# a..z then A..Z; symbols would produce words unlike any observed typo.
INSERT_LETTERS = string.ascii_letters


class NoiseKind(enum.Enum):
    SWAP = "swap"
    INSERT = "insert"
    DELETE = "delete"
    KEYBOARD = "keyboard"
    JUMBLE = "jumble"


@dataclasses.dataclass(frozen=True)
class AttackRecord:
    """Audit entry for one applied perturbation.

    `before`/`after` are the attacked token immediately before and after
    this single attack (a second attack on the same token chains them).
    `token_index` is the flat position in the attacked token sequence.
    """

    token_index: int
    char_position: int
    kind: NoiseKind
    before: str
    after: str

    def __post_init__(self):
        if self.before == self.after:
            raise ValueError("attack record must change the token")
        if self.token_index < 0:
            raise ValueError("token_index must be non-negative")


class IneligibleError(ValueError):
    """No eligible perturbation exists (or remained mid-run).

    `records` holds the attacks applied before exhaustion and `tokens` the
    partially attacked sentence, so callers can keep the partial result.
    """

    def __init__(self, message, records=(), tokens=None):
        super().__init__(message)
        self.records = tuple(records)
        self.tokens = None if tokens is None else tuple(tokens)


class KeyboardMap:
    """Symmetric character adjacency on a physical keyboard layout."""

    def __init__(self, adjacency: dict[str, frozenset[str]]):
        for ch, nbrs in adjacency.items():
            if ch in nbrs:
                raise ValueError(f"character {ch!r} adjacent to itself")
            for n in nbrs:
                if ch not in adjacency.get(n, frozenset()):
                    raise ValueError(f"asymmetric adjacency {ch!r}/{n!r}")
        self.adjacency = dict(adjacency)

    @classmethod
    def from_text(cls, text: str, origin: str = "<keyboard map>") -> "KeyboardMap":
        """Parse `char: neighbor neighbor ...` lines, applying the symmetric
        closure.  Blank lines and `#` comments are skipped."""
        adj: dict[str, set[str]] = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            head, sep, rest = line.partition(":")
            if not sep:
                raise DataFormatError(f"{origin}:{lineno}: missing ':'")
            ch = head.strip()
            if len(ch) != 1:
                raise DataFormatError(f"{origin}:{lineno}: key must be one character")
            for tok in rest.split():
                if len(tok) != 1:
                    raise DataFormatError(
                        f"{origin}:{lineno}: neighbor {tok!r} must be one character"
                    )
                if tok == ch:
                    raise DataFormatError(f"{origin}:{lineno}: {ch!r} adjacent to itself")
                adj.setdefault(ch, set()).add(tok)
                adj.setdefault(tok, set()).add(ch)
        return cls({ch: frozenset(nbrs) for ch, nbrs in adj.items()})

    @classmethod
    def from_file(cls, path) -> "KeyboardMap":
        with open(path, encoding="utf-8") as f:
            return cls.from_text(f.read(), origin=str(path))

    @classmethod
    def default(cls) -> "KeyboardMap":
        """The packaged QWERTY letter-row map (lowercase letters only)."""
        text = resources.files("typobench").joinpath("data/qwerty.txt").read_text("utf-8")
        return cls.from_text(text, origin="data/qwerty.txt")

    def __contains__(self, ch: str) -> bool:
        return ch in self.adjacency

    def neighbors(self, ch: str) -> tuple[str, ...]:
        """Sorted, so indexed draws are deterministic."""
        return tuple(sorted(self.adjacency[ch]))


def swap_adjacent(word: str, i: int) -> str:
    """Exchange characters i and i+1.  The pair must be distinct, otherwise
    the "perturbation" would be invisible and the caller must resample."""
    if not 0 <= i < len(word) - 1:
        raise ValueError(f"swap position {i} out of range for {word!r}")
    if word[i] == word[i + 1]:
        raise IneligibleError(f"identical adjacent characters at {i} in {word!r}")
    return word[:i] + word[i + 1] + word[i] + word[i + 2 :]


def enumerate_swaps(word: str) -> set[str]:
    """All distinct adjacent-swap outputs; brute-force oracle."""
    out = set()
    for i in range(len(word) - 1):
        if word[i] != word[i + 1]:
            out.add(swap_adjacent(word, i))
    return out


def _jumble_ok(word: str) -> bool:
    # A non-identity interior permutation exists iff the interior holds at
    # least two distinct characters (so at least two characters total).
    return len(word) >= 4 and len(set(word[1:-1])) >= 2


def eligible_positions(
    word: str, kind: NoiseKind, kb: KeyboardMap | None = None
) -> tuple[int, ...]:
    """Character positions of `word` where `kind` can land.

    insert counts len+1 slots (both ends included); jumble lists every
    interior position of an eligible word, all denoting the same whole-
    interior permutation but weighting the position pool by word length.
    """
    if kind is NoiseKind.SWAP:
        return tuple(i for i in range(len(word) - 1) if word[i] != word[i + 1])
    if kind is NoiseKind.INSERT:
        return tuple(range(len(word) + 1))
    if kind is NoiseKind.DELETE:
        return tuple(range(len(word))) if len(word) >= 2 else ()
    if kind is NoiseKind.KEYBOARD:
        if kb is None:
            raise ValueError("keyboard noise needs a KeyboardMap")
        return tuple(i for i, ch in enumerate(word) if ch in kb)
    if kind is NoiseKind.JUMBLE:
        return tuple(range(1, len(word) - 1)) if _jumble_ok(word) else ()
    raise ValueError(f"unknown noise kind {kind!r}")


def _apply_at(
    word: str, kind: NoiseKind, pos: int, rng: SplitMix64, kb: KeyboardMap | None
) -> str:
    """Apply `kind` at an already-validated position.  Draw order after the
    position draw is fixed per kind (part of the determinism contract)."""
    if kind is NoiseKind.SWAP:
        return swap_adjacent(word, pos)
    if kind is NoiseKind.INSERT:
        ch = INSERT_LETTERS[rng.randbelow(len(INSERT_LETTERS))]
        return word[:pos] + ch + word[pos:]
    if kind is NoiseKind.DELETE:
        return word[:pos] + word[pos + 1 :]
    if kind is NoiseKind.KEYBOARD:
        nbrs = kb.neighbors(word[pos])
        return word[:pos] + nbrs[rng.randbelow(len(nbrs))] + word[pos + 1 :]
    if kind is NoiseKind.JUMBLE:
        interior = list(word[1:-1])
        while True:
            rng.shuffle(interior)
            if "".join(interior) != word[1:-1]:
                break
        return word[0] + "".join(interior) + word[-1]
    raise ValueError(f"unknown noise kind {kind!r}")


def apply_noise(
    word: str, kind: NoiseKind, rng: SplitMix64, kb: KeyboardMap | None = None
) -> tuple[str, AttackRecord]:
    """Perturb one word at a uniformly drawn eligible position.

    The returned record carries token_index 0; sentence-level callers
    rewrite it.  Raises IneligibleError when no position is eligible.
    """
    if kind is NoiseKind.KEYBOARD and kb is None:
        kb = KeyboardMap.default()
    pool = eligible_positions(word, kind, kb)
    if not pool:
        raise IneligibleError(f"no eligible {kind.value} position in {word!r}")
    pos = pool[rng.randbelow(len(pool))]
    after = _apply_at(word, kind, pos, rng, kb)
    return after, AttackRecord(0, pos, kind, word, after)


def attack_sentence(
    tokens,
    n_attacks: int,
    kind: NoiseKind,
    rng: SplitMix64,
    kb: KeyboardMap | None = None,
) -> tuple[list[str], list[AttackRecord]]:
    """Apply `n_attacks` sequential single-character attacks to a sentence.

    Each attack draws one position uniformly from the pool of all eligible
    intra-word positions in the *current* (already-perturbed) sentence, so
    a multi-attack run can hit the same word twice.  Token count never
    changes.  When the pool empties mid-run, raises IneligibleError carrying
    the attacks applied so far and the partial sentence.
    """
    if n_attacks < 0:
        raise ValueError("n_attacks must be >= 0")
    if kind is NoiseKind.KEYBOARD and kb is None:
        kb = KeyboardMap.default()
    toks = list(tokens)
    records: list[AttackRecord] = []
    for _ in range(n_attacks):
        pool = [
            (ti, p)
            for ti, w in enumerate(toks)
            for p in eligible_positions(w, kind, kb)
        ]
        if not pool:
            raise IneligibleError(
                f"position pool exhausted after {len(records)} of {n_attacks} attacks",
                records=records,
                tokens=toks,
            )
        ti, pos = pool[rng.randbelow(len(pool))]
        before = toks[ti]
        after = _apply_at(before, kind, pos, rng, kb)
        toks[ti] = after
        records.append(AttackRecord(ti, pos, kind, before, after))
    return toks, records


@dataclasses.dataclass
class AttackLog:
    """Corpus-wide audit log: (example_index, record) rows plus a map of
    examples whose position pool ran dry before n_attacks landed."""

    requested: int
    entries: list[tuple[int, AttackRecord]] = dataclasses.field(default_factory=list)
    exhausted: dict[int, int] = dataclasses.field(default_factory=dict)

    def tsv_lines(self):
        """Data rows `example_id token_index char_position kind before after`
        (tab-separated), with a comment line after each exhausted example."""
        by_example: dict[int, list[AttackRecord]] = {}
        for idx, rec in self.entries:
            by_example.setdefault(idx, []).append(rec)
        for idx in sorted(set(by_example) | set(self.exhausted)):
            for r in by_example.get(idx, ()):
                yield (
                    f"{idx}\t{r.token_index}\t{r.char_position}"
                    f"\t{r.kind.value}\t{r.before}\t{r.after}"
                )
            if idx in self.exhausted:
                yield (
                    f"# example {idx} exhausted after "
                    f"{self.exhausted[idx]} of {self.requested} attacks"
                )


def attack_dataset(
    examples,
    n_attacks: int,
    kind: NoiseKind,
    seed: int,
    kb: KeyboardMap | None = None,
) -> tuple[list[PairExample], AttackLog]:
    """Attack every example's full token sequence (both sentences, plus any
    ranking candidates) as one position pool.  Labels pass through.

    Each example draws from its own SplitMix64(seed xor index) stream, so
    results do not depend on processing order and per-example work could be
    farmed out to threads without changing a byte.  Examples whose pool
    runs dry keep the attacks that did land and are flagged in the log.
    """
    if kind is NoiseKind.KEYBOARD and kb is None:
        kb = KeyboardMap.default()
    out: list[PairExample] = []
    log = AttackLog(requested=n_attacks)
    for idx, ex in enumerate(examples):
        rng = SplitMix64(seed ^ idx)
        toks = ex.token_seq()
        try:
            new_toks, records = attack_sentence(toks, n_attacks, kind, rng, kb)
        except IneligibleError as err:
            new_toks, records = list(err.tokens), list(err.records)
            log.exhausted[idx] = len(records)
        new_ex = ex
        for ti, (old, new) in enumerate(zip(toks, new_toks)):
            if old != new:
                new_ex = new_ex.with_token(ti, new)
        out.append(new_ex)
        log.entries.extend((idx, r) for r in records)
    return out, log
