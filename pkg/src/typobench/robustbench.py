"""End-to-end robustness evaluation.

Produces the clean/attacked/defended metric grid (two architectures,
"task-only" and "task+scrnn", crossed with attack counts), the drop and
restoration deltas derived from it, held-out word-recovery scoring for the
recognizer, and error-case extraction for defended-but-wrong examples.

Paired-attack discipline: for a given (seed, n) the identical attacked
dataset feeds both architectures, so deltas measure the corrector, not
attack sampling noise.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .corpus import PairDataset, PairExample, TaskKind, TextCorpus
from .perturb import NoiseKind, attack_dataset
from .rng import SplitMix64
from .scrnn import ScrnnModel, correct_sentences, correctable
from .taskheads import HeadParams, predict_example

ARCH_TASK_ONLY = "task-only"
ARCH_DEFENDED = "task+scrnn"

_METRIC_BY_KIND = {
    TaskKind.SINGLE_CLASSIFICATION: "accuracy",
    TaskKind.PAIRWISE_CLASSIFICATION: "accuracy",
    TaskKind.SIMILARITY: "mse",
    TaskKind.RANKING: "mrr",
}


@dataclass(frozen=True)
class EvalCell:
    architecture: str
    dataset: str
    n_attacks: int
    accuracy: float
    metric: str = "accuracy"

    def __post_init__(self):
        if self.architecture not in (ARCH_TASK_ONLY, ARCH_DEFENDED):
            raise ValueError(f"unknown architecture label {self.architecture!r}")
        if self.n_attacks < 0:
            raise ValueError("n_attacks must be >= 0")
        if self.metric in ("accuracy", "mrr") and not 0.0 <= self.accuracy <= 100.0:
            raise ValueError(f"{self.metric} {self.accuracy} outside [0, 100]")
        if self.metric == "mse" and self.accuracy < 0.0:
            raise ValueError(f"mse {self.accuracy} must be >= 0")


@dataclass(frozen=True)
class RobustnessMatrix:
    cells: tuple[EvalCell, ...]
    seed: int
    attack_kind: NoiseKind

    def __post_init__(self):
        object.__setattr__(self, "cells", tuple(self.cells))
        if not self.cells:
            raise ValueError("a robustness matrix needs at least one cell")
        for dataset in {c.dataset for c in self.cells}:
            counts = {
                arch: sorted(
                    c.n_attacks for c in self.cells
                    if c.dataset == dataset and c.architecture == arch
                )
                for arch in (ARCH_TASK_ONLY, ARCH_DEFENDED)
            }
            if counts[ARCH_TASK_ONLY] != counts[ARCH_DEFENDED] or not counts[ARCH_TASK_ONLY]:
                raise ValueError(
                    f"dataset {dataset!r}: attack counts differ between architectures"
                )

    def cell(self, architecture: str, dataset: str, n_attacks: int) -> EvalCell:
        for c in self.cells:
            if (c.architecture, c.dataset, c.n_attacks) == (architecture, dataset, n_attacks):
                return c
        raise ValueError(f"missing cell ({architecture}, {dataset}, {n_attacks})")

    def datasets(self) -> tuple[str, ...]:
        seen = []
        for c in self.cells:
            if c.dataset not in seen:
                seen.append(c.dataset)
        return tuple(seen)

    def attack_counts(self, dataset: str) -> tuple[int, ...]:
        return tuple(sorted({
            c.n_attacks for c in self.cells if c.dataset == dataset
        }))


@dataclass(frozen=True)
class ErrorCase:
    example: PairExample
    perturbed: PairExample
    corrected: PairExample
    gold: str
    predicted: str
    flagged_words: tuple[str, ...]

    def __post_init__(self):
        if self.predicted == self.gold:
            raise ValueError("error cases must have predicted != gold")


def _corrected_rows(corrector: ScrnnModel, rows) -> tuple[list[PairExample], list[list]]:
    """Correct every sentence of every row in one batched pass.

    Returns the corrected rows plus, per row, the correction records of all
    its sentences (flattened in a/b/candidate order)."""
    sents = []
    spans = []  # (row index, field) parallel to sents
    for i, ex in enumerate(rows):
        sents.append(list(ex.sentence_a))
        spans.append((i, "a"))
        sents.append(list(ex.sentence_b))
        spans.append((i, "b"))
        for j, cand in enumerate(ex.candidates or ()):
            sents.append(list(cand))
            spans.append((i, j))
    # correct_sentences rejects empty token lists; route those around it
    nonempty = [s for s in sents if s]
    fixed_all: list[list[str]] = []
    recs_all: list[list] = []
    if nonempty:
        fixed_ne, recs_ne = correct_sentences(corrector, nonempty)
        it = iter(zip(fixed_ne, recs_ne))
    else:
        it = iter(())
    for s in sents:
        if s:
            f, r = next(it)
            fixed_all.append(f)
            recs_all.append(r)
        else:
            fixed_all.append([])
            recs_all.append([])
    out = [replace(ex) for ex in rows]
    row_records: list[list] = [[] for _ in rows]
    for (i, field_key), toks, recs in zip(spans, fixed_all, recs_all):
        row_records[i].extend(recs)
        if field_key == "a":
            out[i] = replace(out[i], sentence_a=toks)
        elif field_key == "b":
            out[i] = replace(out[i], sentence_b=toks)
        else:
            cands = [list(c) for c in out[i].candidates]
            cands[field_key] = toks
            out[i] = replace(out[i], candidates=cands)
    return out, row_records


def _metric_value(head: HeadParams, exs) -> float:
    kind = head.kind
    if kind in (TaskKind.SINGLE_CLASSIFICATION, TaskKind.PAIRWISE_CLASSIFICATION):
        hit = 0
        for ex in exs:
            pred = predict_example(head, ex)
            if head.label_names[pred] == ex.label_text:
                hit += 1
        return 100.0 * hit / len(exs)
    if kind is TaskKind.SIMILARITY:
        errs = [(predict_example(head, ex) - float(ex.label)) ** 2 for ex in exs]
        return float(np.mean(errs))
    if kind is TaskKind.RANKING:
        total = 0.0
        for ex in exs:
            rels = np.asarray(predict_example(head, ex))
            rank = 1 + int((rels > rels[ex.label]).sum())
            total += 1.0 / rank
        return 100.0 * total / len(exs)
    raise ValueError(f"unhandled task kind {kind}")


def evaluate(head: HeadParams, dataset, corrector: ScrnnModel | None = None) -> float:
    """Task metric over a dataset: accuracy % for classification, MSE for
    similarity, MRR % for ranking.  With a corrector, every sentence is
    corrected before embedding (defense as a text pre-processing step)."""
    if isinstance(dataset, PairDataset):
        if dataset.task_kind is not head.kind:
            raise ValueError(
                f"dataset kind {dataset.task_kind.value} does not match "
                f"head kind {head.kind.value}"
            )
        exs = dataset.examples
    else:
        exs = list(dataset)
    if not exs:
        raise ValueError("cannot evaluate on an empty dataset")
    if corrector is not None:
        exs, _ = _corrected_rows(corrector, exs)
    return _metric_value(head, exs)


def _derive_attack_seed(seed: int, n: int) -> int:
    return SplitMix64(seed).spawn(0xA7).spawn(n).next_u64()


def run_matrix(
    head: HeadParams,
    clean_dataset,
    attack_kind: NoiseKind,
    seed: int,
    corrector: ScrnnModel,
    attack_counts: tuple[int, ...] = (0, 1, 2),
    dataset_label: str = "dataset",
) -> RobustnessMatrix:
    """Evaluate both architectures over the attack-count grid.

    Attacked datasets are generated once per count with seeds derived from
    `seed` and shared by both architectures (paired comparison).
    """
    exs = clean_dataset.examples if isinstance(clean_dataset, PairDataset) else list(clean_dataset)
    if not exs:
        raise ValueError("cannot evaluate on an empty dataset")
    metric = _METRIC_BY_KIND[head.kind]
    cells = []
    for n in sorted(set(attack_counts)):
        if n == 0:
            rows = exs
        else:
            rows, _ = attack_dataset(exs, n_attacks=n, kind=attack_kind,
                                     seed=_derive_attack_seed(seed, n))
        for arch, corr in ((ARCH_TASK_ONLY, None), (ARCH_DEFENDED, corrector)):
            cells.append(EvalCell(
                architecture=arch,
                dataset=dataset_label,
                n_attacks=n,
                accuracy=evaluate(head, rows, corr),
                metric=metric,
            ))
    return RobustnessMatrix(tuple(cells), seed=seed, attack_kind=attack_kind)


def deltas(matrix: RobustnessMatrix) -> dict[tuple[str, int], dict[str, float]]:
    """drop(n) = taskonly(0) - taskonly(n); restoration(n) = defended(n) - taskonly(n).

    Computed per (dataset, n); higher-is-better metrics only make the signs
    meaningful for accuracy/mrr, but the arithmetic is metric-generic."""
    out: dict[tuple[str, int], dict[str, float]] = {}
    for dataset in matrix.datasets():
        base = matrix.cell(ARCH_TASK_ONLY, dataset, 0).accuracy
        for n in matrix.attack_counts(dataset):
            attacked = matrix.cell(ARCH_TASK_ONLY, dataset, n).accuracy
            defended = matrix.cell(ARCH_DEFENDED, dataset, n).accuracy
            out[(dataset, n)] = {
                "drop": base - attacked,
                "restoration": defended - attacked,
            }
    return out


def word_recovery(model: ScrnnModel, noisy_corpus: TextCorpus, clean_corpus: TextCorpus) -> float:
    """Percentage of eligible noisy tokens whose correction equals the clean
    token (case-insensitive: the corrector recases to the noisy pattern,
    which noise on a boundary character may have moved).

    Eligible = the noisy token is correctable and the clean token is in the
    model vocabulary; everything else leaves the denominator.
    """
    if len(noisy_corpus.sentences) != len(clean_corpus.sentences):
        raise ValueError(
            f"misaligned corpora: {len(noisy_corpus.sentences)} noisy vs "
            f"{len(clean_corpus.sentences)} clean sentences"
        )
    for i, (ns, cs) in enumerate(zip(noisy_corpus.sentences, clean_corpus.sentences)):
        if len(ns) != len(cs):
            raise ValueError(f"misaligned corpora: sentence {i} has {len(ns)} vs {len(cs)} tokens")
    corrected, _ = correct_sentences(model, [list(s) for s in noisy_corpus.sentences])
    eligible = hit = 0
    for cor_s, noisy_s, clean_s in zip(corrected, noisy_corpus.sentences, clean_corpus.sentences):
        for cor, noisy, clean in zip(cor_s, noisy_s, clean_s):
            if correctable(noisy, model.alphabet) and clean in model.vocab:
                eligible += 1
                if cor.lower() == clean.lower():
                    hit += 1
    if eligible == 0:
        raise ValueError("no eligible tokens to score")
    return 100.0 * hit / eligible


def error_analysis(
    head: HeadParams,
    clean_rows,
    attacked_rows,
    corrector: ScrnnModel,
) -> list[ErrorCase]:
    """Defended-but-wrong examples with their pass-through word flags,
    sorted by flag count descending (most unrecovered words first; ties keep
    dataset order).  Classification and ranking kinds only."""
    kind = head.kind
    if kind is TaskKind.SIMILARITY:
        raise ValueError("error analysis needs a discrete prediction; similarity has none")
    clean_rows = list(clean_rows)
    attacked_rows = list(attacked_rows)
    if len(clean_rows) != len(attacked_rows):
        raise ValueError("clean and attacked datasets are misaligned")
    corrected, row_records = _corrected_rows(corrector, attacked_rows)
    cases = []
    for clean_ex, att_ex, cor_ex, recs in zip(clean_rows, attacked_rows, corrected, row_records):
        pred = predict_example(head, cor_ex)
        if kind is TaskKind.RANKING:
            rels = np.asarray(pred)
            predicted = str(int(np.argmax(rels)))
            gold = str(clean_ex.label)
        else:
            predicted = head.label_names[pred]
            gold = clean_ex.label_text
        if predicted == gold:
            continue
        flagged = tuple(r.after for r in recs if r.flag)
        cases.append(ErrorCase(
            example=clean_ex,
            perturbed=att_ex,
            corrected=cor_ex,
            gold=gold,
            predicted=predicted,
            flagged_words=flagged,
        ))
    cases.sort(key=lambda c: -len(c.flagged_words))
    return cases


# ---------------------------------------------------------------------------
# Rendering.

TSV_COLUMNS = ("architecture", "dataset", "n_attacks", "metric", "value")


def render_tsv(matrix: RobustnessMatrix) -> str:
    """5-column TSV of all cells plus drop/restoration delta rows; matrix
    seed and attack kind ride along as comment lines, and values keep full
    float precision, so a parse restores the exact object."""
    lines = [
        f"# attack_kind = {matrix.attack_kind.value}",
        f"# seed = {matrix.seed}",
        "# " + "\t".join(TSV_COLUMNS),
    ]
    for c in matrix.cells:
        lines.append(
            f"{c.architecture}\t{c.dataset}\t{c.n_attacks}\t{c.metric}\t{c.accuracy!r}"
        )
    for (dataset, n), dd in sorted(deltas(matrix).items()):
        if n == 0:
            continue
        lines.append(f"delta\t{dataset}\t{n}\tdrop\t{dd['drop']!r}")
        lines.append(f"delta\t{dataset}\t{n}\trestoration\t{dd['restoration']!r}")
    return "".join(line + "\n" for line in lines)


def parse_tsv(text: str) -> RobustnessMatrix:
    """Inverse of render_tsv (delta rows are recomputed, not read)."""
    seed = None
    kind = None
    cells = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if body.startswith("attack_kind ="):
                kind = NoiseKind(body.split("=", 1)[1].strip())
            elif body.startswith("seed ="):
                seed = int(body.split("=", 1)[1].strip())
            continue
        cols = line.split("\t")
        if len(cols) != 5:
            raise ValueError(f"report line {lineno}: expected 5 columns, got {len(cols)}")
        arch, dataset, n, metric, value = cols
        if arch == "delta":
            continue
        cells.append(EvalCell(arch, dataset, int(n), float(value), metric))
    if seed is None or kind is None or not cells:
        raise ValueError("report is missing header comments or cells")
    return RobustnessMatrix(tuple(cells), seed=seed, attack_kind=kind)


def render_table(matrix: RobustnessMatrix) -> str:
    """Aligned text table, one row per (dataset, architecture); the metric
    columns follow the attack grid left to right."""
    lines = []
    for dataset in matrix.datasets():
        counts = matrix.attack_counts(dataset)
        header = f"{dataset}  [{matrix.attack_kind.value} attacks: " + ", ".join(
            str(n) for n in counts
        ) + "]"
        lines.append(header)
        width = max(len(ARCH_TASK_ONLY), len(ARCH_DEFENDED)) + 2
        for arch in (ARCH_TASK_ONLY, ARCH_DEFENDED):
            vals = " / ".join(
                f"{matrix.cell(arch, dataset, n).accuracy:6.2f}" for n in counts
            )
            lines.append(f"  {arch:<{width}} {vals}")
        dd = deltas(matrix)
        drops = " ".join(
            f"drop({n})={dd[(dataset, n)]['drop']:.2f}" for n in counts if n > 0
        )
        rests = " ".join(
            f"restoration({n})={dd[(dataset, n)]['restoration']:.2f}" for n in counts if n > 0
        )
        if drops:
            lines.append(f"  {drops}")
            lines.append(f"  {rests}")
    return "".join(line + "\n" for line in lines)


def _mark_changed(original, changed) -> str:
    toks = [
        f"**{c}**" if c != o else c
        for o, c in zip(original, changed)
    ]
    return " ".join(toks)


def _render_side(ex: PairExample, mark_against: PairExample | None):
    """One example's text columns; candidate lists fold into the b column."""
    def join(tokens, against):
        return _mark_changed(against, tokens) if against is not None else " ".join(tokens)

    ref = mark_against or ex
    a = join(ex.sentence_a, ref.sentence_a if mark_against else None)
    if ex.candidates:
        parts = []
        for ci, cand in enumerate(ex.candidates):
            against = ref.candidates[ci] if mark_against else None
            parts.append(join(cand, against))
        b = " ||| ".join(parts)
    else:
        b = join(ex.sentence_b, ref.sentence_b if mark_against else None)
    return a, b


def render_error_cases(cases) -> str:
    """TSV dump of defended failures: gold, predicted, flagged words, then
    original / perturbed / corrected text with changed words starred."""
    lines = [
        "# gold\tpredicted\tflagged\toriginal_a\toriginal_b\tperturbed_a"
        "\tperturbed_b\tcorrected_a\tcorrected_b"
    ]
    for case in cases:
        oa, ob = _render_side(case.example, None)
        pa, pb = _render_side(case.perturbed, case.example)
        ca, cb = _render_side(case.corrected, case.example)
        flagged = ",".join(case.flagged_words)
        lines.append(
            f"{case.gold}\t{case.predicted}\t{flagged}\t{oa}\t{ob}\t{pa}\t{pb}\t{ca}\t{cb}"
        )
    return "".join(line + "\n" for line in lines)
