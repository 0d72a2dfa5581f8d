"""Toy downstream task heads over a trainable bag-of-embeddings encoder.

Four task kinds share one parameter container: single-sentence
classification (softmax linear head), pairwise classification (a k-step
answer-refinement head that keeps a state across steps and averages the
per-step distributions), similarity regression (linear score + squared
error), and candidate ranking (sigmoid relevance + NLL of the positive
candidate under a softmax over candidates).

Sentences are encoded as the mean of their token embedding rows, so both
encoders are order-free by construction.  All gradients are hand-written
and covered by finite-difference tests; training is plain clipped SGD over
the embedding table and head parameters jointly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit as sigmoid

from .corpus import (
    PairDataset,
    PairExample,
    TaskKind,
    TextCorpus,
    Vocabulary,
    build_vocab,
    type_pair_rows,
)
from .nncore import OptimConfig, Param, clip_and_step, softmax, uniform_values
from .rng import SplitMix64
from .serialize import read_checkpoint, write_checkpoint

HEAD_MAGIC = b"TASKH"
SAN_STEPS_DEFAULT = 5

_CLASSIFICATION = (TaskKind.SINGLE_CLASSIFICATION, TaskKind.PAIRWISE_CLASSIFICATION)


@dataclass
class EmbeddingTable:
    """Trainable |vocab| x dim word vectors; row 0 is the unknown word."""

    vocab: Vocabulary
    dim: int
    vectors: Param

    def __post_init__(self):
        if self.vectors.values.shape != (len(self.vocab), self.dim):
            raise ValueError(
                f"embedding shape {self.vectors.values.shape} does not match "
                f"|vocab|={len(self.vocab)}, dim={self.dim}"
            )
        if not np.isfinite(self.vectors.values).all():
            raise ValueError("embedding table contains non-finite values")


@dataclass
class SanParams:
    """State machinery of the multi-step pairwise head.

    `state_update` is one affine map (dim, 2*dim) applied to [s; x] and
    squashed by tanh; `k` is the number of refinement steps averaged."""

    state_update: Param
    state_bias: Param
    k: int = SAN_STEPS_DEFAULT

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"san step count must be >= 1, got {self.k}")


@dataclass(frozen=True)
class SanState:
    """State vector after `step` refinement steps."""

    s: np.ndarray
    step: int


@dataclass
class HeadParams:
    kind: TaskKind
    embedding: EmbeddingTable
    w_task: Param
    san: SanParams | None = None
    label_names: tuple[str, ...] = ()

    def __post_init__(self):
        out, inp = self.w_task.values.shape
        dim = self.embedding.dim
        if self.kind in _CLASSIFICATION:
            if len(self.label_names) < 2:
                raise ValueError("classification heads need >= 2 label names")
            if out != len(self.label_names):
                raise ValueError(
                    f"w_task output arity {out} != {len(self.label_names)} labels"
                )
        elif out != 1:
            raise ValueError(f"w_task output arity must be 1 for {self.kind}, got {out}")
        expected_in = dim if self.kind in (
            TaskKind.SINGLE_CLASSIFICATION, TaskKind.PAIRWISE_CLASSIFICATION
        ) else 2 * dim
        if inp != expected_in:
            raise ValueError(f"w_task input arity {inp}, expected {expected_in}")
        if self.kind is TaskKind.PAIRWISE_CLASSIFICATION and self.san is None:
            raise ValueError("pairwise classification head needs san parameters")

    def params(self) -> list[Param]:
        ps = [self.embedding.vectors, self.w_task]
        if self.san is not None:
            ps.extend([self.san.state_update, self.san.state_bias])
        return ps


def _token_ids(tokens, vocab: Vocabulary) -> list[int]:
    return [vocab.id(t) for t in tokens]


def embed_sentence(tokens, table: EmbeddingTable) -> np.ndarray:
    """Mean of embedding rows (unknown id for OOV); zeros for empty input."""
    if not tokens:
        return np.zeros(table.dim)
    ids = _token_ids(tokens, table.vocab)
    return table.vectors.values[ids].mean(axis=0)


def _spread_to_rows(table: EmbeddingTable, ids, dvec):
    """Accumulate d(mean of rows) into the embedding gradient."""
    if not ids:
        return
    contrib = dvec / len(ids)
    for i in ids:
        table.vectors.grad[i] += contrib


def pair_rep(va: np.ndarray, vb: np.ndarray) -> np.ndarray:
    """Order-aware pair encoding: [mean of the two vectors ; |difference|]."""
    return np.concatenate([0.5 * (va + vb), np.abs(va - vb)])


def _pair_rep_backward(va, vb, dx):
    dim = va.shape[0]
    dm, dd = dx[:dim], dx[dim:]
    sign = np.sign(va - vb)
    return 0.5 * dm + sign * dd, 0.5 * dm - sign * dd


def classify_single(x: np.ndarray, params: HeadParams) -> np.ndarray:
    """softmax(W_task . x) over the label set."""
    W = params.w_task.values
    if x.shape != (W.shape[1],):
        raise ValueError(f"input shape {x.shape} does not match w_task {W.shape}")
    return softmax(W @ x)


def ce_loss(dist: np.ndarray, label: int) -> float:
    """Negative log probability of the gold label under `dist`."""
    dist = np.asarray(dist)
    if not 0 <= label < dist.shape[-1]:
        raise ValueError(f"label {label} out of range for {dist.shape[-1]} classes")
    return -float(np.log(max(float(dist[label]), 1e-300)))


def san_pairwise(premise, hypothesis, params: HeadParams) -> np.ndarray:
    """k-step refinement: state starts at the premise embedding, each step
    scores softmax(W_task . (s * x)) against the hypothesis embedding x and
    then updates s by one affine+tanh step on (s, x); the k per-step
    distributions are averaged."""
    if params.san is None:
        raise ValueError("head has no san parameters")
    table = params.embedding
    x = embed_sentence(hypothesis, table)
    state = SanState(embed_sentence(premise, table), 0)
    W = params.w_task.values
    U = params.san.state_update.values
    c = params.san.state_bias.values
    total = np.zeros(W.shape[0])
    for _ in range(params.san.k):
        total += softmax(W @ (state.s * x))
        state = SanState(np.tanh(U @ np.concatenate([state.s, x]) + c), state.step + 1)
    return total / params.san.k


def similarity(x_pair: np.ndarray, params: HeadParams) -> float:
    """Unbounded linear similarity score of a pair representation."""
    W = params.w_task.values
    if x_pair.shape != (W.shape[1],):
        raise ValueError(f"input shape {x_pair.shape} does not match w_task {W.shape}")
    return float(W[0] @ x_pair)


def mse_loss(sim: float, y: float) -> float:
    return (y - sim) ** 2


def relevance(q, a, params: HeadParams) -> float:
    """Sigmoid-squashed linear relevance of (question, answer) in (0, 1)."""
    table = params.embedding
    x = pair_rep(embed_sentence(q, table), embed_sentence(a, table))
    return float(sigmoid(params.w_task.values[0] @ x))


def rank_nll(rels, positive_index: int) -> float:
    """NLL of the positive candidate under a softmax over candidate scores."""
    rels = np.asarray(rels, dtype=np.float64)
    if rels.ndim != 1 or rels.shape[0] < 2:
        raise ValueError("need at least 2 candidate scores")
    if not 0 <= positive_index < rels.shape[0]:
        raise ValueError(f"positive index {positive_index} out of range")
    return -float(np.log(softmax(rels)[positive_index]))


def predict_example(head: HeadParams, ex: PairExample):
    """Kind-typed prediction: label id for classification, score for
    similarity, per-candidate relevance list for ranking."""
    kind = head.kind
    table = head.embedding
    if kind is TaskKind.SINGLE_CLASSIFICATION:
        return int(np.argmax(classify_single(embed_sentence(ex.sentence_a, table), head)))
    if kind is TaskKind.PAIRWISE_CLASSIFICATION:
        return int(np.argmax(san_pairwise(ex.sentence_a, ex.sentence_b, head)))
    if kind is TaskKind.SIMILARITY:
        va = embed_sentence(ex.sentence_a, table)
        vb = embed_sentence(ex.sentence_b, table)
        return similarity(pair_rep(va, vb), head)
    if kind is TaskKind.RANKING:
        if not ex.candidates:
            raise ValueError("ranking example has no candidates")
        return [relevance(ex.sentence_a, cand, head) for cand in ex.candidates]
    raise ValueError(f"unhandled task kind {kind}")


# ---------------------------------------------------------------------------
# Per-example losses with hand-written gradients (accumulated into .grad).


def _grad_single(head: HeadParams, ex: PairExample):
    table = head.embedding
    ids = _token_ids(ex.sentence_a, table.vocab)
    x = embed_sentence(ex.sentence_a, table)
    z = head.w_task.values @ x
    p = softmax(z)
    loss = ce_loss(p, ex.label)
    dz = p.copy()
    dz[ex.label] -= 1.0
    head.w_task.grad += np.outer(dz, x)
    _spread_to_rows(table, ids, head.w_task.values.T @ dz)
    return loss, float(np.argmax(z) == ex.label)


def _grad_pairwise(head: HeadParams, ex: PairExample):
    table = head.embedding
    san = head.san
    k = san.k
    dim = table.dim
    ids_a = _token_ids(ex.sentence_a, table.vocab)
    ids_b = _token_ids(ex.sentence_b, table.vocab)
    x = embed_sentence(ex.sentence_b, table)
    W = head.w_task.values
    U = san.state_update.values
    c = san.state_bias.values

    states = [embed_sentence(ex.sentence_a, table)]
    dists = []
    for j in range(k):
        dists.append(softmax(W @ (states[j] * x)))
        states.append(np.tanh(U @ np.concatenate([states[j], x]) + c))
    P = sum(dists) / k
    loss = ce_loss(P, ex.label)

    dP = np.zeros_like(P)
    dP[ex.label] = -1.0 / max(float(P[ex.label]), 1e-300)
    dp = dP / k
    dx = np.zeros(dim)
    ds_next = np.zeros(dim)  # gradient flowing into states[j+1]
    for j in range(k - 1, -1, -1):
        # through the (possibly unused at j = k-1) state update
        s_new = states[j + 1]
        da = (1.0 - s_new * s_new) * ds_next
        san.state_update.grad += np.outer(da, np.concatenate([states[j], x]))
        san.state_bias.grad += da
        ds = U[:, :dim].T @ da
        dx += U[:, dim:].T @ da
        # through this step's distribution (full softmax jacobian: the loss
        # is -log of the averaged distribution, not a plain softmax CE)
        pj = dists[j]
        dz = pj * (dp - float(pj @ dp))
        m = states[j] * x
        head.w_task.grad += np.outer(dz, m)
        dm = W.T @ dz
        ds += dm * x
        dx += dm * states[j]
        ds_next = ds
    _spread_to_rows(table, ids_a, ds_next)
    _spread_to_rows(table, ids_b, dx)
    return loss, float(np.argmax(P) == ex.label)


def _grad_similarity(head: HeadParams, ex: PairExample):
    table = head.embedding
    ids_a = _token_ids(ex.sentence_a, table.vocab)
    ids_b = _token_ids(ex.sentence_b, table.vocab)
    va = embed_sentence(ex.sentence_a, table)
    vb = embed_sentence(ex.sentence_b, table)
    xp = pair_rep(va, vb)
    sim = similarity(xp, head)
    loss = mse_loss(sim, ex.label)
    dsim = 2.0 * (sim - ex.label)
    head.w_task.grad[0] += dsim * xp
    dva, dvb = _pair_rep_backward(va, vb, dsim * head.w_task.values[0])
    _spread_to_rows(table, ids_a, dva)
    _spread_to_rows(table, ids_b, dvb)
    return loss, (sim - ex.label) ** 2


def _grad_ranking(head: HeadParams, ex: PairExample):
    table = head.embedding
    if not ex.candidates:
        raise ValueError("ranking example has no candidates")
    ids_q = _token_ids(ex.sentence_a, table.vocab)
    vq = embed_sentence(ex.sentence_a, table)
    W = head.w_task.values
    cand_ids, cand_vecs, xps, rels = [], [], [], []
    for cand in ex.candidates:
        ids = _token_ids(cand, table.vocab)
        vc = embed_sentence(cand, table)
        xp = pair_rep(vq, vc)
        cand_ids.append(ids)
        cand_vecs.append(vc)
        xps.append(xp)
        rels.append(float(sigmoid(W[0] @ xp)))
    rels_arr = np.asarray(rels)
    loss = rank_nll(rels_arr, ex.label)
    dr = softmax(rels_arr)
    dr[ex.label] -= 1.0
    dvq = np.zeros(table.dim)
    for i, (ids, vc, xp) in enumerate(zip(cand_ids, cand_vecs, xps)):
        dscore = dr[i] * rels[i] * (1.0 - rels[i])
        head.w_task.grad[0] += dscore * xp
        dq_i, dc_i = _pair_rep_backward(vq, vc, dscore * W[0])
        dvq += dq_i
        _spread_to_rows(table, ids, dc_i)
    _spread_to_rows(table, ids_q, dvq)
    # reciprocal rank of the positive candidate (strictly-greater rule)
    rank = 1 + int((rels_arr > rels_arr[ex.label]).sum())
    return loss, 1.0 / rank


_GRAD_FNS = {
    TaskKind.SINGLE_CLASSIFICATION: _grad_single,
    TaskKind.PAIRWISE_CLASSIFICATION: _grad_pairwise,
    TaskKind.SIMILARITY: _grad_similarity,
    TaskKind.RANKING: _grad_ranking,
}


def example_loss_and_grad(head: HeadParams, ex: PairExample):
    """Loss of one example, accumulating gradients into head.params().

    The second return value is the per-example metric contribution:
    correctness (0/1) for classification, squared error for similarity,
    reciprocal rank for ranking."""
    return _GRAD_FNS[head.kind](head, ex)


@dataclass(frozen=True)
class TrainReport:
    """score is accuracy %, MSE, or MRR depending on the task kind."""

    epoch: int
    mean_loss: float
    score: float


def _score_from(kind: TaskKind, total: float, n: int) -> float:
    if kind in _CLASSIFICATION:
        return 100.0 * total / n
    return total / n  # MSE or MRR


def train_head(
    dataset,
    kind: TaskKind | None = None,
    cfg: OptimConfig | None = None,
    seed: int = 0,
    dim: int = 64,
    san_k: int = SAN_STEPS_DEFAULT,
) -> tuple[HeadParams, list[TrainReport]]:
    """Clipped SGD over embeddings and head weights jointly.

    `dataset` is a typed PairDataset or a list of raw PairExample rows plus
    an explicit `kind`.  Deterministic per seed.
    """
    if isinstance(dataset, PairDataset):
        ds = dataset
        if kind is not None and kind is not ds.task_kind:
            raise ValueError(f"dataset kind {ds.task_kind} != requested {kind}")
    else:
        if kind is None:
            raise ValueError("raw example lists need an explicit task kind")
        ds = type_pair_rows(list(dataset), kind)
    if not ds.examples:
        raise ValueError("cannot train a head on an empty dataset")
    if cfg is None:
        cfg = OptimConfig(learning_rate=0.5)

    sentences = []
    for ex in ds.examples:
        for sent in (ex.sentence_a, ex.sentence_b, *(ex.candidates or ())):
            if sent:
                sentences.append(list(sent))
    vocab = build_vocab(TextCorpus(sentences), max_size=1 + len(
        {t.lower() for s in sentences for t in s}
    ))

    rng = SplitMix64(seed)
    table = EmbeddingTable(vocab, dim, Param(uniform_values((len(vocab), dim), rng), "embeddings"))
    kind = ds.task_kind
    in_dim = dim if kind in _CLASSIFICATION else 2 * dim
    out_dim = ds.n_classes if kind in _CLASSIFICATION else 1
    san = None
    if kind is TaskKind.PAIRWISE_CLASSIFICATION:
        in_dim = dim
        san = SanParams(
            Param(uniform_values((dim, 2 * dim), rng), "san_update"),
            Param(uniform_values((dim,), rng), "san_bias"),
            k=san_k,
        )
    if kind is TaskKind.SINGLE_CLASSIFICATION:
        in_dim = dim
    head = HeadParams(
        kind=kind,
        embedding=table,
        w_task=Param(uniform_values((out_dim, in_dim), rng), "w_task"),
        san=san,
        label_names=ds.label_names,
    )
    params = head.params()
    order_rng = rng.spawn(1)
    order = list(range(len(ds.examples)))
    reports = []
    for epoch in range(cfg.epochs):
        order_rng.shuffle(order)
        ep_loss = 0.0
        ep_metric = 0.0
        for at in range(0, len(order), cfg.batch_size):
            for i in order[at : at + cfg.batch_size]:
                loss, metric = example_loss_and_grad(head, ds.examples[i])
                ep_loss += loss
                ep_metric += metric
            clip_and_step(params, cfg)
        n = len(order)
        reports.append(TrainReport(epoch, ep_loss / n, _score_from(kind, ep_metric, n)))
    return head, reports


def save_head(head: HeadParams, path, provenance: dict | None = None) -> None:
    meta = {
        "kind": head.kind.value,
        "dim": head.embedding.dim,
        "label_names": list(head.label_names),
        "san_k": head.san.k if head.san else 0,
        "vocab": list(head.embedding.vocab.words),
        "provenance": provenance or {},
    }
    arrays = [
        ("embeddings", head.embedding.vectors.values),
        ("w_task", head.w_task.values),
    ]
    if head.san is not None:
        arrays.append(("san_update", head.san.state_update.values))
        arrays.append(("san_bias", head.san.state_bias.values))
    write_checkpoint(path, HEAD_MAGIC, meta, arrays)


def load_head(path) -> HeadParams:
    meta, arrays = read_checkpoint(path, HEAD_MAGIC)
    vocab = Vocabulary.from_words(meta["vocab"])
    kind = TaskKind(meta["kind"])
    table = EmbeddingTable(vocab, int(meta["dim"]), Param(arrays["embeddings"], "embeddings"))
    san = None
    if kind is TaskKind.PAIRWISE_CLASSIFICATION:
        san = SanParams(
            Param(arrays["san_update"], "san_update"),
            Param(arrays["san_bias"], "san_bias"),
            k=int(meta["san_k"]),
        )
    return HeadParams(
        kind=kind,
        embedding=table,
        w_task=Param(arrays["w_task"], "w_task"),
        san=san,
        label_names=tuple(meta["label_names"]),
    )
