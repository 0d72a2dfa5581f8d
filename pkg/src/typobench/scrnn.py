"""Semicharacter word recognition.

A word is encoded as three alphabet-sized subvectors: a one-hot of its
first character, a bag-of-counts over its interior characters, and a
one-hot of its last character.  The encoding is invariant to interior
order by construction, which is the whole trick: a jumbled word encodes
identically to its clean form, so an LSTM reading these vectors can map
scrambled text back onto a fixed vocabulary.

Training runs truncated BPTT over sentences with synthetic per-word noise;
correction runs the trained recognizer left to right over a sentence and
replaces each eligible word with the argmax vocabulary entry.
"""

from __future__ import annotations

import dataclasses
import string

import numpy as np

from ._kernels import ce_grad_over_seq, lstm_seq_backward_window, lstm_seq_forward
from .corpus import TextCorpus, Vocabulary, build_vocab
from .nncore import (
    LstmParams,
    LstmState,
    OptimConfig,
    Param,
    clip_and_step,
    uniform_values,
)
from .perturb import IneligibleError, KeyboardMap, NoiseKind, apply_noise
from .rng import SplitMix64
from .serialize import read_checkpoint, write_checkpoint

__all__ = [
    "ALPHABET_SYMBOLS",
    "Alphabet",
    "CorrectionRecord",
    "EpochMetrics",
    "MAGIC",
    "ScrnnModel",
    "SEMICHAR_DIM",
    "SemicharVector",
    "TrainConfig",
    "UnencodableError",
    "correct_sentence",
    "correct_sentences",
    "correctable",
    "desk_profile",
    "load_model",
    "predict_word",
    "save_model",
    "semichar_encode",
    "train",
]

# 24 punctuation characters, in ASCII order, completing the 76-char
# alphabet after A-Z and a-z.  The exact set is a portability contract:
# changing it changes every encoding.
ALPHABET_SYMBOLS = "!\"#$%&'()*+,-./:;<=>?@[]"

SEMICHAR_DIM = 228  # 3 subvectors x 76 characters

MAGIC = b"SCRNN"


class UnencodableError(ValueError):
    """The word contains a character outside the alphabet."""


class Alphabet:
    """Ordered 76-character inventory: uppercase, lowercase, symbols."""

    def __init__(self, chars: str):
        if len(chars) != len(set(chars)):
            raise ValueError("alphabet characters must be distinct")
        for ch in string.ascii_uppercase + string.ascii_lowercase:
            if ch not in chars:
                raise ValueError(f"alphabet must contain the letter {ch!r}")
        self.chars = chars
        self.index = {ch: i for i, ch in enumerate(chars)}

    def __len__(self) -> int:
        return len(self.chars)

    def __contains__(self, ch: str) -> bool:
        return ch in self.index

    def encodable(self, word: str) -> bool:
        return bool(word) and all(ch in self.index for ch in word)

    @classmethod
    def default(cls) -> "Alphabet":
        return _DEFAULT_ALPHABET


_DEFAULT_ALPHABET = Alphabet(
    string.ascii_uppercase + string.ascii_lowercase + ALPHABET_SYMBOLS
)


@dataclasses.dataclass(frozen=True)
class SemicharVector:
    """The 228-dim encoding, with views onto its three subvectors."""

    data: np.ndarray

    @property
    def begin(self) -> np.ndarray:
        return self.data[: len(self.data) // 3]

    @property
    def internal(self) -> np.ndarray:
        k = len(self.data) // 3
        return self.data[k : 2 * k]

    @property
    def end(self) -> np.ndarray:
        return self.data[2 * len(self.data) // 3 :]


def _encode_into(word: str, out: np.ndarray, index: dict, size: int) -> None:
    # Caller guarantees encodability; out is a zeroed row of length 3*size.
    out[index[word[0]]] = 1.0
    out[2 * size + index[word[-1]]] = 1.0
    for ch in word[1:-1]:
        out[size + index[ch]] += 1.0


def semichar_encode(word: str, alphabet: Alphabet | None = None) -> SemicharVector:
    """Encode one word; raises UnencodableError on out-of-alphabet chars."""
    alphabet = alphabet or Alphabet.default()
    if not word:
        raise UnencodableError("cannot encode an empty word")
    for ch in word:
        if ch not in alphabet:
            raise UnencodableError(f"character {ch!r} of {word!r} is not encodable")
    out = np.zeros(3 * len(alphabet))
    _encode_into(word, out, alphabet.index, len(alphabet))
    return SemicharVector(out)


def correctable(word: str, alphabet: Alphabet | None = None) -> bool:
    """Correction eligibility: length >= 4, no digits, fully encodable."""
    alphabet = alphabet or Alphabet.default()
    if len(word) < 4:
        return False
    if any(ch.isdigit() for ch in word):
        return False
    return alphabet.encodable(word)


@dataclasses.dataclass(frozen=True)
class TrainConfig:
    hidden_size: int = 650
    vocab_size: int = 10000
    epochs: int = 5
    batch_size: int = 20
    bptt_window: int = 3
    learning_rate: float = 0.5
    clip_norm: float = 1.0
    noise: tuple[NoiseKind, ...] = (NoiseKind.JUMBLE,)
    seed: int = 0

    def __post_init__(self):
        if self.bptt_window < 1:
            raise ValueError("bptt_window must be >= 1")
        for field in ("hidden_size", "vocab_size", "epochs", "batch_size"):
            if getattr(self, field) < 1:
                raise ValueError(f"{field} must be positive")
        if self.learning_rate <= 0 or self.clip_norm <= 0:
            raise ValueError("learning_rate and clip_norm must be positive")
        if not self.noise:
            raise ValueError("at least one noise kind is required")


def desk_profile(seed: int = 0, **overrides) -> TrainConfig:
    """Small configuration sized for minutes-scale CPU runs: hidden 128,
    vocabulary 2000, mixed attack-style training noise."""
    base = dict(
        hidden_size=128,
        vocab_size=2000,
        noise=(NoiseKind.SWAP, NoiseKind.INSERT, NoiseKind.DELETE, NoiseKind.JUMBLE),
        seed=seed,
    )
    base.update(overrides)
    return TrainConfig(**base)


@dataclasses.dataclass(frozen=True)
class EpochMetrics:
    epoch: int
    mean_loss: float
    recovery_pct: float  # argmax == clean target, over loss-bearing words
    n_words: int


@dataclasses.dataclass(frozen=True)
class CorrectionRecord:
    """One corrector decision worth auditing.

    flag is '' for an actual replacement, 'unknown' for an eligible word
    the model maps to the unknown marker (passed through), 'unencodable'
    for a length>=4 word outside the alphabet (passed through).
    """

    token_index: int
    before: str
    after: str
    flag: str = ""


class ScrnnModel:
    """Trained recognizer: alphabet, vocabulary, LSTM, output projection.

    The output layer is bias-free: logits are `out_proj @ hidden` only.
    """

    def __init__(
        self,
        alphabet: Alphabet,
        vocab: Vocabulary,
        lstm: LstmParams,
        out_proj: Param,
        hyper: TrainConfig,
    ):
        if out_proj.values.shape != (len(vocab), lstm.hidden_size):
            raise ValueError(
                f"out_proj shape {out_proj.values.shape} != ({len(vocab)}, {lstm.hidden_size})"
            )
        if lstm.input_dim != 3 * len(alphabet):
            raise ValueError("lstm input size must be 3 x alphabet size")
        self.alphabet = alphabet
        self.vocab = vocab
        self.lstm = lstm
        self.out_proj = out_proj
        self.hyper = hyper

    @property
    def hidden_size(self) -> int:
        return self.lstm.hidden_size

    def params(self) -> list[Param]:
        return [*self.lstm.all(), self.out_proj]

    def encode_or_zero(self, word: str) -> np.ndarray:
        size = len(self.alphabet)
        out = np.zeros(3 * size)
        if self.alphabet.encodable(word):
            _encode_into(word, out, self.alphabet.index, size)
        return out

    def step(self, x: np.ndarray, state: LstmState) -> LstmState:
        from .nncore import lstm_step

        new_state, _ = lstm_step(x, state, self.lstm)
        return new_state

    def logits(self, hidden: np.ndarray) -> np.ndarray:
        return self.out_proj.values @ hidden

    def zero_state(self) -> LstmState:
        return LstmState.zeros(self.hidden_size)


def predict_word(
    model: ScrnnModel, state: LstmState, word: str
) -> tuple[str, LstmState]:
    """One recognition step: encode, advance the LSTM, argmax the vocab.

    Returns the predicted vocabulary word (ties break to the lowest id),
    or the input unchanged when the argmax is the unknown marker.  The
    word must be encodable.
    """
    if not model.alphabet.encodable(word):
        raise UnencodableError(f"{word!r} is not encodable")
    vec = np.zeros(3 * len(model.alphabet))
    _encode_into(word, vec, model.alphabet.index, len(model.alphabet))
    new_state = model.step(vec, state)
    z = model.logits(new_state.hidden)
    pred = int(np.argmax(z))
    if pred == model.vocab.unk_id:
        return word, new_state
    return model.vocab.words[pred], new_state


def _recase(original: str, predicted: str) -> str:
    # Predictions are vocabulary (lowercase) forms; keep the input's
    # initial-capital pattern so clean text does not churn on case.
    if original[:1].isupper() and predicted:
        return predicted[0].upper() + predicted[1:]
    return predicted


def correct_sentences(model: ScrnnModel, sentences, chunk_size: int = 256):
    """Batched left-to-right correction of many sentences.

    Returns (corrected token lists, correction-record lists), exactly one
    of each per input sentence.  Every token advances the recurrent state:
    encodable words via their encoding, anything else via a zero vector.
    Only correctable words can be replaced.
    """
    sentences = [list(s) for s in sentences]
    out_tokens: list[list[str]] = []
    out_records: list[list[CorrectionRecord]] = []
    size = len(model.alphabet)
    Wp = model.out_proj.values
    unk = model.vocab.unk_id
    for start in range(0, len(sentences), chunk_size):
        batch = sentences[start : start + chunk_size]
        B = len(batch)
        T = max((len(s) for s in batch), default=0)
        if T == 0:
            out_tokens.extend([[] for _ in batch])
            out_records.extend([[] for _ in batch])
            continue
        X = np.zeros((T, B, 3 * size))
        spots: list[tuple[int, int]] = []  # (t, b) of correctable words
        for b, sent in enumerate(batch):
            for t, w in enumerate(sent):
                if model.alphabet.encodable(w):
                    _encode_into(w, X[t, b], model.alphabet.index, size)
                if correctable(w, model.alphabet):
                    spots.append((t, b))
        Hs, _, _ = lstm_seq_forward(
            X, model.lstm.Wx.values, model.lstm.Wh.values, model.lstm.b.values
        )
        preds: dict[tuple[int, int], int] = {}
        if spots:
            st = np.array([t for t, _ in spots])
            sb = np.array([b for _, b in spots])
            logits = Hs[st + 1, sb] @ Wp.T
            for (t, b), pid in zip(spots, np.argmax(logits, axis=1)):
                preds[(t, b)] = int(pid)
        for b, sent in enumerate(batch):
            toks: list[str] = []
            recs: list[CorrectionRecord] = []
            for t, w in enumerate(sent):
                if (t, b) in preds:
                    pid = preds[(t, b)]
                    if pid == unk:
                        toks.append(w)
                        recs.append(CorrectionRecord(t, w, w, flag="unknown"))
                    else:
                        fixed = _recase(w, model.vocab.words[pid])
                        toks.append(fixed)
                        if fixed != w:
                            recs.append(CorrectionRecord(t, w, fixed))
                else:
                    toks.append(w)
                    if len(w) >= 4 and not model.alphabet.encodable(w):
                        recs.append(CorrectionRecord(t, w, w, flag="unencodable"))
            out_tokens.append(toks)
            out_records.append(recs)
    return out_tokens, out_records


def correct_sentence(model: ScrnnModel, sentence):
    """Single-sentence wrapper over the batched corrector."""
    toks, recs = correct_sentences(model, [list(sentence)])
    return toks[0], recs[0]


def noisify_sentence(
    tokens,
    noise: tuple[NoiseKind, ...],
    rng: SplitMix64,
    kb: KeyboardMap | None = None,
    alphabet: Alphabet | None = None,
) -> list[str]:
    """Per-word noising policy shared by training and recovery evaluation.

    Every correctable word draws one kind uniformly from `noise` and gets a
    single application of it; words the drawn kind cannot touch stay clean,
    as do non-correctable tokens.  One word consumes rng draws only when it
    is correctable, so streams line up across callers.
    """
    alphabet = alphabet or Alphabet.default()
    out = []
    for w in tokens:
        noisy = w
        if correctable(w, alphabet):
            kind = noise[rng.randbelow(len(noise))]
            try:
                noisy, _ = apply_noise(w, kind, rng, kb)
            except IneligibleError:
                noisy = w
        out.append(noisy)
    return out


def _assemble_batch(
    sentences,
    vocab: Vocabulary,
    alphabet: Alphabet,
    noise: tuple[NoiseKind, ...],
    noise_rng: SplitMix64,
    kb: KeyboardMap | None,
):
    """Noisify and encode one batch.  Eligible words receive one noise kind
    drawn uniformly from `noise` (kept clean when that kind cannot apply);
    targets are always the clean word's vocabulary id.  Unencodable words
    contribute a zero input vector and no loss."""
    size = len(alphabet)
    B = len(sentences)
    T = max(len(s) for s in sentences)
    X = np.zeros((T, B, 3 * size))
    targets = np.full((T, B), -1, dtype=np.int64)
    for b, sent in enumerate(sentences):
        noisy_sent = noisify_sentence(sent, noise, noise_rng, kb, alphabet)
        for t, (w, noisy) in enumerate(zip(sent, noisy_sent)):
            if not alphabet.encodable(w):
                continue
            _encode_into(noisy, X[t, b], alphabet.index, size)
            targets[t, b] = vocab.id(w)
    return X, targets


def train(
    corpus: TextCorpus, cfg: TrainConfig, seed: int | None = None
) -> tuple[ScrnnModel, list[EpochMetrics]]:
    """Train a recognizer on a clean corpus with synthetic noise.

    The vocabulary comes from the clean corpus; each epoch re-noisifies
    every eligible word.  Forward state spans whole sentences; gradients
    truncate at cfg.bptt_window words.  Deterministic per seed.
    """
    if not corpus.sentences:
        raise ValueError("cannot train on an empty corpus")
    if seed is None:
        seed = cfg.seed
    alphabet = Alphabet.default()
    vocab = build_vocab(corpus, cfg.vocab_size)
    rng = SplitMix64(seed)
    lstm = LstmParams(3 * len(alphabet), cfg.hidden_size, rng)
    out_proj = Param(
        uniform_values((len(vocab), cfg.hidden_size), rng), "out_proj"
    )
    order_rng = rng.spawn(1)
    noise_rng = rng.spawn(2)
    kb = KeyboardMap.default() if NoiseKind.KEYBOARD in cfg.noise else None
    model = ScrnnModel(alphabet, vocab, lstm, out_proj, cfg)
    opt = OptimConfig(
        learning_rate=cfg.learning_rate,
        clip_norm=cfg.clip_norm,
        epochs=cfg.epochs,
        batch_size=cfg.batch_size,
    )
    params = model.params()
    order = list(range(len(corpus.sentences)))
    metrics: list[EpochMetrics] = []
    for epoch in range(cfg.epochs):
        order_rng.shuffle(order)
        ep_loss = 0.0
        ep_words = 0
        ep_correct = 0
        for at in range(0, len(order), cfg.batch_size):
            batch = [corpus.sentences[i] for i in order[at : at + cfg.batch_size]]
            X, targets = _assemble_batch(
                batch, vocab, alphabet, cfg.noise, noise_rng, kb
            )
            Hs, Cs, G = lstm_seq_forward(
                X, lstm.Wx.values, lstm.Wh.values, lstm.b.values
            )
            loss, n, correct, dH, dWp = ce_grad_over_seq(
                Hs, out_proj.values, targets
            )
            if n == 0:
                continue
            gWx, gWh, gb = lstm_seq_backward_window(
                X, Hs, Cs, G, lstm.Wh.values, dH, cfg.bptt_window
            )
            lstm.Wx.grad += gWx
            lstm.Wh.grad += gWh
            lstm.b.grad += gb
            out_proj.grad += dWp
            clip_and_step(params, opt)
            ep_loss += loss
            ep_words += n
            ep_correct += correct
        metrics.append(
            EpochMetrics(
                epoch=epoch,
                mean_loss=ep_loss / max(ep_words, 1),
                recovery_pct=100.0 * ep_correct / max(ep_words, 1),
                n_words=ep_words,
            )
        )
    return model, metrics


def save_model(model: ScrnnModel, path, provenance: dict | None = None) -> None:
    """Checkpoint layout: metadata (alphabet, vocab, hyper, provenance)
    then arrays lstm.Wx, lstm.Wh, lstm.b, out_proj in that order."""
    hyper = dataclasses.asdict(model.hyper)
    hyper["noise"] = [k.value for k in model.hyper.noise]
    meta = {
        "kind": "scrnn",
        "alphabet": model.alphabet.chars,
        "vocab": list(model.vocab.words),
        "hyper": hyper,
        "provenance": provenance or {},
    }
    write_checkpoint(
        path,
        MAGIC,
        meta,
        [
            ("lstm.Wx", model.lstm.Wx.values),
            ("lstm.Wh", model.lstm.Wh.values),
            ("lstm.b", model.lstm.b.values),
            ("out_proj", model.out_proj.values),
        ],
    )


def load_model(path) -> ScrnnModel:
    meta, arrays = read_checkpoint(path, MAGIC)
    hyper = dict(meta["hyper"])
    hyper["noise"] = tuple(NoiseKind(k) for k in hyper["noise"])
    cfg = TrainConfig(**hyper)
    alphabet = Alphabet(meta["alphabet"])
    vocab = Vocabulary.from_words(meta["vocab"])
    lstm = LstmParams.from_arrays(arrays["lstm.Wx"], arrays["lstm.Wh"], arrays["lstm.b"])
    out_proj = Param(arrays["out_proj"], "out_proj")
    return ScrnnModel(alphabet, vocab, lstm, out_proj, cfg)
