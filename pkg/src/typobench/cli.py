"""Command-line entry point wiring all modules together.

Subcommands: build-vocab, attack, train-scrnn, correct, train-task,
evaluate.  Exit codes: 0 success, 1 usage error, 2 data/format error,
3 runtime failure.  Diagnostics go to stderr; data goes to files.

Every text artifact starts with '#' header comments recording the tool
version, subcommand, seed, and sha256 digests of all input files; binary
checkpoints carry the same fields in their embedded provenance metadata.
No timestamps anywhere: identical command lines on identical inputs must
produce byte-identical outputs.

An optional `--config FILE` supplies defaults in `key = value` form (keys
mirror the long flag names); explicit flags take precedence.
"""

from __future__ import annotations

import argparse
import hashlib
import os
import sys

from . import __version__
from .corpus import (
    DataFormatError,
    TaskKind,
    TextCorpus,
    build_vocab,
    dump_pair_rows,
    dump_text_corpus,
    load_pair_rows,
    load_text_corpus,
    type_pair_rows,
)
from .nncore import OptimConfig
from .perturb import NoiseKind, attack_dataset

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_RUNTIME = 3

_NOISE_NAMES = tuple(k.value for k in NoiseKind)
_TASK_NAMES = tuple(k.value for k in TaskKind)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems via exception instead of exiting,
    so dispatch() owns the exit-code contract."""

    def error(self, message):
        raise UsageError(f"{message}\n{self.format_usage()}".rstrip())


# ---------------------------------------------------------------------------
# Provenance headers.


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _header(subcommand: str, seed: int, inputs) -> str:
    lines = [
        f"# typobench {__version__}",
        f"# subcommand: {subcommand}",
        f"# seed: {seed}",
    ]
    for path in inputs:
        lines.append(f"# input: {path} sha256 {_sha256(path)}")
    return "".join(line + "\n" for line in lines)


def _provenance(subcommand: str, seed: int, inputs) -> dict:
    return {
        "tool": f"typobench {__version__}",
        "subcommand": subcommand,
        "seed": seed,
        "inputs": {str(p): _sha256(p) for p in inputs},
    }


def _write_text(path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _check_inputs(paths) -> None:
    for p in paths:
        if p is not None and not os.path.exists(p):
            raise DataFormatError(f"input file not found: {p}")


# ---------------------------------------------------------------------------
# Config file.


def _read_config(path) -> list[str]:
    """Translate `key = value` lines into a flag list to prepend before the
    user's own flags (so the command line wins on conflicts)."""
    flags: list[str] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected `key = value`, got {line!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            if not key:
                raise UsageError(f"{path}:{lineno}: empty key")
            if value.lower() in ("true", "yes", "on"):
                flags.append(f"--{key}")
            elif value.lower() in ("false", "no", "off"):
                pass
            else:
                flags.extend([f"--{key}", value])
    return flags


def _extract_config(argv: list[str]) -> tuple[list[str], str | None]:
    """Pull --config out of argv before normal parsing."""
    out = []
    config = None
    i = 0
    while i < len(argv):
        arg = argv[i]
        if arg == "--config":
            if i + 1 >= len(argv):
                raise UsageError("--config needs a file path")
            config = argv[i + 1]
            i += 2
        elif arg.startswith("--config="):
            config = arg.split("=", 1)[1]
            i += 1
        else:
            out.append(arg)
            i += 1
    return out, config


# ---------------------------------------------------------------------------
# Argument grammar.


def _build_parser() -> _Parser:
    p = _Parser(
        prog="typobench",
        description="Typo attacks, a recurrent word-recognizer defense, and "
        "robustness scoring for toy text tasks.",
    )
    p.add_argument("--version", action="version", version=f"typobench {__version__}")
    sub = p.add_subparsers(dest="subcommand", metavar="SUBCOMMAND")

    def common(sp):
        sp.add_argument("--seed", type=int, default=0,
                        help="master seed; all randomness derives from it")

    sp = sub.add_parser("build-vocab", parents=[], help="rank a corpus vocabulary")
    sp.add_argument("--corpus", help="plain-text corpus, one sentence per line")
    sp.add_argument("--out", help="output word list")
    sp.add_argument("--max-size", type=int, default=10000)
    common(sp)

    sp = sub.add_parser("attack", help="apply character attacks to a pair dataset")
    sp.add_argument("--in", dest="infile", help="pair TSV")
    sp.add_argument("--out", help="attacked pair TSV")
    sp.add_argument("--n", type=int, default=1, help="attacks per example")
    sp.add_argument("--kind", choices=_NOISE_NAMES, default="swap")
    sp.add_argument("--log", help="optional per-attack audit TSV")
    common(sp)

    sp = sub.add_parser("train-scrnn", help="train the word recognizer")
    sp.add_argument("--corpus", help="plain-text training corpus")
    sp.add_argument("--out", help="model checkpoint")
    sp.add_argument("--desk", action="store_true",
                    help="desk-scale profile (hidden 128, vocab 2000, mixed noise)")
    sp.add_argument("--hidden", type=int, help="LSTM width")
    sp.add_argument("--vocab", type=int, help="vocabulary size cap")
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--batch", type=int, help="batch size")
    sp.add_argument("--bptt", type=int, help="truncated-backprop window")
    sp.add_argument("--lr", type=float)
    sp.add_argument("--clip", type=float, help="gradient clip norm")
    sp.add_argument("--noise", help="comma list of training noise kinds")
    common(sp)

    sp = sub.add_parser("correct", help="repair a noisy corpus with a trained recognizer")
    sp.add_argument("--model", help="recognizer checkpoint")
    sp.add_argument("--in", dest="infile",
                    help="noisy text corpus or pair TSV (detected by column shape)")
    sp.add_argument("--out", help="corrected file, same format as the input")
    sp.add_argument("--flags", help="optional per-token decision TSV")
    common(sp)

    sp = sub.add_parser("train-task", help="train a downstream task head")
    sp.add_argument("--data", help="pair TSV")
    sp.add_argument("--kind", choices=_TASK_NAMES)
    sp.add_argument("--dim", type=int, default=64)
    sp.add_argument("--epochs", type=int, default=5)
    sp.add_argument("--batch", type=int, default=20)
    sp.add_argument("--lr", type=float, default=0.5)
    sp.add_argument("--san-k", type=int, default=5)
    sp.add_argument("--out", help="head checkpoint")
    common(sp)

    sp = sub.add_parser("evaluate", help="clean/attacked/defended robustness grid")
    sp.add_argument("--head", help="task-head checkpoint")
    sp.add_argument("--scrnn", help="recognizer checkpoint")
    sp.add_argument("--data", help="clean evaluation pair TSV")
    sp.add_argument("--attacks", default="0,1,2", help="comma list of attack counts")
    sp.add_argument("--kind", choices=_NOISE_NAMES, default="swap")
    sp.add_argument("--report", help="report file")
    sp.add_argument("--format", choices=("tsv", "table"), default="tsv",
                    help="report file format")
    sp.add_argument("--errors", help="optional defended-failure dump TSV")
    sp.add_argument("--dataset-label", help="dataset name in the report "
                    "(default: the --data filename)")
    common(sp)

    return p


def _require(args, names) -> None:
    missing = [f"--{n.replace('_', '-')}" for n in names if getattr(args, n) in (None, "")]
    if missing:
        # --in is exposed as dest 'infile'
        missing = ["--in" if m == "--infile" else m for m in missing]
        raise UsageError("missing required flags: " + " ".join(missing))


# ---------------------------------------------------------------------------
# Subcommand bodies.


def _cmd_build_vocab(args) -> int:
    _require(args, ("corpus", "out"))
    _check_inputs([args.corpus])
    corpus = load_text_corpus(args.corpus)
    vocab = build_vocab(corpus, args.max_size)
    body = "".join(w + "\n" for w in vocab.words)
    _write_text(args.out, _header("build-vocab", args.seed, [args.corpus]) + body)
    print(f"wrote {len(vocab.words)} words to {args.out}", file=sys.stderr)
    return EXIT_OK


def _cmd_attack(args) -> int:
    _require(args, ("infile", "out"))
    _check_inputs([args.infile])
    rows = load_pair_rows(args.infile)
    attacked, log = attack_dataset(rows, n_attacks=args.n, kind=NoiseKind(args.kind),
                                   seed=args.seed)
    header = _header("attack", args.seed, [args.infile])
    _write_text(args.out, header + dump_pair_rows(attacked))
    if args.log:
        log_lines = "# example_id\ttoken_index\tchar_position\tkind\tbefore\tafter\n"
        log_lines += "".join(line + "\n" for line in log.tsv_lines())
        _write_text(args.log, header + log_lines)
    n_exhausted = len(log.exhausted)
    print(
        f"attacked {len(attacked)} examples ({args.n} x {args.kind}, "
        f"{n_exhausted} exhausted) -> {args.out}",
        file=sys.stderr,
    )
    return EXIT_OK


def _cmd_train_scrnn(args) -> int:
    from . import scrnn

    _require(args, ("corpus", "out"))
    _check_inputs([args.corpus])
    overrides = {}
    for dest, field in (("hidden", "hidden_size"), ("vocab", "vocab_size"),
                        ("epochs", "epochs"), ("batch", "batch_size"),
                        ("bptt", "bptt_window"), ("lr", "learning_rate"),
                        ("clip", "clip_norm")):
        value = getattr(args, dest)
        if value is not None:
            overrides[field] = value
    if args.noise:
        try:
            overrides["noise"] = tuple(
                NoiseKind(name.strip()) for name in args.noise.split(",") if name.strip()
            )
        except ValueError:
            raise UsageError(f"unknown noise kind in --noise {args.noise!r}")
    if args.desk:
        cfg = scrnn.desk_profile(seed=args.seed, **overrides)
    else:
        cfg = scrnn.TrainConfig(seed=args.seed, **overrides)
    corpus = load_text_corpus(args.corpus)
    model, metrics = scrnn.train(corpus, cfg)
    for m in metrics:
        print(
            f"epoch {m.epoch}: loss {m.mean_loss:.4f}, "
            f"train recovery {m.recovery_pct:.2f}% over {m.n_words} words",
            file=sys.stderr,
        )
    scrnn.save_model(model, args.out,
                     _provenance("train-scrnn", args.seed, [args.corpus]))
    print(f"saved recognizer to {args.out}", file=sys.stderr)
    return EXIT_OK


def _cmd_correct(args) -> int:
    """Repair --in with the recognizer.  Pair TSVs (>= 2 tab columns per
    line) keep their labels; anything else is treated as one sentence per
    line.  --flags dumps every corrector decision."""
    import dataclasses as _dc

    from . import scrnn

    _require(args, ("model", "infile", "out"))
    _check_inputs([args.model, args.infile])
    model = scrnn.load_model(args.model)
    header = _header("correct", args.seed, [args.model, args.infile])
    try:
        rows = load_pair_rows(args.infile)
    except DataFormatError:
        rows = None
    flag_lines = ["# sentence\tfield\ttoken_index\tbefore\tafter\tflag"]
    n_changed = 0
    if rows is None:
        corpus = load_text_corpus(args.infile)
        fixed, records = scrnn.correct_sentences(model, corpus.sentences)
        body = dump_text_corpus(TextCorpus(fixed, source=args.infile))
        n_sent = len(fixed)
        for si, recs in enumerate(records):
            for r in recs:
                flag_lines.append(f"{si}\t-\t{r.token_index}\t{r.before}\t{r.after}\t{r.flag}")
                n_changed += not r.flag
    else:
        sents, keys = [], []
        for i, ex in enumerate(rows):
            for key, toks in (("a", ex.sentence_a), ("b", ex.sentence_b)):
                if toks:
                    sents.append(list(toks))
                    keys.append((i, key))
            for ci, cand in enumerate(ex.candidates or ()):
                sents.append(list(cand))
                keys.append((i, f"cand{ci}"))
        fixed, records = scrnn.correct_sentences(model, sents)
        out_rows = [_dc.replace(ex) for ex in rows]
        for (i, key), toks, recs in zip(keys, fixed, records):
            if key == "a":
                out_rows[i] = _dc.replace(out_rows[i], sentence_a=toks)
            elif key == "b":
                out_rows[i] = _dc.replace(out_rows[i], sentence_b=toks)
            else:
                cands = [list(c) for c in out_rows[i].candidates]
                cands[int(key[4:])] = toks
                out_rows[i] = _dc.replace(out_rows[i], candidates=cands)
            for r in recs:
                flag_lines.append(f"{i}\t{key}\t{r.token_index}\t{r.before}\t{r.after}\t{r.flag}")
                n_changed += not r.flag
        body = dump_pair_rows(out_rows)
        n_sent = len(sents)
    _write_text(args.out, header + body)
    if args.flags:
        _write_text(args.flags, header + "".join(line + "\n" for line in flag_lines))
    print(f"corrected {n_changed} words over {n_sent} sentences -> {args.out}",
          file=sys.stderr)
    return EXIT_OK


def _cmd_train_task(args) -> int:
    from . import taskheads

    _require(args, ("data", "kind", "out"))
    _check_inputs([args.data])
    dataset = type_pair_rows(load_pair_rows(args.data), TaskKind(args.kind),
                             origin=args.data)
    cfg = OptimConfig(learning_rate=args.lr, epochs=args.epochs,
                      batch_size=args.batch)
    head, reports = taskheads.train_head(dataset, cfg=cfg, seed=args.seed,
                                         dim=args.dim, san_k=args.san_k)
    for r in reports:
        print(f"epoch {r.epoch}: loss {r.mean_loss:.4f}, train score {r.score:.2f}",
              file=sys.stderr)
    taskheads.save_head(head, args.out,
                        _provenance("train-task", args.seed, [args.data]))
    print(f"saved {args.kind} head to {args.out}", file=sys.stderr)
    return EXIT_OK


def emit_report(matrix, format: str = "tsv") -> str:
    """Render a robustness matrix (cells plus drop/restoration deltas)."""
    from . import robustbench

    if format == "tsv":
        return robustbench.render_tsv(matrix)
    if format == "table":
        return robustbench.render_table(matrix)
    raise ValueError(f"unknown report format {format!r}")


def _cmd_evaluate(args) -> int:
    from . import robustbench, scrnn, taskheads

    _require(args, ("head", "scrnn", "data"))
    _check_inputs([args.head, args.scrnn, args.data])
    try:
        counts = tuple(sorted({int(tok) for tok in args.attacks.split(",") if tok.strip()}))
    except ValueError:
        raise UsageError(f"--attacks must be a comma list of counts, got {args.attacks!r}")
    if not counts or min(counts) < 0:
        raise UsageError(f"--attacks must name non-negative counts, got {args.attacks!r}")
    head = taskheads.load_head(args.head)
    model = scrnn.load_model(args.scrnn)
    if args.errors and head.kind is TaskKind.SIMILARITY:
        raise UsageError("--errors needs a discrete prediction; similarity has none")
    dataset = type_pair_rows(load_pair_rows(args.data), head.kind, origin=args.data)
    label = args.dataset_label or os.path.splitext(os.path.basename(args.data))[0]
    matrix = robustbench.run_matrix(
        head, dataset, NoiseKind(args.kind), seed=args.seed, corrector=model,
        attack_counts=counts, dataset_label=label,
    )
    header = _header("evaluate", args.seed, [args.head, args.scrnn, args.data])
    if args.report:
        _write_text(args.report, header + emit_report(matrix, args.format))
    if args.errors:
        n_top = max(counts)
        if n_top == 0:
            raise UsageError("--errors needs at least one attack count > 0")
        attacked, _ = attack_dataset(
            dataset.examples, n_attacks=n_top, kind=NoiseKind(args.kind),
            seed=robustbench._derive_attack_seed(args.seed, n_top),
        )
        cases = robustbench.error_analysis(head, dataset.examples, attacked, model)
        _write_text(args.errors, header + robustbench.render_error_cases(cases))
        print(f"{len(cases)} defended failures -> {args.errors}", file=sys.stderr)
    sys.stdout.write(emit_report(matrix, "table"))
    return EXIT_OK


_COMMANDS = {
    "build-vocab": _cmd_build_vocab,
    "attack": _cmd_attack,
    "train-scrnn": _cmd_train_scrnn,
    "correct": _cmd_correct,
    "train-task": _cmd_train_task,
    "evaluate": _cmd_evaluate,
}


def dispatch(argv) -> int:
    """Route a full argument list and translate failures to exit codes."""
    parser = _build_parser()
    try:
        argv, config_path = _extract_config(list(argv))
        if config_path is not None:
            _check_inputs([config_path])
            config_flags = _read_config(config_path)
        else:
            config_flags = []
        if config_flags:
            if not argv or argv[0] not in _COMMANDS:
                raise UsageError("--config requires a subcommand")
            argv = [argv[0]] + config_flags + argv[1:]
        args = parser.parse_args(argv)
        if args.subcommand is None:
            raise UsageError(parser.format_usage().rstrip())
        return _COMMANDS[args.subcommand](args)
    except UsageError as err:
        print(f"typobench: {err}", file=sys.stderr)
        return EXIT_USAGE
    except DataFormatError as err:
        print(f"typobench: {err}", file=sys.stderr)
        return EXIT_DATA
    except FileNotFoundError as err:
        print(f"typobench: input file not found: {err.filename or err}", file=sys.stderr)
        return EXIT_DATA
    except Exception as err:
        print(f"typobench: {type(err).__name__}: {err}", file=sys.stderr)
        return EXIT_RUNTIME


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
