"""Command-line interface tests: the six subcommands end to end on tiny
inputs, exit-code discipline, provenance headers, and config files."""

import shutil
import subprocess
from types import SimpleNamespace

import pytest

from typobench import __version__
from typobench.cli import UsageError, dispatch, emit_report
from typobench.corpus import (
    TaskKind,
    load_pair_dataset,
    load_pair_rows,
    load_text_corpus,
)
from typobench.datagen import main as datagen_main
from typobench.perturb import NoiseKind
from typobench.robustbench import ARCH_DEFENDED, ARCH_TASK_ONLY, EvalCell, RobustnessMatrix, parse_tsv
from typobench.robustbench import render_table, render_tsv
from typobench.scrnn import MAGIC as SCRNN_MAGIC
from typobench.scrnn import load_model
from typobench.serialize import read_checkpoint
from typobench.taskheads import load_head


@pytest.fixture(scope="module")
def ws(tmp_path_factory):
    """One shared workspace: synthetic data plus trained tiny checkpoints."""
    root = tmp_path_factory.mktemp("cli")
    corpus = root / "corpus.txt"
    nli = root / "nli.tsv"
    assert datagen_main(
        ["corpus", "--sentences", "200", "--seed", "5", "--out", str(corpus)]
    ) == 0
    assert datagen_main(["nli", "--pairs", "40", "--seed", "6", "--out", str(nli)]) == 0

    scrnn = root / "scrnn.ckpt"
    assert dispatch([
        "train-scrnn", "--corpus", str(corpus), "--hidden", "32", "--vocab", "300",
        "--epochs", "1", "--batch", "20", "--noise", "jumble", "--seed", "1",
        "--out", str(scrnn),
    ]) == 0
    head = root / "head.ckpt"
    assert dispatch([
        "train-task", "--data", str(nli), "--kind", "nli", "--dim", "8",
        "--epochs", "2", "--batch", "10", "--lr", "0.5", "--seed", "3",
        "--out", str(head),
    ]) == 0
    return SimpleNamespace(root=root, corpus=corpus, nli=nli, scrnn=scrnn, head=head)


# ---------------------------------------------------------------- vocab


def test_build_vocab_writes_ranked_list(ws, tmp_path):
    out = tmp_path / "vocab.txt"
    assert dispatch([
        "build-vocab", "--corpus", str(ws.corpus), "--max-size", "300",
        "--out", str(out),
    ]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == f"# typobench {__version__}"
    assert lines[1] == "# subcommand: build-vocab"
    assert lines[2] == "# seed: 0"
    assert lines[3].startswith(f"# input: {ws.corpus} sha256 ")
    words = [l for l in lines if not l.startswith("#")]
    assert words[0] == "<unk>"
    assert len(words) <= 300
    assert len(set(words)) == len(words)


# ---------------------------------------------------------------- attack


def test_attack_is_byte_reproducible(ws, tmp_path):
    args = ["attack", "--in", str(ws.nli), "--n", "1", "--kind", "swap", "--seed", "7"]
    out1, log1 = tmp_path / "a1.tsv", tmp_path / "l1.tsv"
    out2, log2 = tmp_path / "a2.tsv", tmp_path / "l2.tsv"
    assert dispatch(args + ["--out", str(out1), "--log", str(log1)]) == 0
    assert dispatch(args + ["--out", str(out2), "--log", str(log2)]) == 0
    assert out1.read_bytes() == out2.read_bytes()
    assert log1.read_bytes() == log2.read_bytes()
    assert "# seed: 7" in out1.read_text()


def test_attack_output_stays_loadable_and_labeled(ws, tmp_path):
    out = tmp_path / "att.tsv"
    assert dispatch([
        "attack", "--in", str(ws.nli), "--out", str(out), "--n", "2",
        "--kind", "delete", "--seed", "11",
    ]) == 0
    clean = load_pair_dataset(ws.nli, TaskKind.PAIRWISE_CLASSIFICATION)
    attacked = load_pair_dataset(out, TaskKind.PAIRWISE_CLASSIFICATION)
    assert len(attacked.examples) == len(clean.examples)
    changed = 0
    for c, a in zip(clean.examples, attacked.examples):
        assert a.label_text == c.label_text
        assert len(a.sentence_a) == len(c.sentence_a)
        changed += a.sentence_a != c.sentence_a or a.sentence_b != c.sentence_b
    assert changed > 0


def test_attack_zero_is_identity(ws, tmp_path):
    out = tmp_path / "id.tsv"
    assert dispatch([
        "attack", "--in", str(ws.nli), "--out", str(out), "--n", "0", "--seed", "1",
    ]) == 0
    clean = load_pair_rows(ws.nli)
    assert load_pair_rows(out) == clean


# ---------------------------------------------------------------- training


def test_train_scrnn_checkpoint_carries_provenance(ws):
    model = load_model(ws.scrnn)
    assert model.hyper.hidden_size == 32
    assert model.hyper.vocab_size == 300
    assert model.hyper.noise == (NoiseKind.JUMBLE,)
    meta, _ = read_checkpoint(ws.scrnn, SCRNN_MAGIC)
    prov = meta["provenance"]
    assert prov["subcommand"] == "train-scrnn"
    assert prov["seed"] == 1
    assert str(ws.corpus) in prov["inputs"]


def test_train_task_checkpoint(ws):
    head = load_head(ws.head)
    assert head.kind is TaskKind.PAIRWISE_CLASSIFICATION
    assert head.label_names == ("contradiction", "entailment", "neutral")
    assert head.embedding.dim == 8
    meta, _ = read_checkpoint(ws.head, b"TASKH")
    assert meta["provenance"]["subcommand"] == "train-task"


# ---------------------------------------------------------------- correct


def test_correct_pair_tsv_roundtrip(ws, tmp_path):
    att = tmp_path / "att.tsv"
    assert dispatch([
        "attack", "--in", str(ws.nli), "--out", str(att), "--n", "1", "--seed", "2",
    ]) == 0
    out = tmp_path / "corr.tsv"
    flags = tmp_path / "flags.tsv"
    assert dispatch([
        "correct", "--model", str(ws.scrnn), "--in", str(att),
        "--out", str(out), "--flags", str(flags),
    ]) == 0
    fixed = load_pair_rows(out)
    assert len(fixed) == 40
    for orig, fix in zip(load_pair_rows(att), fixed):
        assert fix.label_text == orig.label_text
        assert len(fix.sentence_a) == len(orig.sentence_a)
    flag_lines = flags.read_text().splitlines()
    assert "# sentence\tfield\ttoken_index\tbefore\tafter\tflag" in flag_lines
    data = [l for l in flag_lines if not l.startswith("#")]
    assert all(len(l.split("\t")) == 6 for l in data)
    assert all(l.split("\t")[1] in ("a", "b") for l in data)


def test_correct_plain_text_mode(ws, tmp_path):
    out = tmp_path / "corr.txt"
    assert dispatch([
        "correct", "--model", str(ws.scrnn), "--in", str(ws.corpus), "--out", str(out),
    ]) == 0
    fixed = load_text_corpus(out)
    clean = load_text_corpus(ws.corpus)
    assert len(fixed.sentences) == len(clean.sentences)
    for f, c in zip(fixed.sentences, clean.sentences):
        assert len(f) == len(c)


# ---------------------------------------------------------------- evaluate


def test_evaluate_writes_report_table_and_errors(ws, tmp_path, capsys):
    report = tmp_path / "report.tsv"
    errors = tmp_path / "errors.tsv"
    argv = [
        "evaluate", "--head", str(ws.head), "--scrnn", str(ws.scrnn),
        "--data", str(ws.nli), "--attacks", "0,1", "--kind", "swap",
        "--seed", "7", "--report", str(report), "--errors", str(errors),
    ]
    assert dispatch(argv) == 0
    stdout = capsys.readouterr().out
    assert ARCH_TASK_ONLY in stdout
    assert ARCH_DEFENDED in stdout
    assert "drop(1)=" in stdout

    matrix = parse_tsv(report.read_text())
    assert matrix.datasets() == ("nli",)  # label defaults to the data stem
    assert matrix.attack_counts("nli") == (0, 1)
    assert matrix.seed == 7
    assert errors.read_text().startswith(f"# typobench {__version__}")
    assert "# gold\tpredicted" in errors.read_text()

    report2 = tmp_path / "report2.tsv"
    assert dispatch(argv[:-4] + ["--report", str(report2)]) == 0
    assert report.read_bytes() == report2.read_bytes()


def test_evaluate_respects_dataset_label(ws, tmp_path, capsys):
    report = tmp_path / "r.tsv"
    assert dispatch([
        "evaluate", "--head", str(ws.head), "--scrnn", str(ws.scrnn),
        "--data", str(ws.nli), "--attacks", "0", "--report", str(report),
        "--dataset-label", "probe",
    ]) == 0
    capsys.readouterr()
    assert parse_tsv(report.read_text()).datasets() == ("probe",)


def test_evaluate_rejects_bad_attack_lists(ws, capsys):
    base = [
        "evaluate", "--head", str(ws.head), "--scrnn", str(ws.scrnn),
        "--data", str(ws.nli),
    ]
    assert dispatch(base + ["--attacks", "a,b"]) == 1
    assert dispatch(base + ["--attacks", "-1,2"]) == 1
    assert dispatch(base + ["--attacks", ""]) == 1
    assert dispatch(base + ["--attacks", "0", "--errors", "x.tsv"]) == 1
    capsys.readouterr()


# ---------------------------------------------------------------- exit codes


def test_usage_errors_exit_1(ws, capsys):
    assert dispatch([]) == 1
    assert dispatch(["frobnicate"]) == 1
    assert dispatch(["attack"]) == 1  # missing --in/--out
    assert dispatch(["attack", "--in", str(ws.nli), "--out", "x", "--kind", "bogus"]) == 1
    assert dispatch(["--config"]) == 1  # dangling value
    err = capsys.readouterr().err
    assert "missing required flags" in err


def test_data_errors_exit_2(ws, tmp_path, capsys):
    missing = tmp_path / "nope.tsv"
    assert dispatch(["attack", "--in", str(missing), "--out", "x"]) == 2
    bad = tmp_path / "bad.tsv"
    bad.write_text("onlyonecolumn\n")
    assert dispatch(["attack", "--in", str(bad), "--out", str(tmp_path / "o.tsv")]) == 2
    err = capsys.readouterr().err
    assert "not found" in err


def test_runtime_errors_exit_3(ws, tmp_path, capsys):
    assert dispatch([
        "train-scrnn", "--corpus", str(ws.corpus), "--hidden", "8",
        "--vocab", "50", "--epochs", "0", "--out", str(tmp_path / "m.ckpt"),
    ]) == 3
    err = capsys.readouterr().err
    assert "ValueError" in err


# ---------------------------------------------------------------- config


def test_config_supplies_defaults_and_flags_win(ws, tmp_path):
    cfg = tmp_path / "atk.cfg"
    cfg.write_text("# attack settings\nseed = 9\nkind = delete\n")
    out = tmp_path / "c1.tsv"
    assert dispatch([
        "attack", "--config", str(cfg), "--in", str(ws.nli), "--out", str(out),
    ]) == 0
    assert "# seed: 9" in out.read_text()
    # a real command-line flag beats the config value
    out2 = tmp_path / "c2.tsv"
    assert dispatch([
        "attack", "--config", str(cfg), "--in", str(ws.nli), "--out", str(out2),
        "--seed", "4",
    ]) == 0
    assert "# seed: 4" in out2.read_text()


def test_config_delete_kind_takes_effect(ws, tmp_path):
    cfg = tmp_path / "k.cfg"
    cfg.write_text("kind = delete\n")
    out = tmp_path / "d.tsv"
    assert dispatch([
        "attack", "--config", str(cfg), "--in", str(ws.nli), "--out", str(out),
        "--n", "1", "--seed", "3",
    ]) == 0
    clean = load_pair_rows(ws.nli)
    attacked = load_pair_rows(out)
    shorter = 0
    for c, a in zip(clean, attacked):
        for ct, at in zip(c.sentence_a + c.sentence_b, a.sentence_a + a.sentence_b):
            if ct != at:
                assert len(at) == len(ct) - 1
                shorter += 1
    assert shorter > 0


def test_config_error_paths(ws, tmp_path, capsys):
    assert dispatch(["attack", "--config", str(tmp_path / "no.cfg")]) == 2
    cfg = tmp_path / "c.cfg"
    cfg.write_text("seed = 1\n")
    assert dispatch(["--config", str(cfg)]) == 1  # config without a subcommand
    bad = tmp_path / "b.cfg"
    bad.write_text("just a line without equals\n")
    assert dispatch(["attack", "--config", str(bad), "--in", str(ws.nli), "--out", "x"]) == 1
    capsys.readouterr()


# ---------------------------------------------------------------- reports


def _tiny_matrix():
    cells = (
        EvalCell(ARCH_TASK_ONLY, "d", 0, 90.0),
        EvalCell(ARCH_DEFENDED, "d", 0, 90.0),
        EvalCell(ARCH_TASK_ONLY, "d", 1, 60.0),
        EvalCell(ARCH_DEFENDED, "d", 1, 85.0),
    )
    return RobustnessMatrix(cells, seed=5, attack_kind=NoiseKind.SWAP)


def test_emit_report_formats():
    m = _tiny_matrix()
    assert emit_report(m, "tsv") == render_tsv(m)
    assert emit_report(m, "table") == render_table(m)
    with pytest.raises(ValueError):
        emit_report(m, "json")


# ---------------------------------------------------------------- binary


@pytest.mark.skipif(shutil.which("typobench") is None, reason="script not on PATH")
def test_console_script_smoke():
    proc = subprocess.run(["typobench", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert proc.stdout.strip() == f"typobench {__version__}"
    proc = subprocess.run(["typobench"], capture_output=True, text=True)
    assert proc.returncode == 1
