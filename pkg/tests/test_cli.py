import json

import pytest

from editgauge.cli import main
from editgauge.corpus import read_corpus
from editgauge.fixtures import DATA_DIR

TINY = ["--d-tok", "8", "--d-lab", "4", "--enc-hidden", "8", "--dec-hidden", "12", "--epochs", "1",
        "--lr", "0.01", "--beam", "2", "--max-steps", "5", "--min-msg-freq", "1"]


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    d = tmp_path_factory.mktemp("pipe")
    steps = [
        ["extract", "--dump", DATA_DIR / "mini_dump.xml.bz2", "--out", d / "edits.jsonl"],
        ["label", "--corpus", d / "edits.jsonl", "--out", d / "labelled.jsonl", "--offline",
         "--ores-cache", DATA_DIR / "ores_cache"],
        ["split", "--corpus", d / "labelled.jsonl", "--out", d / "corpus.jsonl", "--seed", "0"],
        ["train", "--corpus", d / "corpus.jsonl", "--out", d / "model.npz", "--log", d / "log.json", *TINY],
    ]
    for argv in steps:
        assert main([str(a) for a in argv]) == 0, argv
    return d


def test_usage_errors_exit_1(capsys):
    assert run(capsys)[0] == 1
    assert run(capsys, "bogus")[0] == 1
    assert run(capsys, "extract", "--dump", "x")[0] == 1
    assert run(capsys, "train", "--corpus", "c", "--out", "o", "--lambda", "1.5")[0] == 1


def test_version_exits_0(capsys):
    code, out, _ = run(capsys, "--version")
    assert code == 0 and "0.1.0" in out


def test_missing_and_malformed_data_exit_2(tmp_path, capsys):
    assert run(capsys, "extract", "--dump", tmp_path / "nope.xml", "--out", tmp_path / "o")[0] == 2
    bad = tmp_path / "bad.xml"
    bad.write_text("<mediawiki><page><title>x</title>")
    code, _, err = run(capsys, "extract", "--dump", bad, "--out", tmp_path / "o")
    assert code == 2 and "byte offset" in err
    junk = tmp_path / "junk.jsonl"
    junk.write_text("{not json\n")
    assert run(capsys, "split", "--corpus", junk, "--out", tmp_path / "o")[0] == 2


def test_offline_label_without_cache_exits_2(pipeline, tmp_path, capsys):
    code, _, err = run(capsys, "label", "--corpus", pipeline / "edits.jsonl", "--out", tmp_path / "o",
                       "--offline", "--ores-cache", tmp_path / "empty")
    assert code == 2


def test_diff_tokens(tmp_path, capsys):
    (tmp_path / "a").write_text("the cat sat.")
    (tmp_path / "b").write_text("the dog sat.")
    code, out, _ = run(capsys, "diff", "--tokens", tmp_path / "a", tmp_path / "b")
    assert code == 0
    assert out.splitlines() == ["= the", "- cat", "+ dog", "= sat", "= ."]


def test_diff_lines(tmp_path, capsys):
    (tmp_path / "a").write_text("x\ny\nz\n")
    (tmp_path / "b").write_text("x\nY\nz\n")
    code, out, _ = run(capsys, "diff", tmp_path / "a", tmp_path / "b")
    assert code == 0 and out.splitlines() == ["@@ -2,1 +2,1 @@", "-y", "+Y"]


def test_pipeline_outputs(pipeline):
    corpus = read_corpus(pipeline / "corpus.jsonl")
    n = len(corpus)
    sizes = {s: sum(r.split == s for r in corpus) for s in ("train", "valid", "test")}
    assert sizes["train"] == int(0.7 * n) and sizes["valid"] == int(0.1 * n)
    assert all(r.quality is not None for r in corpus)
    assert len(json.loads((pipeline / "log.json").read_text())) == 1


def test_eval_predict_stats(pipeline, capsys):
    code, out, _ = run(capsys, "eval", "--corpus", pipeline / "corpus.jsonl", "--checkpoint", pipeline / "model.npz")
    report = json.loads(out)
    assert code == 0 and 0.0 <= report["accuracy"] <= 1.0

    code, out, _ = run(capsys, "predict", "--corpus", pipeline / "corpus.jsonl",
                       "--checkpoint", pipeline / "model.npz")
    rows = [json.loads(line) for line in out.splitlines()]
    assert code == 0 and rows and all(abs(sum(r["probabilities"].values()) - 1) < 1e-4 for r in rows)

    code, out, _ = run(capsys, "stats-lenacc", "--corpus", pipeline / "corpus.jsonl",
                       "--checkpoint", pipeline / "model.npz", "--edges", "100,1000")
    lines = out.splitlines()
    assert code == 0 and lines[0] == "lo,hi,n,accuracy" and len(lines) == 4


def test_predict_and_describe_single_edit(pipeline, tmp_path, capsys):
    (tmp_path / "old").write_text("The river runs north. The city grew.\n")
    (tmp_path / "new").write_text("The river runs north. The city grew fast.\n")
    common = ["--checkpoint", pipeline / "model.npz", "--old", tmp_path / "old", "--new", tmp_path / "new"]
    code, out, _ = run(capsys, "predict", *common)
    assert code == 0 and json.loads(out)["rev_id"] is None
    code, out, _ = run(capsys, "describe", *common)
    assert code == 0 and out.endswith("\n")
    (tmp_path / "same").write_text("The river runs north.\n")
    assert run(capsys, "describe", "--checkpoint", pipeline / "model.npz",
               "--old", tmp_path / "same", "--new", tmp_path / "same")[0] == 2
    assert run(capsys, "predict", "--checkpoint", pipeline / "model.npz")[0] == 1


def test_checkpoint_mismatch_exits_2(pipeline, capsys):
    code, _, err = run(capsys, "eval", "--corpus", DATA_DIR / "sweep_corpus.jsonl",
                       "--checkpoint", pipeline / "model.npz")
    assert code == 2


def test_stats_length(tmp_path, capsys):
    code, out, _ = run(capsys, "stats-length", "--dump", DATA_DIR / "mini_dump.xml.bz2")
    lines = out.splitlines()
    assert code == 0 and lines[0] == "month,n_revisions,mean_article_chars,n_edits,mean_edit_chars"
    assert sum(int(line.split(",")[1]) for line in lines[1:]) == 200
    assert run(capsys, "stats-length", "--dump", DATA_DIR / "mini_dump.xml.bz2", "--out", tmp_path / "s.csv")[0] == 0
    assert (tmp_path / "s.csv").read_text() == out


def test_sweep_with_config(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"epochs": 5, "d_tok": 8, "d_lab": 4, "enc_hidden": 8, "dec_hidden": 12,
                               "max_steps": 5, "beam": 2, "min_msg_freq": 1}))
    code, out, _ = run(capsys, "sweep", "--corpus", DATA_DIR / "sweep_corpus.jsonl", "--config", cfg,
                       "--epochs", "1", "--lambdas", "0,1", "--format", "csv")
    lines = out.splitlines()
    assert code == 0 and lines[0] == "model,lambda,f1,acc,bleu" and len(lines) == 3
    cfg.write_text(json.dumps({"bogus": 1}))
    assert run(capsys, "sweep", "--corpus", DATA_DIR / "sweep_corpus.jsonl", "--config", cfg)[0] == 2


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergent_training_exits_3(tmp_path, capsys):
    code, _, err = run(capsys, "train", "--corpus", DATA_DIR / "sweep_corpus.jsonl", "--out", tmp_path / "m.npz",
                       *TINY[:-6], "--lr", "1e308", "--epochs", "3")
    assert code == 3, err
