import json
import time

import pytest

from focuscode.cli import main

SMALL = {
    "schema_version": 1,
    "split": {"min_count": 5},
    "tagger": {"hidden": 16, "epochs": 3, "batch_size": 16, "lr": 1e-2},
    "classifier": {"hidden": 16, "attention": 8, "epochs": 3, "batch_size": 16, "lr": 1e-2},
    "synthetic": {"n_reports": 150, "n_labels": 6, "seed": 2, "embedding_dim": 16},
}


def _json_lines(path):
    return [json.loads(x) for x in path.read_text().splitlines() if x.strip()]


@pytest.fixture(scope="module")
def run(tmp_path_factory):
    """Generate, split and train once with a tiny configuration."""
    d = tmp_path_factory.mktemp("cli")
    cfg = d / "cfg.json"
    cfg.write_text(json.dumps(SMALL))
    emb = d / "syn.emb.txt"
    steps = [
        ["gen-synthetic", "--config", str(cfg), "--out", str(d / "syn.jsonl")],
        ["split", "--corpus", str(d / "syn.jsonl"), "--out-dir", str(d / "splits"), "--config", str(cfg)],
        ["train", "tagger", "--train", str(d / "splits/train.jsonl"), "--validation",
         str(d / "splits/validation.jsonl"), "--embeddings", str(emb), "--config", str(cfg),
         "--out", str(d / "tagger.ckpt")],
        ["train", "classifier", "--train", str(d / "splits/train.jsonl"), "--validation",
         str(d / "splits/validation.jsonl"), "--embeddings", str(emb), "--config", str(cfg),
         "--out", str(d / "clf.ckpt")],
        ["train", "baseline", "--train", str(d / "splits/train.jsonl"), "--config", str(cfg),
         "--out", str(d / "br.ckpt")],
    ]
    codes = [main(s) for s in steps]
    return d, codes


def test_pipeline_steps_succeed(run):
    d, codes = run
    assert codes == [0] * 5
    for name in ("tagger.ckpt", "clf.ckpt", "br.ckpt", "tagger.ckpt.metrics.json", "splits/split.json"):
        assert (d / name).exists()


def test_gen_synthetic_is_byte_identical(run, tmp_path):
    d, _ = run
    assert main(["gen-synthetic", "--config", str(d / "cfg.json"), "--out", str(tmp_path / "again.jsonl")]) == 0
    assert (tmp_path / "again.jsonl").read_bytes() == (d / "syn.jsonl").read_bytes()
    assert (tmp_path / "again.emb.txt").read_bytes() == (d / "syn.emb.txt").read_bytes()


def test_colliding_triggers_exit_2(tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"n_labels": 2, "synonym_pairs": 0,
                               "triggers": {"A": ["aa bb"], "B": ["aa bb"]}}))
    assert main(["gen-synthetic", "--config", str(cfg), "--out", str(tmp_path / "x.jsonl")]) == 2
    assert "trigger collision" in capsys.readouterr().err


def test_predict_end_to_end(run, tmp_path):
    d, _ = run
    out, ex = tmp_path / "pred.jsonl", tmp_path / "explain"
    assert main(["predict", "--corpus", str(d / "splits/test.jsonl"), "--tagger", str(d / "tagger.ckpt"),
                 "--classifier", str(d / "clf.ckpt"), "--embeddings", str(d / "syn.emb.txt"),
                 "--out", str(out), "--explain", str(ex)]) == 0
    rows = _json_lines(out)
    gold = _json_lines(d / "splits/test.jsonl")
    assert len(rows) == len(gold)
    assert all(r["codes"] for r in rows)
    assert len(list(ex.glob("*.html"))) == len(gold)
    assert main(["evaluate", "--predictions", str(out), "--gold", str(d / "splits/test.jsonl"),
                 "--out", str(tmp_path / "m.json")]) == 0
    assert "subset_accuracy" in json.loads((tmp_path / "m.json").read_text())


def test_predict_records_and_baseline(run, tmp_path):
    d, _ = run
    test = str(d / "splits/test.jsonl")
    assert main(["predict", "--corpus", test, "--classifier", str(d / "clf.ckpt"), "--records",
                 "--embeddings", str(d / "syn.emb.txt"), "--out", str(tmp_path / "r.jsonl")]) == 0
    assert main(["evaluate", "--predictions", str(tmp_path / "r.jsonl"), "--gold", test,
                 "--mode", "multiclass", "--out", str(tmp_path / "m.json")]) == 0
    assert main(["predict", "--corpus", test, "--baseline", str(d / "br.ckpt"),
                 "--out", str(tmp_path / "b.jsonl")]) == 0
    assert len(_json_lines(tmp_path / "b.jsonl")) == len(_json_lines(d / "splits/test.jsonl"))


def test_evaluate_perfect_and_mismatch(run, tmp_path):
    d, _ = run
    gold = _json_lines(d / "splits/test.jsonl")
    perfect = tmp_path / "perfect.jsonl"
    perfect.write_text("".join(json.dumps({"id": g["id"], "codes": g["codes"]}) + "\n" for g in gold))
    assert main(["evaluate", "--predictions", str(perfect), "--gold", str(d / "splits/test.jsonl"),
                 "--out", str(tmp_path / "m.json")]) == 0
    m = json.loads((tmp_path / "m.json").read_text())
    assert m["subset_accuracy"] == 1.0 and m["micro"]["f1"] == 1.0
    short = tmp_path / "short.jsonl"
    short.write_text("".join(perfect.read_text().splitlines(keepends=True)[1:]))
    assert main(["evaluate", "--predictions", str(short), "--gold", str(d / "splits/test.jsonl")]) == 1


def test_checkpoint_kind_mismatch_exit_2(run, tmp_path, capsys):
    d, _ = run
    code = main(["predict", "--corpus", str(d / "splits/test.jsonl"), "--tagger", str(d / "clf.ckpt"),
                 "--classifier", str(d / "clf.ckpt"), "--embeddings", str(d / "syn.emb.txt"),
                 "--out", str(tmp_path / "p.jsonl")])
    assert code == 2
    assert "expected a tagger checkpoint" in capsys.readouterr().err


def test_bad_config_exit_2(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"schema_version": 1, "tagger": {"bogus": 1}}))
    assert main(["split", "--corpus", str(tmp_path / "none.jsonl"), "--config", str(cfg)]) == 2


def test_missing_corpus_exit_1(tmp_path):
    assert main(["split", "--corpus", str(tmp_path / "none.jsonl"), "--out-dir", str(tmp_path)]) == 1


def test_output_dir_env(monkeypatch, tmp_path, run):
    d, _ = run
    monkeypatch.setenv("FOCUSCODE_OUTPUT_DIR", str(tmp_path / "outs"))
    assert main(["gen-synthetic", "--config", str(d / "cfg.json"), "--out", "rel.jsonl"]) == 0
    assert (tmp_path / "outs" / "rel.jsonl").exists()


def test_selftest_fast(capsys):
    t0 = time.perf_counter()
    assert main(["selftest"]) == 0
    assert time.perf_counter() - t0 < 60
    out = capsys.readouterr().out
    assert out.count("PASS") == 9 and "FAIL" not in out
