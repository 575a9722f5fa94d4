import json

import pytest

from chimera.cli import main

GEN = "n=60\nm=150\ng=3\nT=3\np=0.9\n"
HP = "alpha=1e-4\nbeta=10\nlambda1=0.1\nlambda2=1e-4\nrank=3\nmax_iters=60\ntol=0\n"


def json_lines(text):
    return [json.loads(line) for line in text.strip().splitlines()]


@pytest.fixture
def workdir(tmp_path):
    (tmp_path / "gen.cfg").write_text(GEN)
    (tmp_path / "hp.cfg").write_text(HP)
    return tmp_path


def pipeline(root, tag):
    out = root / tag
    assert main(["generate", "--config", str(root / "gen.cfg"), "--out", str(out / "ds"), "--seed", "3",
                 "--deterministic"]) == 0
    assert main(["fit", "--dataset", str(out / "ds"), "--config", str(root / "hp.cfg"), "--out", str(out / "m.ckpt"),
                 "--trace", str(out / "trace.tsv"), "--max-halvings", "10", "--seed", "3", "--deterministic"]) == 0
    assert main(["detect", "--model", str(out / "m.ckpt"), "--clusters", "3", "--out", str(out / "det.tsv"),
                 "--seed", "3", "--deterministic"]) == 0
    assert main(["predict", "--model", str(out / "m.ckpt"), "--clusters", "3", "--out", str(out / "pred.tsv"),
                 "--embedding", str(out / "emb.tsv"), "--seed", "3", "--deterministic"]) == 0
    return out


def test_pipeline_is_byte_identical(workdir, capsys):
    a, b = pipeline(workdir, "a"), pipeline(workdir, "b")
    for name in ("m.ckpt", "det.tsv", "pred.tsv", "emb.tsv", "trace.tsv", "ds/edges_1.tsv", "ds/content_2.tsv"):
        assert (a / name).read_bytes() == (b / name).read_bytes(), name


def test_evaluate_identical_files(workdir, capsys):
    out = pipeline(workdir, "a")
    capsys.readouterr()
    assert main(["evaluate", "--labels", str(out / "det.tsv"), "--truth", str(out / "det.tsv")]) == 0
    for rec in json_lines(capsys.readouterr().out):
        assert rec["purity"] == 1.0 and rec["jaccard"] == 1.0


def test_evaluate_against_dataset_truth(workdir, capsys):
    out = pipeline(workdir, "a")
    capsys.readouterr()
    assert main(["evaluate", "--labels", str(out / "det.tsv"), "--truth", str(out / "ds"),
                 "--out", str(out / "eval.jsonl")]) == 0
    records = json_lines(capsys.readouterr().out)
    assert [r["timestamp"] for r in records] == [0, 1, 2, "all"]
    assert (out / "eval.jsonl").read_text().strip().splitlines()[0] == json.dumps(records[0], sort_keys=True)


def test_predicted_timestamp_has_no_truth(workdir, capsys):
    out = pipeline(workdir, "a")
    capsys.readouterr()
    assert main(["evaluate", "--labels", str(out / "pred.tsv"), "--truth", str(out / "ds")]) == 1
    assert "no ground truth for timestamp 3" in capsys.readouterr().err


def test_tune_writes_log_and_best_config(workdir, capsys):
    out = pipeline(workdir, "a")
    (workdir / "space.cfg").write_text("alpha=1e-4\nbeta=10\nlambda1=0.1\nlambda2=1e-4\nrank=3\nclusters=2,3\n"
                                       "strategy=grid\nbudget=5\n")
    capsys.readouterr()
    assert main(["tune", "--dataset", str(out / "ds"), "--space", str(workdir / "space.cfg"), "--config",
                 str(workdir / "hp.cfg"), "--max-halvings", "10", "--log", str(out / "log.jsonl"),
                 "--out", str(out / "best.cfg"), "--deterministic"]) == 0
    summary = json_lines(capsys.readouterr().out)[-1]
    assert summary["trials"] == 2 and summary["direction"] == "maximize"
    log = json_lines((out / "log.jsonl").read_text())
    assert len(log) == 2 and "wall_time" not in log[0]
    assert "rank=3" in (out / "best.cfg").read_text()


@pytest.mark.parametrize(
    "argv, message",
    [
        (["detect", "--model", "nope.ckpt", "--clusters", "2", "--out", "x"], "model not found"),
        (["fit", "--dataset", "nope", "--out", "x"], "dataset not found"),
        (["evaluate", "--labels", "nope", "--truth", "nope"], "label file not found"),
        (["bench", "--sizes", "10,20"], "three sizes"),
    ],
)
def test_errors_exit_nonzero(argv, message, capsys, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(argv) == 1
    assert message in capsys.readouterr().err


def test_bad_cluster_count(workdir, capsys):
    out = pipeline(workdir, "a")
    capsys.readouterr()
    assert main(["detect", "--model", str(out / "m.ckpt"), "--clusters", "0", "--out", str(out / "x")]) == 1
    assert main(["predict", "--model", str(out / "m.ckpt"), "--clusters", "3", "--horizon", "0",
                 "--out", str(out / "x")]) == 1


def test_small_bench(capsys):
    assert main(["bench", "--sizes", "60,80,100", "--iterations", "5"]) == 0
    records = json_lines(capsys.readouterr().out)
    assert [r["n"] for r in records[:3]] == [60, 80, 100]
    assert "r2" in records[-1]
