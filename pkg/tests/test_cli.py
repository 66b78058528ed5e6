import json
import os

import pytest

from memdep.cli import run

TINY = ["--d", "16", "--layers", "2", "--heads", "2", "--conv-channels", "2"]


def read(path):
    with open(path, encoding="utf-8") as fh:
        return fh.read()


def pipeline(root, seed=0):
    """gen -> trace -> dataset -> pretrain -> finetune -> predict -> eval under ``root``."""
    d = {k: os.path.join(root, k) for k in ("gen", "trace", "data", "pre", "fine", "pred", "eval")}
    s = ["--seed", str(seed)]
    assert run(["gen", *s, "--out-dir", d["gen"], "--functions", "4", "--max-ops", "12"]) == 0
    program = os.path.join(d["gen"], "program.asm")
    assert run(["trace", *s, "--out-dir", d["trace"], "--program", program,
                "--oracle", os.path.join(d["gen"], "oracle.deps")]) == 0
    assert run(["dataset", *s, "--out-dir", d["data"], "--program", program,
                "--traces", os.path.join(d["trace"], "traces.txt"), "--deps", os.path.join(d["trace"], "deps.txt"),
                "--regions", os.path.join(d["gen"], "regions.txt"), "--test-fraction", "0.25"]) == 0
    assert run(["pretrain", *s, "--out-dir", d["pre"], "--dataset", os.path.join(d["data"], "pretrain.jsonl"),
                "--epochs", "1", "--batch-size", "4", *TINY]) == 0
    assert run(["finetune", *s, "--out-dir", d["fine"], "--dataset", os.path.join(d["data"], "train.jsonl"),
                "--checkpoint", os.path.join(d["pre"], "checkpoint"), "--epochs", "2", "--batch-size", "4"]) == 0
    assert run(["predict", *s, "--out-dir", d["pred"], "--checkpoint", os.path.join(d["fine"], "checkpoint"),
                "--program", program, "--functions", os.path.join(d["data"], "test-functions.txt")]) == 0
    assert run(["eval", *s, "--out-dir", d["eval"], "--predicted", os.path.join(d["pred"], "predicted.txt"),
                "--reference", os.path.join(d["trace"], "deps.txt"), "--scores", os.path.join(d["pred"], "scores.txt"),
                "--program", program, "--functions", os.path.join(d["data"], "test-functions.txt")]) == 0
    return d


@pytest.fixture(scope="module")
def piped(tmp_path_factory):
    return pipeline(str(tmp_path_factory.mktemp("a")))


def test_pipeline_writes_every_artifact(piped):
    expected = {
        "gen": ["program.asm", "oracle.deps", "regions.txt", "manifest.txt"],
        "trace": ["traces.txt", "deps.txt", "manifest.txt"],
        "data": ["pretrain.jsonl", "train.jsonl", "test.jsonl", "test-functions.txt", "vocab.txt"],
        "pre": ["checkpoint", "loss.txt", "audit.txt"],
        "fine": ["checkpoint", "loss.txt"],
        "pred": ["scores.txt", "predicted.txt", "notes.txt"],
        "eval": ["report.txt", "report.jsonl", "sweep.txt"],
    }
    for stage, names in expected.items():
        for name in names:
            assert os.path.exists(os.path.join(piped[stage], name)), (stage, name)
    assert "f1" in read(os.path.join(piped["eval"], "report.txt")).lower()


def test_pipeline_is_reproducible(piped, tmp_path):
    again = pipeline(str(tmp_path))
    for name in ("report.txt", "report.jsonl"):
        assert read(os.path.join(piped["eval"], name)) == read(os.path.join(again["eval"], name))
    assert read(os.path.join(piped["pred"], "scores.txt")) == read(os.path.join(again["pred"], "scores.txt"))


def test_manifest_records_resolved_config(piped):
    text = read(os.path.join(piped["pre"], "manifest.txt"))
    lines = text.splitlines()
    assert lines[:3] == ["command pretrain", "seed 0", "threads 1"]
    assert "config epochs=1" in lines and "config d=16" in lines
    assert any(line.startswith("input dataset ") for line in lines)


def test_eval_of_reference_against_itself(piped, tmp_path):
    deps = os.path.join(piped["trace"], "deps.txt")
    assert run(["eval", "--out-dir", str(tmp_path), "--predicted", deps, "--reference", deps]) == 0
    overall = json.loads(read(tmp_path / "report.jsonl").splitlines()[0])
    assert overall["scope"] == "all" and overall["miss"] == 0 and overall["fp"] == 0
    assert overall["detect"] == len(read(deps).splitlines()) and overall["f1"] == 1.0


def test_match_calls_grid(tmp_path):
    gen = tmp_path / "g"
    assert run(["gen", "--kind", "signatures", "--out-dir", str(gen), "--functions", "6"]) == 0
    out = tmp_path / "m"
    assert run(["match-calls", "--out-dir", str(out), "--signatures", str(gen / "signatures.txt"),
                "--callsites", str(gen / "callsites.txt")]) == 0
    rows = [line for line in read(out / "matches.txt").splitlines() if line and not line.startswith("#")]
    assert len(rows) == 8


def test_exit_codes(tmp_path, capsys):
    bad = tmp_path / "bad.asm"
    bad.write_text("f:\n    frobnicate rax\n")
    assert run(["trace", "--out-dir", str(tmp_path), "--program", str(bad)]) == 1
    cfg = tmp_path / "x.cfg"
    cfg.write_text("no-such-key = 3\n")
    assert run(["gen", "--out-dir", str(tmp_path / "g"), "--config", str(cfg)]) == 2
    loop = tmp_path / "loop.asm"
    loop.write_text("f:\n.top:\n    mov [rsi],rax\n    jmp .top\n")
    assert run(["trace", "--out-dir", str(tmp_path / "t"), "--program", str(loop), "--budget", "50"]) == 3
    assert run(["gen", "--out-dir", str(tmp_path / "g2"), "--functions", "3"]) == 0
    empty = tmp_path / "empty.deps"
    empty.write_text("")
    code = run(["trace", "--out-dir", str(tmp_path / "t2"), "--program", str(tmp_path / "g2" / "program.asm"),
                "--oracle", str(empty)])
    assert code == 4
    assert "disagrees" in capsys.readouterr().err
