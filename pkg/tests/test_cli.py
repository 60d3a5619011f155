import json

import pytest

from hypomimia.cli import main

TINY = {
    "model": {"frames": 3, "image_size": 8, "patch_size": 4, "embed_dim": 8, "vit_depth": 1,
              "mhsa_heads": 2, "max_text_len": 20, "n_ctx": 2},
    "train": {"epochs": 1, "batch_size": 8},
    "classifier": {"network": {"hidden_dim": 4}, "train": {"epochs": 2, "batch_size": 8}},
    "data": {"synthetic": {"videos_per_class": 2, "n_hc": 5, "n_pd": 5, "n_frames": 5, "image_size": 8}},
    "eval": {"k": 2},
}


@pytest.fixture
def cfg_path(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(TINY))
    return str(path)


def _json(capsys):
    return json.loads(capsys.readouterr().out)


def test_full_pipeline(tmp_path, cfg_path, capsys):
    t = str(tmp_path)
    assert main(["synth", "--level", "video", "--out", f"{t}/v", "--config", cfg_path]) == 0
    assert _json(capsys)["clips"] == 8
    assert main(["synth", "--level", "subject", "--out", f"{t}/s", "--config", cfg_path]) == 0
    assert _json(capsys)["subjects"] == 10

    assert main(["train-expr", "--data", f"{t}/v", "--out", f"{t}/m.hem", "--config", cfg_path]) == 0
    report = _json(capsys)
    assert len(report["history"]["loss"]) == 1
    assert report["version"] and report["config"]["model"]["embed_dim"] == 8

    assert main(["eval-expr", "--model", f"{t}/m.hem", "--data", f"{t}/v", "--text"]) == 0
    assert "accuracy:" in capsys.readouterr().out

    assert main(["extract", "--model", f"{t}/m.hem", "--subjects", f"{t}/s", "--out", f"{t}/r.jsonl"]) == 0
    assert _json(capsys)["records"] == 10
    assert main(["process", "--in", f"{t}/r.jsonl", "--out", f"{t}/p.jsonl"]) == 0
    capsys.readouterr()
    lines = (tmp_path / "p.jsonl").read_text().splitlines()
    assert len(lines) == 10 and "stats" in json.loads(lines[0])

    assert main(["train-clf", "--in", f"{t}/p.jsonl", "--out", f"{t}/c.hem", "--config", cfg_path]) == 0
    assert _json(capsys)["mode"] == "processed"
    assert main(["cv", "--in", f"{t}/p.jsonl", "--config", cfg_path, "--out", f"{t}/cv.json"]) == 0
    cv = _json(capsys)
    assert len(cv["folds"]) == 2 and len(cv["predictions"]) == 10
    assert json.loads((tmp_path / "cv.json").read_text()) == cv

    assert main(["boxplot", "--in", f"{t}/r.jsonl", "--out", f"{t}/box.csv"]) == 0
    assert len(_json(capsys)["rows"]) == 8
    assert len((tmp_path / "box.csv").read_text().splitlines()) == 9


def test_ablate_emits_eight_rows(tmp_path, cfg_path, capsys):
    t = str(tmp_path)
    assert main(["synth", "--level", "intensity", "--out", t, "--config", cfg_path]) == 0
    capsys.readouterr()
    args = ["ablate", "--in", f"{t}/records.jsonl", "--config", cfg_path, "--seed", "3"]
    assert main(args + ["--out", f"{t}/a.json", "--table", f"{t}/a.txt"]) == 0
    capsys.readouterr()
    assert main(args + ["--out", f"{t}/b.json"]) == 0
    capsys.readouterr()
    first = (tmp_path / "a.json").read_bytes()
    assert first == (tmp_path / "b.json").read_bytes()
    assert len(json.loads(first)["rows"]) == 8
    assert len((tmp_path / "a.txt").read_text().splitlines()) == 10


def test_seed_precedence(tmp_path, cfg_path, capsys, monkeypatch):
    t = str(tmp_path)
    monkeypatch.setenv("HYPOMIMIA_SEED", "7")
    assert main(["synth", "--level", "intensity", "--out", t, "--config", cfg_path]) == 0
    assert _json(capsys)["config"]["data"]["synthetic"]["seed"] == 7
    assert main(["synth", "--level", "intensity", "--out", t, "--config", cfg_path, "--seed", "2"]) == 0
    assert _json(capsys)["config"]["data"]["synthetic"]["seed"] == 2


def test_gradcheck_subset(capsys):
    assert main(["gradcheck", "--only", "lstm", "gru_residual"]) == 0
    report = _json(capsys)
    assert set(report["errors"]) == {"lstm", "gru_residual"}
    assert report["failed"] == []


def test_exit_codes(tmp_path, capsys):
    assert main([]) == 2
    assert main(["synth", "--level", "nope", "--out", str(tmp_path)]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"model": {"colour": 1}}))
    assert main(["synth", "--level", "intensity", "--out", str(tmp_path), "--config", str(bad)]) == 2
    (tmp_path / "junk.jsonl").write_text("not json\n")
    assert main(["process", "--in", str(tmp_path / "junk.jsonl"), "--out", str(tmp_path / "o")]) == 3
    assert main(["eval-expr", "--model", str(tmp_path / "missing.hem"), "--data", str(tmp_path)]) == 3
    assert main(["gradcheck", "--only", "no_such_case"]) == 2
    capsys.readouterr()
