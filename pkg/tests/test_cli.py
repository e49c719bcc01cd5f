import json

import pytest

from obfubench import __version__
from obfubench.cli import main
from obfubench.synth import generate_synthetic_corpus


@pytest.fixture(scope="module")
def demo(tmp_path_factory):
    base = tmp_path_factory.mktemp("cli")
    _, manifest = generate_synthetic_corpus(3, 1, base / "corpus")
    return base / "corpus", manifest


def corpus_args(demo):
    root, manifest = demo
    return ["--root", str(root), "--manifest", str(manifest)]


def test_no_command_is_usage_error(capsys):
    assert main([]) == 1
    assert main(["frobnicate"]) == 1
    assert main(["train"]) == 1  # missing --features


def test_help_and_version(capsys):
    assert main(["--help"]) == 0
    assert "pipeline" in capsys.readouterr().out
    assert main(["--version"]) == 0
    assert __version__ in capsys.readouterr().out


def test_ingest(demo, capsys):
    assert main(["ingest", *corpus_args(demo)]) == 0
    out = capsys.readouterr().out
    assert out.startswith("42 files, 0 unlisted")
    assert "Singleton" in out


def test_missing_manifest_is_data_error(tmp_path, capsys):
    assert main(["ingest", "--root", str(tmp_path), "--manifest", str(tmp_path / "m.csv")]) == 2
    assert "manifest not found" in capsys.readouterr().err


def test_sample(demo, tmp_path, capsys):
    out = tmp_path / "s.csv"
    assert main(["sample", *corpus_args(demo), "--seed", "3", "--out", str(out)]) == 0
    rows = out.read_text().splitlines()
    assert rows[0] == "path,label" and 28 <= len(rows) - 1 <= 42
    assert main(["sample", *corpus_args(demo), "--min", "5", "--max", "6"]) == 2


def test_obfuscate_and_leakage(demo, tmp_path, capsys):
    out, mapping = tmp_path / "obf", tmp_path / "map.txt"
    assert main(["obfuscate", *corpus_args(demo), "--out", str(out), "--mapping-out", str(mapping)]) == 0
    assert " -> " in mapping.read_text()
    capsys.readouterr()
    assert main(["leakage", "--root", str(out), "--manifest", str(out / "manifest.csv"), "--out", str(tmp_path / "l.json")]) == 0
    assert "leakage rate 0.000" in capsys.readouterr().out
    assert json.loads((tmp_path / "l.json").read_text())["rate"] == 0.0


def test_obfuscate_with_broken_file_exits_2(write_tree, tmp_path, capsys):
    root = write_tree(
        {"A.java": "class Alpha { int count; }", "B.java": "class Beta { /* never closed "},
        manifest="path,label\nA.java,Singleton\nB.java,Singleton\n",
    )
    rc = main(["obfuscate", "--root", str(root), "--manifest", str(root / "manifest.csv"), "--out", str(tmp_path / "o"), "--mapping-out", str(tmp_path / "m.txt")])
    assert rc == 2
    assert "failed: B.java" in capsys.readouterr().err
    assert (tmp_path / "o" / "A.java").is_file()


def test_lex_modes(data_dir, tmp_path, capsys):
    src = data_dir / "EmSingleton.java"
    assert main(["lex", str(src)]) == 0
    assert capsys.readouterr().out.splitlines()[:2] == ["keyword\t0\t7\tpackage", "whitespace\t7\t8\t "]
    assert main(["lex", "--signature", str(src)]) == 0
    assert capsys.readouterr().out.startswith("package id . id ;")
    bad = tmp_path / "Bad.java"
    bad.write_text('class A { String s = "open\n }')
    assert main(["lex", str(bad)]) == 2
    assert "line 1" in capsys.readouterr().err
    assert main(["lex", str(tmp_path / "none.java")]) == 2


def test_embed_train_evaluate_report(demo, tmp_path, capsys):
    feats = tmp_path / "lex.jsonl"
    model = tmp_path / "m" / "logreg.json"
    assert main(["embed", *corpus_args(demo), "--out", str(feats)]) == 0
    assert len(feats.read_text().splitlines()) == 42
    rc = main(["train", "--features", str(feats), "--model", "logreg", "--k", "3", "--epochs", "200", "--out", str(model), "--report", str(tmp_path / "cv.json"), "--all-folds"])
    assert rc == 0
    assert sorted(p.name for p in model.parent.iterdir()) == ["logreg.fold1.json", "logreg.fold2.json", "logreg.fold3.json", "logreg.json"]
    assert (model.parent / "logreg.fold3.json").read_bytes() == model.read_bytes()
    assert main(["evaluate", "--model", str(model), "--features", str(feats), "--report", str(tmp_path / "ev.json")]) == 0
    capsys.readouterr()
    assert main(["report", "--baseline", str(tmp_path / "cv.json"), "--obfuscated", str(tmp_path / "ev.json"), "--out", str(tmp_path / "rob.json")]) == 0
    assert "weighted_f1" in capsys.readouterr().out
    assert set(json.loads((tmp_path / "rob.json").read_text())["deltas"]) >= {"accuracy", "weighted_f1"}


def test_import_embeddings(demo, tmp_path, capsys):
    feats = tmp_path / "s.jsonl"
    assert main(["embed", *corpus_args(demo), "--kind", "structural", "--dim", "100", "--out", str(feats)]) == 0
    capsys.readouterr()
    assert main(["import-embeddings", "--file", str(feats), *corpus_args(demo)]) == 0
    assert "42 vectors, dim 100" in capsys.readouterr().out
    assert main(["import-embeddings", "--file", str(feats), "--root", "x"]) == 1
    assert main(["import-embeddings", "--file", str(tmp_path / "absent.jsonl")]) == 2


def test_synth(tmp_path, capsys):
    assert main(["synth", "--per-label", "2", "--seed", "4", "--out", str(tmp_path / "d")]) == 0
    assert (tmp_path / "d" / "manifest.csv").is_file()
    assert main(["synth", "--per-label", "1", "--out", str(tmp_path / "e")]) == 2


def test_pipeline_config_file_and_flags(demo, tmp_path, monkeypatch, capsys):
    root, manifest = demo
    cfg = tmp_path / "run.cfg"
    cfg.write_text(f"root = {root}\nmanifest = {manifest}\nk = 3\nmodels = logreg\nembedders = structural\nmax_epochs = 100\nseed = 9\n")
    monkeypatch.setenv("OBFUBENCH_SEED", "1")
    out = tmp_path / "run"
    assert main(["pipeline", "--config", str(cfg), "--out", str(out), "--seed", "2", "--no-paired"]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["config"]["seed"] == 2 and summary["config"]["k"] == 3
    assert not (out / "paired").exists()
    assert "artifacts in" in capsys.readouterr().out


def test_pipeline_reports_data_errors(tmp_path, capsys):
    assert main(["pipeline", "--root", str(tmp_path), "--manifest", str(tmp_path / "m.csv")]) == 2
    assert "manifest not found" in capsys.readouterr().err
    assert main(["pipeline", "--config", str(tmp_path / "missing.cfg")]) == 2
    (tmp_path / "bad.cfg").write_text("colour = blue\n")
    assert main(["pipeline", "--config", str(tmp_path / "bad.cfg")]) == 2
    assert "unknown config key" in capsys.readouterr().err


def test_env_seed_reaches_sample(demo, monkeypatch, capsys):
    monkeypatch.setenv("OBFUBENCH_SEED", "11")
    main(["sample", *corpus_args(demo)])
    via_env = capsys.readouterr().out
    main(["sample", *corpus_args(demo), "--seed", "11"])
    assert capsys.readouterr().out == via_env
    monkeypatch.setenv("OBFUBENCH_SEED", "eleven")
    assert main(["sample", *corpus_args(demo)]) == 2
