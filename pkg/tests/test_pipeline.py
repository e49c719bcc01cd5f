import hashlib
import json
from pathlib import Path

import pytest

from obfubench.errors import DataError
from obfubench.features import embed_corpus, EmbedderConfig, write_vectors
from obfubench.pipeline import (
    PipelineConfig,
    StageError,
    env_seed,
    load_config,
    parse_config_text,
    run_pipeline,
)
from obfubench.synth import generate_synthetic_corpus


def tree_hashes(root: Path) -> dict[str, str]:
    return {p.relative_to(root).as_posix(): hashlib.sha256(p.read_bytes()).hexdigest() for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.fixture(scope="module")
def demo(tmp_path_factory):
    root = tmp_path_factory.mktemp("demo")
    _, manifest = generate_synthetic_corpus(6, 2, root / "corpus")
    return root / "corpus", manifest


def small(demo, out, **kw):
    root, manifest = demo
    base = dict(root=str(root), manifest=str(manifest), out=str(out), k=3, max_epochs=150, models=("logreg", "mlp"), hidden_units=16)
    base.update(kw)
    return PipelineConfig(**base)


def test_missing_manifest_fails_before_any_stage(tmp_path):
    cfg = PipelineConfig(root=str(tmp_path), manifest=str(tmp_path / "nope.csv"), out=str(tmp_path / "out"))
    with pytest.raises(DataError, match="manifest not found"):
        run_pipeline(cfg)
    assert not (tmp_path / "out").exists()


def test_unknown_embedder_rejected(demo, tmp_path):
    with pytest.raises(DataError, match="embedder"):
        run_pipeline(small(demo, tmp_path / "o", embedders=("neural",)))


def test_run_writes_artifacts_and_is_reproducible(demo, tmp_path):
    root, _ = demo
    before = tree_hashes(root)
    out = tmp_path / "out"
    result = run_pipeline(small(demo, out))
    assert result.exit_code == 0
    for rel in [
        "corpus.json",
        "leakage_original.json",
        "features/lexical_original.jsonl",
        "stage1/lexical/logreg/model.json",
        "stage1/structural/mlp/cv_report.json",
        "stage1/lexical/mlp/folds.json",
        "stage2/sample.csv",
        "stage2/mapping.txt",
        "stage2/obfuscated/manifest.csv",
        "stage2/leakage_obfuscated.json",
        "stage2/lexical/logreg/report.json",
        "stage2/lexical/logreg/robustness.txt",
        "paired/structural/mlp/robustness.json",
        "summary.json",
        "summary.txt",
    ]:
        assert (out / rel).is_file(), rel
    manifest = json.loads((out / "artifacts.json").read_text())
    assert manifest == {k: v for k, v in tree_hashes(out).items() if k != "artifacts.json"}
    assert json.loads((out / "stage2/leakage_obfuscated.json").read_text())["rate"] == 0.0
    assert tree_hashes(root) == before  # input corpus untouched

    run_pipeline(small(demo, out))
    assert json.loads((out / "artifacts.json").read_text()) == manifest


def test_sample_falls_back_when_fold_is_thin(demo, tmp_path):
    # 6 files per label and k=5 leave at most 2 per label in the last fold
    result = run_pipeline(small(demo, tmp_path / "o", k=5, sample_min=3, sample_max=3, paired=False, embedders=("structural",)))
    assert result.summary["stage2"]["sample_source"] == "whole corpus"
    assert result.summary["stage2"]["sample_size"] == 42


def test_stage_failure_names_stage_and_keeps_artifacts(demo, tmp_path):
    root, manifest = demo
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"id": "ghost/Ghost.java", "vector": [1.0, 2.0]}\n')
    out = tmp_path / "o"
    with pytest.raises(StageError) as err:
        run_pipeline(small(demo, out, external_original=str(bad)))
    assert err.value.stage == "embed"
    assert "ghost/Ghost.java" in str(err.value)
    assert (out / "corpus.json").is_file()


def test_external_embeddings_join_the_run(demo, tmp_path):
    from obfubench.corpus import load_corpus

    root, manifest = demo
    corpus = load_corpus(root, manifest)
    vec = tmp_path / "ext.jsonl"
    write_vectors(embed_corpus(corpus, EmbedderConfig("structural", dim=100)), vec)
    result = run_pipeline(small(demo, tmp_path / "o", embedders=("lexical",), external_original=str(vec), paired=False))
    assert set(result.summary["stage1"]) == {"lexical", "external"}
    assert "external" not in result.summary["stage2"]  # no obfuscated vectors supplied


def test_external_only_run_scores_supplied_obfuscated_vectors(demo, tmp_path):
    from obfubench.corpus import load_corpus

    root, manifest = demo
    corpus = load_corpus(root, manifest)
    vectors = embed_corpus(corpus, EmbedderConfig("structural"))
    write_vectors(vectors, tmp_path / "orig.jsonl")
    write_vectors(vectors[:20], tmp_path / "obf.jsonl")
    cfg = small(demo, tmp_path / "o", embedders=(), external_original=str(tmp_path / "orig.jsonl"),
                external_obfuscated=str(tmp_path / "obf.jsonl"), paired=False)  # fmt: skip
    result = run_pipeline(cfg)
    assert list(result.summary["stage1"]) == ["external"]
    report = json.loads((tmp_path / "o/stage2/external/logreg/report.json").read_text())
    assert sum(map(sum, report["confusion"]["counts"])) == 20


def test_config_text_and_overrides(tmp_path, monkeypatch):
    text = "# demo\nroot = corpus\nmanifest = corpus/manifest.csv\nk = 4\nmodels = svm, mlp\nkeep_comments = yes\n"
    assert parse_config_text(text)["models"] == "svm, mlp"
    path = tmp_path / "run.cfg"
    path.write_text(text)
    cfg = load_config(path)
    assert cfg.k == 4 and cfg.models == ("svm", "mlp") and cfg.keep_comments is True
    assert cfg.policy().comments == "keep"
    with pytest.raises(DataError, match="unknown config key"):
        PipelineConfig.from_mapping({"kay": "3"})
    with pytest.raises(DataError, match="expected key = value"):
        parse_config_text("just words")
    with pytest.raises(DataError, match="'paired': cannot parse"):
        PipelineConfig.from_mapping({"paired": "maybe"})


def test_env_seed(monkeypatch):
    monkeypatch.delenv("OBFUBENCH_SEED", raising=False)
    assert env_seed(5) == 5
    monkeypatch.setenv("OBFUBENCH_SEED", "42")
    assert env_seed() == 42
    monkeypatch.setenv("OBFUBENCH_SEED", "x")
    with pytest.raises(DataError):
        env_seed()
