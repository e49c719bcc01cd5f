"""End-to-end two-stage benchmark.

Stage 1 embeds the original corpus and cross-validates every classifier.
Stage 2 samples held-out files from the last fold, obfuscates them, embeds
them again and scores them with the last-fold models. A paired variant
obfuscates the whole corpus and scores every fold's held-out files in both
forms, which gives a like-for-like robustness figure.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import shutil
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Sequence

from obfubench import classifiers as clf
from obfubench.corpus import DEFAULT_LABELS, Corpus, format_manifest, load_corpus, stratified_sample
from obfubench.errors import DataError, InvariantError, ObfubenchError
from obfubench.evaluation import (
    ConfusionMatrix,
    MetricsReport,
    confusion,
    detect_leakage,
    evaluate,
    metrics,
    report_to_dict,
    robustness_report,
)
from obfubench.features import (
    EXTERNAL,
    LEXICAL,
    STRUCTURAL,
    EmbedderConfig,
    FeatureVector,
    embed_corpus,
    import_embeddings,
    stack,
    write_vectors,
)
from obfubench.renamer import KEEP, RenamePolicy, obfuscate_corpus

log = logging.getLogger(__name__)

SEED_ENV = "OBFUBENCH_SEED"


def env_seed(default: int = 0) -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None or not raw.strip():
        return default
    try:
        return int(raw)
    except ValueError:
        raise DataError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


def _split_list(value: str | Sequence[str]) -> tuple[str, ...]:
    if isinstance(value, str):
        return tuple(v.strip() for v in value.split(",") if v.strip())
    return tuple(value)


def _parse_bool(value: str | bool) -> bool:
    if isinstance(value, bool):
        return value
    low = value.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise DataError(f"not a boolean: {value!r}")


@dataclass
class PipelineConfig:
    root: str = ""
    manifest: str = ""
    out: str = "obfubench-out"
    labels: tuple[str, ...] = DEFAULT_LABELS
    embedders: tuple[str, ...] = (LEXICAL, STRUCTURAL)
    dim: int = 256
    hash_seed: int = 0
    models: tuple[str, ...] = clf.MODEL_KINDS
    k: int = 5
    seed: int = 0
    sample_min: int = 2
    sample_max: int = 3
    rename_seed: int = 0
    keep_comments: bool = False
    keep_strings: bool = False
    project_scope: bool = False
    paired: bool = True
    max_epochs: int = 1000
    learning_rate: float = 0.01
    l2_reg: float = 1e-4
    hidden_units: int = 100
    tolerance: float = 1e-6
    external_original: str = ""
    external_obfuscated: str = ""

    @classmethod
    def from_mapping(cls, values: dict[str, Any], base: "PipelineConfig | None" = None) -> "PipelineConfig":
        cfg = base or cls()
        types = {f.name: f.type for f in fields(cls)}
        updates = {}
        for key, raw in values.items():
            name = key.strip().replace("-", "_")
            if name not in types:
                raise DataError(f"unknown config key {key!r}")
            kind = types[name]
            try:
                if kind.startswith("tuple"):
                    updates[name] = _split_list(raw)
                elif kind == "bool":
                    updates[name] = _parse_bool(raw)
                elif kind == "int":
                    updates[name] = int(raw)
                elif kind == "float":
                    updates[name] = float(raw)
                else:
                    updates[name] = str(raw)
            except ValueError:
                raise DataError(f"config key {key!r}: cannot parse {raw!r}") from None
        return cls(**{**asdict(cfg), **updates})

    def train_config(self, model: str) -> clf.TrainConfig:
        return clf.TrainConfig(
            model=model,
            k_folds=self.k,
            max_epochs=self.max_epochs,
            learning_rate=self.learning_rate,
            l2_reg=self.l2_reg,
            hidden_units=self.hidden_units,
            seed=self.seed,
            tolerance=self.tolerance,
        )

    def policy(self) -> RenamePolicy:
        kwargs = {"seed": self.rename_seed}
        if self.keep_comments:
            kwargs["comments"] = KEEP
        if self.keep_strings:
            kwargs["scrub_strings"] = KEEP
        return RenamePolicy(**kwargs)

    def kinds(self) -> list[str]:
        kinds = [k for k in self.embedders if k != EXTERNAL]
        if self.external_original:
            kinds.append(EXTERNAL)
        return kinds

    def validate(self) -> None:
        if not self.manifest or not Path(self.manifest).is_file():
            raise DataError(f"manifest not found: {self.manifest or '(unset)'}")
        if not self.root or not Path(self.root).is_dir():
            raise DataError(f"corpus root not found: {self.root or '(unset)'}")
        for kind in self.embedders:
            if kind not in (LEXICAL, STRUCTURAL, EXTERNAL):
                raise DataError(f"unknown embedder {kind!r}")
        if EXTERNAL in self.embedders and not self.external_original:
            raise DataError("embedder 'external' needs external_original")
        for path in (self.external_original, self.external_obfuscated):
            if path and not Path(path).is_file():
                raise DataError(f"embedding file not found: {path}")
        for model in self.models:
            self.train_config(model)
        if not self.kinds():
            raise DataError("no embedders configured")


def parse_config_text(text: str) -> dict[str, str]:
    """Flat ``key = value`` lines; ``#`` starts a comment line."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise DataError(f"config line {lineno}: expected key = value")
        key, value = line.split("=", 1)
        values[key.strip()] = value.strip()
    return values


def load_config(path: str | Path) -> PipelineConfig:
    p = Path(path)
    if not p.is_file():
        raise DataError(f"config file not found: {p}")
    return PipelineConfig.from_mapping(parse_config_text(p.read_text(encoding="utf-8")))


class StageError(ObfubenchError):
    """A pipeline stage failed; ``cause`` keeps the original error for exit-code mapping."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage {stage} failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class PipelineResult:
    out_dir: Path
    summary: dict = field(default_factory=dict)
    failures: dict[str, str] = field(default_factory=dict)

    @property
    def exit_code(self) -> int:
        return 0 if not self.failures else 2


def sha256_file(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _dump(path: Path, obj: Any) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2) + "\n", encoding="utf-8")


def _labels_of(vectors: Sequence[FeatureVector]) -> list[str]:
    return [fv.label for fv in vectors]


def _fold_predictions(
    cv: clf.CrossValidation, originals: Sequence[FeatureVector], vectors: Sequence[FeatureVector]
) -> list[str]:
    """Score each fold's held-out rows of ``vectors`` with that fold's model."""
    if [fv.source_id for fv in originals] != [fv.source_id for fv in vectors]:
        raise InvariantError("obfuscated corpus does not line up with the original")
    X = stack(vectors)
    preds = [""] * len(vectors)
    for (_, test_idx), model in zip(cv.folds, cv.models):
        for row, label in zip(test_idx, clf.predict_matrix(model, X[test_idx])):
            preds[row] = label
    return preds


class _Runner:
    def __init__(self, config: PipelineConfig):
        self.cfg = config
        self.out = Path(config.out)
        self.summary: dict[str, Any] = {"config": asdict(config), "stage1": {}, "stage2": {}, "paired": {}}

    def stage(self, name: str, fn, *args):
        log.info("stage %s", name)
        try:
            return fn(*args)
        except (ObfubenchError, OSError) as exc:
            raise StageError(name, exc) from exc

    # -- stage 1 ---------------------------------------------------------
    def ingest(self) -> Corpus:
        corpus = load_corpus(self.cfg.root, self.cfg.manifest, self.cfg.labels)
        _dump(
            self.out / "corpus.json",
            {
                "size": len(corpus),
                "ignored": len(corpus.ignored),
                "label_counts": corpus.label_counts(),
                "entries": [
                    {"id": e.id, "label": e.label, "sha256": hashlib.sha256(e.text).hexdigest()}
                    for e in corpus.entries
                ],
            },
        )
        _dump(self.out / "leakage_original.json", detect_leakage(corpus).to_dict())
        return corpus

    def embed(self, corpus: Corpus, kind: str, external: str, tag: str) -> list[FeatureVector]:
        if kind == EXTERNAL:
            vectors = import_embeddings(external, corpus)
        else:
            vectors = embed_corpus(corpus, EmbedderConfig(kind, self.cfg.dim, self.cfg.hash_seed))
        write_vectors(vectors, self.out / "features" / f"{kind}_{tag}.jsonl")
        return vectors

    def train(self, kind: str, model: str, vectors: list[FeatureVector], labels: list[str]) -> clf.CrossValidation:
        tc = self.cfg.train_config(model)
        cv = clf.cross_validate(vectors, tc, labels)
        truths = _labels_of(vectors)
        cm = confusion(truths, cv.predictions, labels)
        report = metrics(cm)
        base = self.out / "stage1" / kind / model
        base.mkdir(parents=True, exist_ok=True)
        clf.save_model(cv.last_model, base / "model.json", tc)
        _dump(base / "cv_report.json", report_to_dict(cm, report, stage="cross-validation", k=tc.k_folds))
        per_fold = []
        for (_, test_idx), m in zip(cv.folds, cv.models):
            fold_cm = confusion([truths[i] for i in test_idx], [cv.predictions[i] for i in test_idx], labels)
            fold_report = metrics(fold_cm)
            per_fold.append(
                {"test_ids": [vectors[i].source_id for i in test_idx], "epochs": m.epochs_run, **fold_report.summary()}
            )
        _dump(base / "folds.json", per_fold)
        self.summary["stage1"].setdefault(kind, {})[model] = report.summary()
        return cv

    # -- stage 2 ---------------------------------------------------------
    def sample(self, corpus: Corpus, held_out: list[str]) -> Corpus:
        pool = corpus.subset(held_out)
        lo, hi = self.cfg.sample_min, self.cfg.sample_max
        labels = [lab for lab in corpus.label_set if corpus.label_counts()[lab] > 0]
        try:
            subset = stratified_sample(pool, (lo, hi), self.cfg.seed, labels)
            source = "last-fold held-out files"
        except DataError as exc:
            log.warning("%s; sampling from the whole corpus instead", exc)
            subset = stratified_sample(corpus, (lo, hi), self.cfg.seed, labels)
            source = "whole corpus"
        stage2 = self.out / "stage2"
        stage2.mkdir(parents=True, exist_ok=True)
        (stage2 / "sample.csv").write_text(
            format_manifest((e.path, e.label) for e in subset.entries), encoding="utf-8"
        )
        self.summary["stage2"]["sample_size"] = len(subset)
        self.summary["stage2"]["sample_source"] = source
        return subset

    def obfuscate(self, corpus: Corpus, where: Path) -> Corpus:
        result = obfuscate_corpus(corpus, self.cfg.policy(), project_scope=self.cfg.project_scope)
        if result.failures:
            _dump(where / "failures.json", result.failures)
            raise DataError(
                f"{len(result.failures)} file(s) failed to obfuscate: " + ", ".join(sorted(result.failures))
            )
        result.corpus.write(where / "obfuscated")
        (where / "mapping.txt").write_text(result.mapping, encoding="utf-8")
        _dump(where / "leakage_obfuscated.json", detect_leakage(result.corpus).to_dict())
        return result.corpus

    def score(self, path: Path, cm: ConfusionMatrix, report: MetricsReport, **extra) -> None:
        _dump(path, report_to_dict(cm, report, **extra))

    def robustness(self, where: Path, baseline, obfuscated) -> dict:
        rob = robustness_report(baseline, obfuscated)
        _dump(where / "robustness.json", rob.to_dict())
        (where / "robustness.txt").write_text(rob.format_text(), encoding="utf-8")
        return {"baseline": rob.baseline.summary(), "obfuscated": rob.obfuscated.summary(), "deltas": rob.deltas,
                "drift": rob.drift[:3]}  # fmt: skip

    # -- driver ----------------------------------------------------------
    def run(self) -> PipelineResult:
        cfg = self.cfg
        if self.out.exists():
            shutil.rmtree(self.out)
        self.out.mkdir(parents=True)
        corpus = self.stage("ingest", self.ingest)
        labels = [lab for lab in corpus.label_set if corpus.label_counts()[lab] > 0]

        originals: dict[str, list[FeatureVector]] = {}
        cvs: dict[tuple[str, str], clf.CrossValidation] = {}
        for kind in cfg.kinds():
            originals[kind] = self.stage("embed", self.embed, corpus, kind, cfg.external_original, "original")
            for model in cfg.models:
                cvs[kind, model] = self.stage("train", self.train, kind, model, originals[kind], labels)

        first = next(iter(cvs.values()))
        first_kind = next(iter(originals))
        held_out = [originals[first_kind][i].source_id for i in first.folds[-1][1]]
        subset = self.stage("sample", self.sample, corpus, held_out)
        obf_subset = self.stage("obfuscate", self.obfuscate, subset, self.out / "stage2")

        for kind in cfg.kinds():
            if kind == EXTERNAL:
                if not cfg.external_obfuscated:
                    continue
                vectors = self.stage("embed", self.embed, corpus, kind, cfg.external_obfuscated, "obfuscated_sample")
            else:
                vectors = self.stage("embed", self.embed, obf_subset, kind, "", "obfuscated_sample")
            for model in cfg.models:
                cv = cvs[kind, model]
                cm, report = self.stage("evaluate", evaluate, cv.last_model, vectors)
                where = self.out / "stage2" / kind / model
                self.score(where / "report.json", cm, report, stage="obfuscated-sample")
                base_cm = confusion(_labels_of(originals[kind]), cv.predictions, cm.labels)
                summary = self.stage("report", self.robustness, where, (base_cm, metrics(base_cm)), (cm, report))
                self.summary["stage2"].setdefault(kind, {})[model] = summary

        if cfg.paired:
            obf_full = self.stage("obfuscate", self.obfuscate, corpus, self.out / "paired")
            for kind in cfg.kinds():
                if kind == EXTERNAL:
                    continue
                vectors = self.stage("embed", self.embed, obf_full, kind, "", "obfuscated_full")
                truths = _labels_of(vectors)
                for model in cfg.models:
                    cv = cvs[kind, model]
                    preds = _fold_predictions(cv, originals[kind], vectors)
                    where = self.out / "paired" / kind / model
                    base_cm = confusion(_labels_of(originals[kind]), cv.predictions, labels)
                    obf_cm = confusion(truths, preds, labels)
                    self.score(where / "cv_obfuscated.json", obf_cm, metrics(obf_cm), stage="paired-cross-validation")
                    summary = self.stage(
                        "report", self.robustness, where, (base_cm, metrics(base_cm)), (obf_cm, metrics(obf_cm))
                    )
                    self.summary["paired"].setdefault(kind, {})[model] = summary

        self.write_summary()
        return PipelineResult(self.out, self.summary)

    def write_summary(self) -> None:
        _dump(self.out / "summary.json", self.summary)
        lines = []
        for section, title in (("stage1", "stage 1: cross-validation on original files"),
                               ("stage2", "stage 2: last-fold models on the obfuscated sample"),
                               ("paired", "paired: held-out files, original vs obfuscated")):  # fmt: skip
            block = self.summary.get(section, {})
            rows = []
            for kind, per_model in block.items():
                if not isinstance(per_model, dict):
                    continue
                for model, s in per_model.items():
                    if section == "stage1":
                        rows.append((f"{kind}/{model}", s["weighted_f1"], None))
                    else:
                        rows.append((f"{kind}/{model}", s["baseline"]["weighted_f1"], s["obfuscated"]["weighted_f1"]))
            if not rows:
                continue
            lines.append(title)
            for name, base, obf in rows:
                tail = f"  ->  {obf:.3f}  (delta {obf - base:+.3f})" if obf is not None else ""
                lines.append(f"  {name:<22} weighted F1 {base:.3f}{tail}")
            lines.append("")
        (self.out / "summary.txt").write_text("\n".join(lines), encoding="utf-8")
        write_artifact_manifest(self.out)


def write_artifact_manifest(out: Path) -> dict[str, str]:
    hashes = {
        p.relative_to(out).as_posix(): sha256_file(p)
        for p in sorted(out.rglob("*"))
        if p.is_file() and p.name != "artifacts.json"
    }
    _dump(out / "artifacts.json", hashes)
    return hashes


def run_pipeline(config: PipelineConfig) -> PipelineResult:
    """Run both stages; raises :class:`DataError` for bad config, :class:`StageError` on stage failure.

    Artifacts written before a failure are kept for debugging.
    """
    config.validate()
    return _Runner(config).run()


__all__ = [
    "PipelineConfig",
    "PipelineResult",
    "SEED_ENV",
    "StageError",
    "env_seed",
    "load_config",
    "parse_config_text",
    "run_pipeline",
    "write_artifact_manifest",
]
