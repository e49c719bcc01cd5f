"""Command-line entry point: one subcommand per stage plus ``pipeline``.

Exit codes: 0 ok, 1 usage, 2 data error, 3 internal invariant violation.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

from obfubench import __version__
from obfubench import classifiers as clf
from obfubench.corpus import DEFAULT_LABELS, format_manifest, load_corpus, stratified_sample
from obfubench.errors import DataError, InvariantError, ObfubenchError
from obfubench.evaluation import (
    confusion,
    detect_leakage,
    evaluate,
    format_metrics_table,
    load_report,
    metrics,
    robustness_report,
    save_report,
)
from obfubench.features import (
    DEFAULT_DIM,
    LEXICAL,
    STRUCTURAL,
    EmbedderConfig,
    embed_corpus,
    import_embeddings,
    read_vectors,
    write_vectors,
)
from obfubench.lexer import dump_tsv, token_structure_signature, tokenize
from obfubench.pipeline import PipelineConfig, StageError, env_seed, parse_config_text, run_pipeline
from obfubench.renamer import KEEP, PLACEHOLDER, STRIP, RenamePolicy, obfuscate_corpus
from obfubench.synth import generate_synthetic_corpus

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INVARIANT = 0, 1, 2, 3

class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _seed(args) -> int:
    return args.seed if args.seed is not None else env_seed()


def _labels(args) -> tuple[str, ...]:
    if not getattr(args, "labels", None):
        return DEFAULT_LABELS
    return tuple(lab.strip() for lab in args.labels.split(",") if lab.strip())


def _corpus(args):
    return load_corpus(args.root, args.manifest, _labels(args))


def _write_or_print(text: str, out: str | None) -> None:
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------------------
# subcommands


def cmd_ingest(args) -> int:
    corpus = _corpus(args)
    print(f"{len(corpus)} files, {len(corpus.ignored)} unlisted .java files ignored")
    for label, n in corpus.label_counts().items():
        print(f"  {label:<20} {n}")
    return EXIT_OK


def cmd_sample(args) -> int:
    corpus = _corpus(args)
    subset = stratified_sample(corpus, (args.min, args.max), _seed(args))
    _write_or_print(format_manifest((e.path, e.label) for e in subset.entries), args.out)
    return EXIT_OK


def cmd_obfuscate(args) -> int:
    corpus = _corpus(args)
    policy = RenamePolicy(
        seed=_seed(args),
        comments=KEEP if args.keep_comments else STRIP,
        scrub_strings=KEEP if args.keep_strings else PLACEHOLDER,
    )
    result = obfuscate_corpus(corpus, policy, project_scope=args.project_scope)
    result.corpus.write(args.out)
    Path(args.mapping_out).parent.mkdir(parents=True, exist_ok=True)
    Path(args.mapping_out).write_text(result.mapping, encoding="utf-8")
    print(f"obfuscated {len(result.corpus)} of {len(corpus)} files into {args.out}")
    for ident, reason in sorted(result.failures.items()):
        print(f"failed: {ident}: {reason}", file=sys.stderr)
    return EXIT_DATA if result.failures else EXIT_OK


def cmd_leakage(args) -> int:
    report = detect_leakage(_corpus(args))
    print(f"leakage rate {report.rate:.3f} over {len(report.files)} files")
    for label, rate in report.per_label().items():
        print(f"  {label:<20} {rate:.3f}")
    if args.out:
        _write_or_print(json.dumps(report.to_dict(), indent=2) + "\n", args.out)
    return EXIT_OK


def cmd_lex(args) -> int:
    path = Path(args.file)
    if not path.is_file():
        raise DataError(f"file not found: {path}")
    tokens = tokenize(path.read_bytes())
    if args.signature:
        print(token_structure_signature(tokens))
    else:
        sys.stdout.write(dump_tsv(tokens))
    return EXIT_OK


def cmd_embed(args) -> int:
    corpus = _corpus(args)
    vectors = embed_corpus(corpus, EmbedderConfig(args.kind, args.dim, args.hash_seed))
    write_vectors(vectors, args.out)
    print(f"wrote {len(vectors)} {args.kind} vectors (dim {args.dim}) to {args.out}")
    return EXIT_OK


def cmd_import_embeddings(args) -> int:
    if bool(args.root) != bool(args.manifest):
        raise UsageError("--root and --manifest go together")
    if args.root:
        vectors = import_embeddings(args.file, _corpus(args))
    else:
        vectors = read_vectors(args.file)
    dim = vectors[0].dim if vectors else 0
    print(f"{len(vectors)} vectors, dim {dim}")
    if args.out:
        write_vectors(vectors, args.out)
    return EXIT_OK


def _labelled(path: str):
    vectors = read_vectors(path)
    missing = [fv.source_id for fv in vectors if fv.label is None]
    if missing:
        raise DataError(f"{path}: {len(missing)} vector(s) without a label, e.g. {missing[0]}")
    return vectors


def cmd_train(args) -> int:
    vectors = _labelled(args.features)
    config = clf.TrainConfig(
        model=args.model,
        k_folds=args.k,
        max_epochs=args.epochs,
        learning_rate=args.lr,
        l2_reg=args.l2,
        hidden_units=args.hidden,
        seed=_seed(args),
    )
    labels = sorted({fv.label for fv in vectors})
    cv = clf.cross_validate(vectors, config, labels)
    cm = confusion([fv.label for fv in vectors], cv.predictions, labels)
    report = metrics(cm)
    clf.save_model(cv.last_model, args.out, config)
    if args.all_folds:
        out = Path(args.out)
        for i, model in enumerate(cv.models, start=1):
            clf.save_model(model, out.with_name(f"{out.stem}.fold{i}{out.suffix}"), config)
    if args.report:
        save_report(args.report, cm, report, stage="cross-validation", k=args.k)
    sys.stdout.write(format_metrics_table([(f"{args.model} ({args.k}-fold)", report)]))
    return EXIT_OK


def cmd_evaluate(args) -> int:
    model = clf.load_model(args.model)
    cm, report = evaluate(model, _labelled(args.features))
    if args.report:
        save_report(args.report, cm, report, stage="evaluation")
    sys.stdout.write(format_metrics_table([(Path(args.features).name, report)]))
    return EXIT_OK


def cmd_report(args) -> int:
    rob = robustness_report(load_report(args.baseline), load_report(args.obfuscated))
    sys.stdout.write(rob.format_text())
    if args.out:
        _write_or_print(json.dumps(rob.to_dict(), indent=2) + "\n", args.out)
    return EXIT_OK


def cmd_synth(args) -> int:
    corpus, manifest = generate_synthetic_corpus(args.per_label, _seed(args), args.out)
    print(f"wrote {len(corpus)} files and {manifest}")
    return EXIT_OK


_PIPELINE_FLAGS = (
    "root",
    "manifest",
    "out",
    "seed",
    "k",
    "dim",
    "models",
    "embedders",
    "external_original",
    "external_obfuscated",
)


def pipeline_config(args) -> PipelineConfig:
    """Defaults, then the seed env var, then the config file, then flags."""
    values: dict[str, object] = {"seed": env_seed()}
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise DataError(f"config file not found: {path}")
        values.update(parse_config_text(path.read_text(encoding="utf-8")))
    for flag in _PIPELINE_FLAGS:
        value = getattr(args, flag)
        if value is not None:
            values[flag] = value
    for flag in ("keep_comments", "keep_strings", "project_scope"):
        if getattr(args, flag):
            values[flag] = True
    if args.no_paired:
        values["paired"] = False
    return PipelineConfig.from_mapping({k: v if isinstance(v, str) else str(v) for k, v in values.items()})


def cmd_pipeline(args) -> int:
    config = pipeline_config(args)
    result = run_pipeline(config)
    sys.stdout.write((result.out_dir / "summary.txt").read_text(encoding="utf-8"))
    print(f"artifacts in {result.out_dir}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _corpus_args(p: argparse.ArgumentParser, required: bool = True) -> None:
    p.add_argument("--root", required=required, help="corpus root directory")
    p.add_argument("--manifest", required=required, help="CSV manifest with path,label columns")
    p.add_argument("--labels", help="comma-separated label set (default: 13 GoF patterns + Unknown)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="obfubench", description="Name-obfuscation robustness benchmark for Java pattern detectors.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("ingest", help="load and validate a corpus")
    _corpus_args(p)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("sample", help="stratified per-label sample, printed as a manifest")
    _corpus_args(p)
    p.add_argument("--min", type=int, default=2)
    p.add_argument("--max", type=int, default=3)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="write the manifest here instead of stdout")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("obfuscate", help="rename identifiers and scrub literals")
    _corpus_args(p)
    p.add_argument("--out", required=True, help="output directory for obfuscated files")
    p.add_argument("--mapping-out", required=True, help="mapping file path")
    p.add_argument("--seed", type=int)
    p.add_argument("--keep-comments", action="store_true")
    p.add_argument("--keep-strings", action="store_true")
    p.add_argument("--project-scope", action="store_true", help="share one rename map per top-level directory")
    p.set_defaults(func=cmd_obfuscate)

    p = sub.add_parser("leakage", help="report files whose label name appears in the source")
    _corpus_args(p)
    p.add_argument("--out", help="also write the JSON report here")
    p.set_defaults(func=cmd_leakage)

    p = sub.add_parser("lex", help="tokenize one file")
    p.add_argument("file")
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--dump", action="store_true", help="TSV of kind, start, end, escaped lexeme (default)")
    mode.add_argument("--signature", action="store_true", help="print the token structure signature")
    p.set_defaults(func=cmd_lex)

    p = sub.add_parser("embed", help="compute built-in feature vectors")
    _corpus_args(p)
    p.add_argument("--kind", choices=(LEXICAL, STRUCTURAL), default=LEXICAL)
    p.add_argument("--dim", type=int, default=DEFAULT_DIM)
    p.add_argument("--hash-seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output JSONL file")
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("import-embeddings", help="validate externally produced vectors")
    p.add_argument("--file", required=True, help="JSONL with id and vector fields")
    _corpus_args(p, required=False)
    p.add_argument("--out", help="write the labelled vectors here")
    p.set_defaults(func=cmd_import_embeddings)

    p = sub.add_parser("train", help="k-fold cross-validate and save the last-fold model")
    p.add_argument("--features", required=True)
    p.add_argument("--model", choices=clf.MODEL_KINDS, default=clf.LOGREG)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int, default=1000)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--l2", type=float, default=1e-4)
    p.add_argument("--hidden", type=int, default=100)
    p.add_argument("--out", required=True, help="model JSON path")
    p.add_argument("--report", help="also write the pooled cross-validation report")
    p.add_argument("--all-folds", action="store_true", help="also save every fold's model as <out>.foldN.json")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a saved model on labelled vectors")
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--report", help="metrics report JSON path")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", help="compare a baseline and an obfuscated metrics report")
    p.add_argument("--baseline", required=True)
    p.add_argument("--obfuscated", required=True)
    p.add_argument("--out", help="also write the JSON comparison here")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("synth", help="write the synthetic demo corpus")
    p.add_argument("--per-label", type=int, default=10)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("pipeline", help="run both stages end to end")
    p.add_argument("--config", help="key = value config file; flags override it")
    p.add_argument("--root")
    p.add_argument("--manifest")
    p.add_argument("--out")
    p.add_argument("--seed", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--dim", type=int)
    p.add_argument("--models", help="comma-separated subset of svm,logreg,mlp")
    p.add_argument("--embedders", help="comma-separated subset of lexical,structural")
    p.add_argument("--external-original", help="JSONL vectors for the original corpus")
    p.add_argument("--external-obfuscated", help="JSONL vectors for the obfuscated sample")
    p.add_argument("--keep-comments", action="store_true")
    p.add_argument("--keep-strings", action="store_true")
    p.add_argument("--project-scope", action="store_true")
    p.add_argument("--no-paired", action="store_true", help="skip the whole-corpus paired comparison")
    p.set_defaults(func=cmd_pipeline)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"obfubench: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except StageError as exc:
        print(f"obfubench: {exc}", file=sys.stderr)
        return EXIT_INVARIANT if isinstance(exc.cause, InvariantError) else EXIT_DATA
    except InvariantError as exc:
        print(f"obfubench: internal error: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (ObfubenchError, OSError) as exc:
        print(f"obfubench: {exc}", file=sys.stderr)
        return EXIT_DATA


__all__ = ["build_parser", "main", "pipeline_config"]
