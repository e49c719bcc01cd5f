"""Metrics, robustness comparison and label-leakage scanning."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from obfubench.classifiers import Model, predict
from obfubench.corpus import Corpus
from obfubench.errors import DataError, LexError
from obfubench.features import FeatureVector, split_subtokens
from obfubench.lexer import BLOCK_COMMENT, IDENTIFIER, LINE_COMMENT, STRING, tokenize

REPORT_FORMAT = "obfubench-metrics"
ROBUSTNESS_FORMAT = "obfubench-robustness"
REPORT_VERSION = 1

SUMMARY_METRICS = (
    "accuracy",
    "macro_precision",
    "macro_recall",
    "macro_f1",
    "weighted_precision",
    "weighted_recall",
    "weighted_f1",
)


@dataclass
class ConfusionMatrix:
    labels: list[str]
    counts: np.ndarray  # rows = true label, columns = predicted label

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def to_dict(self) -> dict:
        return {"labels": list(self.labels), "counts": self.counts.astype(int).tolist()}

    @classmethod
    def from_dict(cls, doc: dict) -> "ConfusionMatrix":
        counts = np.asarray(doc["counts"], dtype=np.int64)
        labels = list(doc["labels"])
        if counts.shape != (len(labels), len(labels)):
            raise DataError("confusion matrix shape does not match its labels")
        return cls(labels, counts)


def confusion(
    true_labels: Sequence[str],
    predicted_labels: Sequence[str],
    labels: Sequence[str] | None = None,
) -> ConfusionMatrix:
    if len(true_labels) != len(predicted_labels):
        raise DataError("true and predicted label lists differ in length")
    if not true_labels:
        raise DataError("cannot build a confusion matrix from no samples")
    if labels is None:
        labels = sorted(set(true_labels) | set(predicted_labels))
    index = {lab: i for i, lab in enumerate(labels)}
    counts = np.zeros((len(labels), len(labels)), dtype=np.int64)
    for t, p in zip(true_labels, predicted_labels):
        if t not in index or p not in index:
            raise DataError(f"label outside label set: {t if t not in index else p!r}")
        counts[index[t], index[p]] += 1
    return ConfusionMatrix(list(labels), counts)


@dataclass
class MetricsReport:
    labels: list[str]
    accuracy: float
    precision: list[float]
    recall: list[float]
    f1: list[float]
    support: list[int]
    macro_precision: float
    macro_recall: float
    macro_f1: float
    weighted_precision: float
    weighted_recall: float
    weighted_f1: float
    n_samples: int
    # (label, metric) pairs whose denominator was zero and were reported as 0
    zero_division: list[tuple[str, str]] = field(default_factory=list)

    def summary(self) -> dict[str, float]:
        return {name: getattr(self, name) for name in SUMMARY_METRICS}

    def to_dict(self) -> dict:
        return {
            "n_samples": self.n_samples,
            "summary": self.summary(),
            "per_class": {
                lab: {
                    "precision": self.precision[i],
                    "recall": self.recall[i],
                    "f1": self.f1[i],
                    "support": self.support[i],
                }
                for i, lab in enumerate(self.labels)
            },
            "zero_division": [list(z) for z in self.zero_division],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "MetricsReport":
        per = doc["per_class"]
        labels = list(per)
        s = doc["summary"]
        return cls(
            labels,
            float(s["accuracy"]),
            [float(per[lab]["precision"]) for lab in labels],
            [float(per[lab]["recall"]) for lab in labels],
            [float(per[lab]["f1"]) for lab in labels],
            [int(per[lab]["support"]) for lab in labels],
            *(float(s[name]) for name in SUMMARY_METRICS[1:]),
            n_samples=int(doc["n_samples"]),
            zero_division=[tuple(z) for z in doc.get("zero_division", [])],
        )


def _ratio(num: float, den: float) -> tuple[float, bool]:
    return (num / den, False) if den > 0 else (0.0, True)


def metrics(matrix: ConfusionMatrix) -> MetricsReport:
    """Per-class and averaged precision/recall/F1.

    Macro averages run over classes with nonzero support; weighted averages
    weight by support. Zero denominators yield 0 and are listed in
    ``zero_division``.
    """
    counts = matrix.counts.astype(float)
    total = counts.sum()
    if total <= 0:
        raise DataError("metrics need at least one sample")
    diag = np.diag(counts)
    col = counts.sum(axis=0)
    row = counts.sum(axis=1)
    precision, recall, f1, flags = [], [], [], []
    for i, lab in enumerate(matrix.labels):
        p, zp = _ratio(diag[i], col[i])
        r, zr = _ratio(diag[i], row[i])
        f, zf = _ratio(2 * p * r, p + r)
        for name, flagged in (("precision", zp), ("recall", zr), ("f1", zf)):
            if flagged:
                flags.append((lab, name))
        precision.append(p)
        recall.append(r)
        f1.append(f)
    support = row.astype(int)
    present = support > 0
    weights = row / total

    def macro(values: list[float]) -> float:
        return float(np.mean(np.asarray(values)[present]))

    def weighted(values: list[float]) -> float:
        return float(np.dot(np.asarray(values), weights))

    return MetricsReport(
        labels=list(matrix.labels),
        accuracy=float(diag.sum() / total),
        precision=precision,
        recall=recall,
        f1=f1,
        support=support.tolist(),
        macro_precision=macro(precision),
        macro_recall=macro(recall),
        macro_f1=macro(f1),
        weighted_precision=weighted(precision),
        weighted_recall=weighted(recall),
        weighted_f1=weighted(f1),
        n_samples=int(total),
        zero_division=flags,
    )


def micro_scores(matrix: ConfusionMatrix) -> tuple[float, float]:
    """Micro-averaged (precision, recall); both equal accuracy for single-label data."""
    counts = matrix.counts.astype(float)
    tp = np.diag(counts).sum()
    fp = (counts.sum(axis=0) - np.diag(counts)).sum()
    fn = (counts.sum(axis=1) - np.diag(counts)).sum()
    return float(tp / (tp + fp)), float(tp / (tp + fn))


def evaluation_labels(model: Model, truths: Sequence[str]) -> list[str]:
    extra = sorted(set(truths) - set(model.labels))
    return list(model.labels) + extra


def evaluate(model: Model, vectors: Sequence[FeatureVector]) -> tuple[ConfusionMatrix, MetricsReport]:
    truths = [fv.label for fv in vectors]
    if any(t is None for t in truths):
        raise DataError("evaluation vectors must be labeled")
    preds = predict(model, vectors)
    cm = confusion(truths, preds, evaluation_labels(model, truths))
    return cm, metrics(cm)


# ---------------------------------------------------------------------------
# reports


def report_to_dict(matrix: ConfusionMatrix, report: MetricsReport, **extra) -> dict:
    doc = {"format": REPORT_FORMAT, "version": REPORT_VERSION}
    doc.update(extra)
    doc["metrics"] = report.to_dict()
    doc["confusion"] = matrix.to_dict()
    return doc


def save_report(path: str | Path, matrix: ConfusionMatrix, report: MetricsReport, **extra) -> None:
    Path(path).write_text(json.dumps(report_to_dict(matrix, report, **extra), indent=2) + "\n", encoding="utf-8")


def load_report(path: str | Path) -> tuple[ConfusionMatrix, MetricsReport]:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read report {path}: {exc}") from None
    if doc.get("format") != REPORT_FORMAT:
        raise DataError(f"{path} is not a metrics report")
    if doc.get("version") != REPORT_VERSION:
        raise DataError(f"{path}: unsupported report version {doc.get('version')}")
    return ConfusionMatrix.from_dict(doc["confusion"]), MetricsReport.from_dict(doc["metrics"])


def format_metrics_table(rows: Sequence[tuple[str, MetricsReport]], weighted: bool = True) -> str:
    """Column-aligned text table (accuracy, precision, recall, F1) at 3 decimals."""
    mode = "weighted" if weighted else "macro"
    header = ("name", "n", "accuracy", "precision", "recall", "f1")
    body = [
        (
            name,
            str(r.n_samples),
            f"{r.accuracy:.3f}",
            f"{getattr(r, mode + '_precision'):.3f}",
            f"{getattr(r, mode + '_recall'):.3f}",
            f"{getattr(r, mode + '_f1'):.3f}",
        )
        for name, r in rows
    ]
    widths = [max(len(line[i]) for line in [header, *body]) for i in range(len(header))]
    fmt = lambda line: "  ".join(  # noqa: E731
        c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(line, widths))
    )
    return "\n".join([f"[{mode} averages]", fmt(header), *map(fmt, body)]) + "\n"


@dataclass
class RobustnessReport:
    baseline: MetricsReport
    obfuscated: MetricsReport
    deltas: dict[str, float]
    # (predicted label, share of all obfuscated predictions), descending
    drift: list[tuple[str, float]]

    def to_dict(self) -> dict:
        return {
            "format": ROBUSTNESS_FORMAT,
            "version": REPORT_VERSION,
            "headline": "weighted_f1",
            "baseline": self.baseline.to_dict(),
            "obfuscated": self.obfuscated.to_dict(),
            "deltas": self.deltas,
            "drift": [[lab, share] for lab, share in self.drift],
        }

    def format_text(self) -> str:
        lines = [f"{'metric':<20}{'baseline':>10}{'obfuscated':>12}{'delta':>10}"]
        for name in SUMMARY_METRICS:
            b = getattr(self.baseline, name)
            o = getattr(self.obfuscated, name)
            lines.append(f"{name:<20}{b:>10.3f}{o:>12.3f}{self.deltas[name]:>+10.3f}")
        lines.append("")
        lines.append("prediction drift on obfuscated inputs:")
        lines.extend(f"  {lab:<20}{share:>7.3f}" for lab, share in self.drift if share > 0)
        return "\n".join(lines) + "\n"


def robustness_report(
    baseline: tuple[ConfusionMatrix, MetricsReport],
    obfuscated: tuple[ConfusionMatrix, MetricsReport],
) -> RobustnessReport:
    base_cm, base = baseline
    obf_cm, obf = obfuscated
    if base_cm.labels != obf_cm.labels:
        raise DataError("baseline and obfuscated reports use different label sets")
    deltas = {name: getattr(obf, name) - getattr(base, name) for name in SUMMARY_METRICS}
    shares = obf_cm.counts.sum(axis=0) / max(obf_cm.total, 1)
    order = sorted(range(len(obf_cm.labels)), key=lambda i: (-shares[i], i))
    drift = [(obf_cm.labels[i], float(shares[i])) for i in order]
    return RobustnessReport(base, obf, deltas, drift)


# ---------------------------------------------------------------------------
# label leakage


def default_lexicon(labels: Sequence[str]) -> dict[str, list[str]]:
    lexicon = {}
    for lab in labels:
        low = lab.lower()
        lexicon[lab] = list(dict.fromkeys([low, low.replace(" ", "")]))
    return lexicon


def _words(text: str) -> list[str]:
    words = []
    for chunk in re.findall(r"[A-Za-z0-9_$]+|[^\W\d_]+", text):
        words.extend(split_subtokens(chunk))
    return words


def _contains(words: list[str], trigger: str) -> bool:
    """Trigger matches a run of consecutive subtokens (spaces in it are ignored)."""
    target = trigger.replace(" ", "")
    if not target:
        return False
    for i in range(len(words)):
        acc = ""
        for w in words[i:]:
            acc += w
            if acc == target:
                return True
            if not target.startswith(acc):
                break
    return False


@dataclass
class FileLeak:
    id: str
    label: str
    channels: list[str]

    @property
    def flagged(self) -> bool:
        return bool(self.channels)


@dataclass
class LeakageReport:
    files: list[FileLeak]

    @property
    def rate(self) -> float:
        return sum(f.flagged for f in self.files) / len(self.files) if self.files else 0.0

    def per_label(self) -> dict[str, float]:
        groups: dict[str, list[FileLeak]] = {}
        for f in self.files:
            groups.setdefault(f.label, []).append(f)
        return {lab: sum(f.flagged for f in fs) / len(fs) for lab, fs in sorted(groups.items())}

    def to_dict(self) -> dict:
        return {
            "rate": self.rate,
            "per_label": self.per_label(),
            "files": [{"id": f.id, "label": f.label, "flagged": f.flagged, "channels": f.channels} for f in self.files],
        }


_CHANNELS = {IDENTIFIER: "identifier", STRING: "string_literal", LINE_COMMENT: "comment", BLOCK_COMMENT: "comment"}


def detect_leakage(corpus: Corpus, lexicon: dict[str, list[str]] | None = None) -> LeakageReport:
    """Flag files whose own label name shows up in identifiers, strings or comments."""
    lexicon = lexicon or default_lexicon(corpus.label_set)
    files = []
    for e in corpus.entries:
        triggers = lexicon.get(e.label, [])
        channels: list[str] = []
        try:
            tokens = tokenize(e.text)
        except LexError:
            # unlexable file: scan it as one undifferentiated chunk
            if any(_contains(_words(e.source), trig.lower()) for trig in triggers):
                channels.append("raw_text")
            files.append(FileLeak(e.id, e.label, channels))
            continue
        for tok in tokens:
            channel = _CHANNELS.get(tok.kind)
            if channel is None or channel in channels:
                continue
            words = split_subtokens(tok.lexeme) if tok.kind == IDENTIFIER else _words(tok.lexeme)
            if any(_contains(words, trig.lower()) for trig in triggers):
                channels.append(channel)
        files.append(FileLeak(e.id, e.label, channels))
    return LeakageReport(files)
