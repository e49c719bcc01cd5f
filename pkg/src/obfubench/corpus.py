"""Labeled Java corpora: manifest loading and stratified sampling."""

from __future__ import annotations

import csv
import io
import posixpath
import random
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from obfubench.errors import DataError

# Stand-in list: the 13 GoF patterns of the reference corpus are not enumerated
# anywhere public, so override with --labels when the real manifest is known.
DEFAULT_LABELS: tuple[str, ...] = (
    "Singleton",
    "Factory Method",
    "Abstract Factory",
    "Builder",
    "Prototype",
    "Adapter",
    "Decorator",
    "Facade",
    "Proxy",
    "Observer",
    "Strategy",
    "Template Method",
    "Visitor",
    "Unknown",
)

UNKNOWN = "Unknown"


def validate_label_set(labels: Iterable[str]) -> tuple[str, ...]:
    result = tuple(labels)
    if any(not lab.strip() for lab in result):
        raise DataError("label set contains an empty label")
    dupes = [lab for lab, n in Counter(result).items() if n > 1]
    if dupes:
        raise DataError(f"duplicate labels in label set: {', '.join(dupes)}")
    if UNKNOWN not in result:
        raise DataError(f'label set must contain "{UNKNOWN}"')
    return result


def normalize_path(path: str) -> str:
    """Return the corpus id for a manifest path: relative, ``/``-separated, normalized."""
    p = path.strip().replace("\\", "/")
    norm = posixpath.normpath(p)
    if not p or norm.startswith("/") or norm == ".." or norm.startswith("../"):
        raise DataError(f"path escapes corpus root: {path!r}")
    return norm


@dataclass(frozen=True)
class CorpusEntry:
    id: str
    path: str
    text: bytes
    label: str

    @property
    def source(self) -> str:
        return self.text.decode("utf-8")


@dataclass(frozen=True)
class Corpus:
    entries: tuple[CorpusEntry, ...]
    label_set: tuple[str, ...]
    root: Path | None = None
    # .java files present under root but absent from the manifest
    ignored: tuple[str, ...] = field(default=())

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    @property
    def ids(self) -> list[str]:
        return [e.id for e in self.entries]

    @property
    def labels(self) -> list[str]:
        return [e.label for e in self.entries]

    def by_id(self) -> dict[str, CorpusEntry]:
        return {e.id: e for e in self.entries}

    def label_counts(self) -> dict[str, int]:
        counts = Counter(self.labels)
        return {lab: counts.get(lab, 0) for lab in self.label_set}

    def subset(self, ids: Iterable[str]) -> "Corpus":
        wanted = set(ids)
        return Corpus(
            tuple(e for e in self.entries if e.id in wanted),
            self.label_set,
            self.root,
        )

    def with_texts(self, texts: dict[str, bytes]) -> "Corpus":
        """Copy of the corpus restricted to ``texts``' ids, with replaced sources."""
        entries = tuple(
            CorpusEntry(e.id, e.path, texts[e.id], e.label) for e in self.entries if e.id in texts
        )
        return Corpus(entries, self.label_set, None)

    def write(self, out_dir: str | Path) -> Path:
        """Write sources under ``out_dir`` plus a ``manifest.csv``; returns the manifest path."""
        out = Path(out_dir)
        for e in self.entries:
            target = out / e.path
            target.parent.mkdir(parents=True, exist_ok=True)
            target.write_bytes(e.text)
        manifest = out / "manifest.csv"
        manifest.write_text(format_manifest((e.path, e.label) for e in self.entries), encoding="utf-8")
        return manifest


def format_manifest(rows: Iterable[tuple[str, str]]) -> str:
    lines = ["path,label"]
    lines.extend(f"{path},{label}" for path, label in rows)
    return "\n".join(lines) + "\n"


def parse_manifest(text: str) -> list[tuple[str, str]]:
    """Parse ``path,label`` CSV text into rows. Row numbers in errors are 1-based data rows."""
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise DataError("manifest is empty") from None
    if [h.strip().lower() for h in header] != ["path", "label"]:
        raise DataError(f"manifest header must be 'path,label', got {','.join(header)!r}")
    rows = []
    for rowno, row in enumerate(reader, start=1):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 2:
            raise DataError(f"manifest row {rowno}: expected 2 columns, got {len(row)}")
        rows.append((row[0].strip(), row[1].strip()))
    return rows


def load_corpus(
    root: str | Path,
    manifest: str | Path,
    label_set: Sequence[str] = DEFAULT_LABELS,
) -> Corpus:
    root = Path(root)
    manifest = Path(manifest)
    if not root.is_dir():
        raise DataError(f"corpus root not found: {root}")
    if not manifest.is_file():
        raise DataError(f"manifest not found: {manifest}")
    labels = validate_label_set(label_set)
    allowed = set(labels)

    rows = parse_manifest(manifest.read_text(encoding="utf-8-sig"))
    seen: dict[str, int] = {}
    missing: list[str] = []
    entries: list[CorpusEntry] = []
    for rowno, (path, label) in enumerate(rows, start=1):
        if label not in allowed:
            raise DataError(f"manifest row {rowno}: unknown label {label!r} (path {path})")
        ident = normalize_path(path)
        if ident in seen:
            raise DataError(f"manifest row {rowno}: duplicate path {ident} (first at row {seen[ident]})")
        seen[ident] = rowno
        file = root / ident
        if not file.is_file():
            missing.append(ident)
            continue
        text = file.read_bytes()
        if not text:
            raise DataError(f"manifest row {rowno}: empty source file {ident}")
        entries.append(CorpusEntry(ident, ident, text, label))
    if missing:
        raise DataError(f"{len(missing)} manifest path(s) not found under {root}: " + ", ".join(missing))

    entries.sort(key=lambda e: e.id)
    listed = set(seen)
    ignored = sorted(
        rel
        for rel in (p.relative_to(root).as_posix() for p in root.rglob("*.java") if p.is_file())
        if rel not in listed
    )
    return Corpus(tuple(entries), labels, root, tuple(ignored))


def stratified_sample(
    corpus: Corpus,
    per_label: tuple[int, int],
    seed: int,
    labels: Sequence[str] | None = None,
) -> Corpus:
    """Draw between ``per_label[0]`` and ``per_label[1]`` entries of every label.

    ``labels`` restricts which labels must be drawn; by default every label of
    the corpus label set that has at least one entry.
    """
    lo, hi = per_label
    if lo < 1 or hi < lo:
        raise DataError(f"invalid per-label range ({lo}, {hi})")
    rng = random.Random(seed)
    by_label: dict[str, list[str]] = {}
    for e in corpus.entries:
        by_label.setdefault(e.label, []).append(e.id)
    targets = list(labels) if labels is not None else [lab for lab in corpus.label_set if lab in by_label]
    chosen: list[str] = []
    for lab in targets:
        pool = sorted(by_label.get(lab, []))
        if len(pool) < lo:
            raise DataError(f"insufficient entries: {lab} ({len(pool)} < {lo})")
        k = min(rng.randint(lo, hi), len(pool))
        chosen.extend(rng.sample(pool, k))
    return corpus.subset(chosen)
