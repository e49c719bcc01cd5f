"""Fixed-length feature vectors for Java files.

Two built-in embedders bracket the effect of name obfuscation: the lexical
one hashes identifier subtokens and literal/comment words (it sees every
naming cue), the structural one counts keywords, token kinds and nesting (it
sees none). Vectors from an external model can be imported from JSONL.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from obfubench.corpus import Corpus
from obfubench.errors import DataError
from obfubench.lexer import (
    BLOCK_COMMENT,
    CHAR,
    IDENTIFIER,
    KEYWORD,
    KEYWORDS,
    LINE_COMMENT,
    NUMBER,
    OPERATOR,
    STRING,
    TRIVIA,
    Token,
    tokenize,
)

DEFAULT_DIM = 256
LEXICAL = "lexical"
STRUCTURAL = "structural"
EXTERNAL = "external"
EMBEDDER_KINDS = (LEXICAL, STRUCTURAL, EXTERNAL)

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1

_SIGNIFICANT_KINDS = (IDENTIFIER, KEYWORD, STRING, CHAR, NUMBER, OPERATOR)
_COUNTED_PUNCT = ("(", ")", "{", "}", ";")
MAX_DEPTH_BIN = 9
# keywords | significant kinds | depth histogram | punctuation | string, char, number, boolean, null
STRUCTURAL_SLOTS = len(KEYWORDS) + len(_SIGNIFICANT_KINDS) + MAX_DEPTH_BIN + 1 + len(_COUNTED_PUNCT) + 5


@dataclass(frozen=True)
class EmbedderConfig:
    kind: str = LEXICAL
    dim: int = DEFAULT_DIM
    hash_seed: int = 0

    def __post_init__(self):
        if self.kind not in EMBEDDER_KINDS:
            raise DataError(f"unknown embedder kind {self.kind!r}")
        if self.dim < 1:
            raise DataError("dim must be positive")
        if self.kind == STRUCTURAL and self.dim < STRUCTURAL_SLOTS:
            raise DataError(f"structural embedder needs dim >= {STRUCTURAL_SLOTS}")


@dataclass
class FeatureVector:
    values: np.ndarray
    label: str | None = None
    source_id: str = ""

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])


def fnv1a64(text: str, seed: int = 0) -> int:
    """Seeded 64-bit FNV-1a: xor each UTF-8 byte in, then multiply by the FNV prime."""
    h = (FNV_OFFSET ^ seed) & _MASK64
    for b in text.encode("utf-8"):
        h ^= b
        h = (h * FNV_PRIME) & _MASK64
    return h


_SUBTOKEN = re.compile(r"[A-Z]+(?=[A-Z][a-z])|[A-Z]?[a-z]+|[A-Z]+|\d+|[^\W\d_A-Za-z]+")


def split_subtokens(identifier: str) -> list[str]:
    """``parseHTTPResponse2`` -> ``['parse', 'http', 'response', '2']``."""
    pieces = []
    for part in re.split(r"[_$]+", identifier):
        pieces.extend(m.group().lower() for m in _SUBTOKEN.finditer(part))
    return [p for p in pieces if p]


def _literal_body(tok: Token) -> str:
    lx = tok.lexeme
    if tok.kind == STRING:
        return lx[3:-3] if lx.startswith('"""') else lx[1:-1]
    if tok.kind == LINE_COMMENT:
        return lx[2:]
    return lx[2:-2].replace("*", " ")


def lexical_terms(tokens: Iterable[Token]) -> list[str]:
    terms: list[str] = []
    for t in tokens:
        if t.kind == IDENTIFIER:
            terms.extend(split_subtokens(t.lexeme))
        elif t.kind in (STRING, LINE_COMMENT, BLOCK_COMMENT):
            terms.extend(w.lower() for w in _literal_body(t).split())
    return terms


def _normalized(vec: np.ndarray) -> np.ndarray:
    norm = math.sqrt(float(np.dot(vec, vec)))
    return vec / norm if norm > 0 else vec


def embed_lexical(tokens: Sequence[Token], config: EmbedderConfig = EmbedderConfig()) -> FeatureVector:
    if config.kind != LEXICAL:
        raise DataError("embed_lexical needs a lexical config")
    vec = np.zeros(config.dim)
    for term in lexical_terms(tokens):
        vec[fnv1a64(term, config.hash_seed) % config.dim] += 1.0
    return FeatureVector(_normalized(vec))


def structural_counts(tokens: Sequence[Token]) -> np.ndarray:
    """Raw structural slot counts; reads token kinds and keyword/punctuation lexemes only."""
    keyword_slot = {kw: i for i, kw in enumerate(KEYWORDS)}
    kind_base = len(KEYWORDS)
    depth_base = kind_base + len(_SIGNIFICANT_KINDS)
    punct_base = depth_base + MAX_DEPTH_BIN + 1
    literal_base = punct_base + len(_COUNTED_PUNCT)
    counts = np.zeros(STRUCTURAL_SLOTS)
    depth = 0
    for t in tokens:
        if t.kind in TRIVIA:
            continue
        counts[kind_base + _SIGNIFICANT_KINDS.index(t.kind)] += 1
        if t.lexeme == "}":
            depth = max(depth - 1, 0)
        counts[depth_base + min(depth, MAX_DEPTH_BIN)] += 1
        if t.lexeme == "{":
            depth += 1
        if t.kind == KEYWORD:
            counts[keyword_slot[t.lexeme]] += 1
            if t.lexeme in ("true", "false"):
                counts[literal_base + 3] += 1
            elif t.lexeme == "null":
                counts[literal_base + 4] += 1
        elif t.kind == OPERATOR and t.lexeme in _COUNTED_PUNCT:
            counts[punct_base + _COUNTED_PUNCT.index(t.lexeme)] += 1
        elif t.kind in (STRING, CHAR, NUMBER):
            counts[literal_base + (STRING, CHAR, NUMBER).index(t.kind)] += 1
    return counts


def embed_structural(tokens: Sequence[Token], config: EmbedderConfig = EmbedderConfig(STRUCTURAL)) -> FeatureVector:
    if config.kind != STRUCTURAL:
        raise DataError("embed_structural needs a structural config")
    vec = np.zeros(config.dim)
    vec[:STRUCTURAL_SLOTS] = structural_counts(tokens)
    return FeatureVector(_normalized(vec))


def embed_tokens(tokens: Sequence[Token], config: EmbedderConfig) -> FeatureVector:
    if config.kind == LEXICAL:
        return embed_lexical(tokens, config)
    if config.kind == STRUCTURAL:
        return embed_structural(tokens, config)
    raise DataError("external embeddings are imported, not computed")


def embed_corpus(corpus: Corpus, config: EmbedderConfig) -> list[FeatureVector]:
    vectors = []
    for e in corpus.entries:
        try:
            fv = embed_tokens(tokenize(e.text), config)
        except DataError as exc:
            raise DataError(f"{e.id}: {exc}") from exc
        fv.label = e.label
        fv.source_id = e.id
        vectors.append(fv)
    return vectors


# ---------------------------------------------------------------------------
# JSONL interchange


def dumps_vectors(vectors: Iterable[FeatureVector]) -> str:
    lines = []
    for fv in vectors:
        obj: dict = {"id": fv.source_id}
        if fv.label is not None:
            obj["label"] = fv.label
        obj["vector"] = [float(x) for x in fv.values]
        lines.append(json.dumps(obj))
    return "".join(line + "\n" for line in lines)


def write_vectors(vectors: Iterable[FeatureVector], path: str | Path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(dumps_vectors(vectors), encoding="utf-8")


def read_vectors(path: str | Path) -> list[FeatureVector]:
    """Read a JSONL embedding file; checks shape consistency and finiteness."""
    if not Path(path).is_file():
        raise DataError(f"embedding file not found: {path}")
    vectors: list[FeatureVector] = []
    dim = None
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                ident = str(obj["id"])
                values = np.asarray(obj["vector"], dtype=float)
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise DataError(f"{path}:{lineno}: bad embedding record ({exc})") from None
            if values.ndim != 1 or values.size == 0:
                raise DataError(f"{path}:{lineno}: vector must be a non-empty list of numbers")
            if not np.all(np.isfinite(values)):
                raise DataError(f"{path}:{lineno}: non-finite value in vector for {ident}")
            if dim is None:
                dim = values.size
            elif values.size != dim:
                raise DataError(
                    f"{path}:{lineno}: dimension mismatch for {ident}: {values.size} != {dim}"
                )
            if ident in seen:
                raise DataError(f"{path}:{lineno}: duplicate id {ident}")
            seen.add(ident)
            vectors.append(FeatureVector(values, obj.get("label"), ident))
    return vectors


def import_embeddings(path: str | Path, corpus: Corpus) -> list[FeatureVector]:
    """Read externally produced vectors and attach corpus labels by id."""
    labels = {e.id: e.label for e in corpus.entries}
    vectors = read_vectors(path)
    for fv in vectors:
        key = fv.source_id.replace("\\", "/")
        if key not in labels:
            raise DataError(f"embedding id not in corpus: {fv.source_id}")
        fv.source_id = key
        fv.label = labels[key]
    return vectors


def stack(vectors: Sequence[FeatureVector]) -> np.ndarray:
    if not vectors:
        raise DataError("no feature vectors")
    dims = {fv.dim for fv in vectors}
    if len(dims) != 1:
        raise DataError(f"feature vectors have mixed dimensions {sorted(dims)}")
    return np.vstack([fv.values for fv in vectors])
