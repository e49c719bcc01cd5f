"""Name-based obfuscation of Java sources at the token level.

Declared identifiers are found with lightweight heuristics over the
significant-token stream (no AST), renamed to short base-26 names, string
literals and comments are scrubbed, and a mapping file records every rename.
Scope is per file: all occurrences of one identifier string share a single
new name, whatever scope they were declared in.
"""

from __future__ import annotations

import posixpath
import random
import re
from dataclasses import dataclass, field
from itertools import count as _count
from typing import Iterable, Iterator, Sequence

from obfubench.corpus import Corpus
from obfubench.errors import DataError, InvariantError, LexError
from obfubench.lexer import (
    BLOCK_COMMENT,
    IDENTIFIER,
    KEYWORD_SET,
    LINE_COMMENT,
    STRING,
    TRIVIA,
    Token,
    token_structure_signature,
    tokenize,
)

TYPE = "type"
METHOD = "method"
FIELD = "field_or_local"
TYPE_PARAMETER = "type_parameter"
CATEGORIES = (TYPE, TYPE_PARAMETER, METHOD, FIELD)  # also the merge priority
_PRIORITY = {cat: i for i, cat in enumerate(CATEGORIES)}

# Restricted identifiers: legal names in most positions, but never generated.
CONTEXTUAL_KEYWORDS = frozenset(
    {"var", "record", "yield", "sealed", "permits", "when", "module", "open", "exports",
     "requires", "transitive", "uses", "provides", "opens", "to", "with", "_"}
)  # fmt: skip

PRIMITIVE_TYPES = frozenset({"boolean", "byte", "char", "short", "int", "long", "float", "double", "void"})
MODIFIERS = frozenset(
    {"public", "private", "protected", "static", "final", "abstract", "synchronized",
     "native", "strictfp", "transient", "volatile", "default"}
)  # fmt: skip
_DECLARATOR_FOLLOW = frozenset({"=", ";", ",", ")", ":", "&&", "||", "->"})
_GENERIC_INNER = frozenset({".", ",", "?", "&", "[", "]", "extends", "super", "@"}) | PRIMITIVE_TYPES
_LAMBDA_PREV = frozenset({"(", ",", "=", "return", "->", "?", ":"})
_NOT_A_TYPE = frozenset({"yield", "permits"})

KEEP = "keep"
PLACEHOLDER = "placeholder"
EMPTY = "empty"
STRIP = "strip"
STRING_MODES = (KEEP, PLACEHOLDER, EMPTY)
COMMENT_MODES = (KEEP, STRIP, PLACEHOLDER)


@dataclass(frozen=True)
class RenamePolicy:
    rename_types: bool = True
    rename_methods: bool = True
    rename_fields_and_locals: bool = True
    scrub_strings: str = PLACEHOLDER
    comments: str = STRIP
    # 0 keeps first-occurrence order; any other value shuffles the name assignment
    seed: int = 0
    external_symbols: frozenset[str] = frozenset()

    def __post_init__(self):
        if self.scrub_strings not in STRING_MODES:
            raise DataError(f"scrub_strings must be one of {STRING_MODES}")
        if self.comments not in COMMENT_MODES:
            raise DataError(f"comments must be one of {COMMENT_MODES}")
        object.__setattr__(self, "external_symbols", frozenset(self.external_symbols))

    def renames(self, category: str) -> bool:
        if category in (TYPE, TYPE_PARAMETER):
            return self.rename_types
        if category == METHOD:
            return self.rename_methods
        return self.rename_fields_and_locals


DEFAULT_POLICY = RenamePolicy()
IDENTITY_POLICY = RenamePolicy(False, False, False, KEEP, KEEP)


@dataclass
class SymbolTable:
    declared: dict[str, str] = field(default_factory=dict)
    external: set[str] = field(default_factory=set)

    def declare(self, name: str, category: str) -> None:
        old = self.declared.get(name)
        if old is None or _PRIORITY[category] < _PRIORITY[old]:
            self.declared[name] = category

    def merge(self, other: "SymbolTable") -> None:
        for name, cat in other.declared.items():
            self.declare(name, cat)
        self.external |= other.external
        self.external -= self.declared.keys()


@dataclass
class RenameMap:
    entries: list[tuple[str, str]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.entries)

    def as_dict(self) -> dict[str, str]:
        return dict(self.entries)

    def inverse(self) -> dict[str, str]:
        return {new: old for old, new in self.entries}


# ---------------------------------------------------------------------------
# declaration heuristics


class _Scanner:
    def __init__(self, sig: Sequence[Token]):
        self.sig = sig

    def lex(self, i: int) -> str:
        return self.sig[i].lexeme if 0 <= i < len(self.sig) else ""

    def is_ident(self, i: int) -> bool:
        return 0 <= i < len(self.sig) and self.sig[i].kind == IDENTIFIER

    def generic_open(self, j: int) -> int | None:
        """Index of the ``<`` matching the ``>`` run at ``j`` if it closes a type argument list."""
        depth = len(self.lex(j))
        k = j - 1
        while k >= 0:
            lx = self.lex(k)
            if lx in (">", ">>", ">>>"):
                depth += len(lx)
            elif lx == "<":
                depth -= 1
                if depth == 0:
                    return k if self.is_ident(k - 1) else None
            elif not (self.is_ident(k) or lx in _GENERIC_INNER):
                return None
            k -= 1
        return None

    def ends_type(self, j: int) -> bool:
        if j < 0:
            return False
        lx = self.lex(j)
        if self.is_ident(j):
            return lx not in _NOT_A_TYPE and self.lex(j - 1) != "@"
        if lx in PRIMITIVE_TYPES or lx == "...":
            return True
        if lx == "]":
            return self.lex(j - 1) == "["
        if lx in (">", ">>", ">>>"):
            return self.generic_open(j) is not None
        return False

    def statement_has_case(self, i: int) -> bool:
        k = i - 1
        while k >= 0 and self.lex(k) not in (";", "{", "}"):
            if self.lex(k) == "case":
                return True
            k -= 1
        return False


def _skipped_statements(sc: _Scanner) -> tuple[set[int], list[int]]:
    """Indices inside ``import``/``package`` statements, plus identifier indices of the package name."""
    skipped: set[int] = set()
    package_idents: list[int] = []
    i = 0
    while i < len(sc.sig):
        lx = sc.lex(i)
        if lx in ("import", "package") and sc.lex(i - 1) != "@":
            j = i
            while j < len(sc.sig) and sc.lex(j) != ";":
                skipped.add(j)
                if lx == "package" and sc.is_ident(j):
                    package_idents.append(j)
                j += 1
            i = j
        i += 1
    return skipped, package_idents


def _annotation_names(sc: _Scanner) -> set[str]:
    names = set()
    for i in range(len(sc.sig) - 1):
        if sc.lex(i) == "@" and sc.is_ident(i + 1):
            k = i + 1
            while sc.is_ident(k):
                names.add(sc.lex(k))
                if sc.lex(k + 1) != ".":
                    break
                k += 2
    return names


def _type_parameters(sc: _Scanner, lt: int, table: SymbolTable) -> None:
    depth = 0
    expect_name = False
    for k in range(lt, len(sc.sig)):
        lx = sc.lex(k)
        if lx == "<":
            depth += 1
            expect_name = depth == 1
            continue
        if lx in (">", ">>", ">>>"):
            depth -= len(lx)
            if depth <= 0:
                return
            continue
        if depth == 1 and lx == ",":
            expect_name = True
            continue
        if lx == "@" and sc.is_ident(k + 1):
            continue
        if expect_name and sc.is_ident(k) and sc.lex(k - 1) != "@":
            table.declare(lx, TYPE_PARAMETER)
        if lx in (";", "{", "(", ")"):
            return
        expect_name = False


def _enum_constants(sc: _Scanner, name_idx: int, table: SymbolTable) -> None:
    k = name_idx + 1
    while k < len(sc.sig) and sc.lex(k) != "{":
        if sc.lex(k) == ";":
            return
        k += 1
    depth = 0
    at_start = True
    for j in range(k + 1, len(sc.sig)):
        lx = sc.lex(j)
        if depth == 0 and lx in (";", "}"):
            return
        if lx in ("(", "{", "["):
            depth += 1
        elif lx in (")", "}", "]"):
            depth -= 1
        elif depth == 0 and lx == ",":
            at_start = True
            continue
        elif depth == 0 and lx == "@":
            continue
        if at_start and depth == 0 and sc.is_ident(j):
            if sc.lex(j - 1) == "@" or sc.lex(j + 1) == ".":
                continue
            table.declare(lx, FIELD)
            at_start = False


def _declarator_continuations(sc: _Scanner, start: int, table: SymbolTable) -> None:
    """``int a = 1, b, c = f(x, y);`` -- declare ``b`` and ``c`` after ``a`` has been found."""
    depth = 0
    j = start
    while j < len(sc.sig):
        lx = sc.lex(j)
        if lx in ("(", "[", "{"):
            depth += 1
        elif lx in (")", "]", "}"):
            depth -= 1
            if depth < 0:
                return
        elif depth == 0 and lx == ";":
            return
        elif depth == 0 and lx == "," and sc.is_ident(j + 1) and sc.lex(j + 2) in ("=", ",", ";", "["):
            table.declare(sc.lex(j + 1), FIELD)
        j += 1


def _paren_lambda_params(sc: _Scanner, close: int, table: SymbolTable) -> None:
    names = []
    k = close - 1
    while k >= 0 and sc.lex(k) != "(":
        if sc.is_ident(k):
            names.append(sc.lex(k))
        elif sc.lex(k) != ",":
            return  # typed parameters: handled by the declarator rule
        k -= 1
    for name in names:
        table.declare(name, FIELD)


def collect_declarations(
    tokens: Sequence[Token],
    policy: RenamePolicy = DEFAULT_POLICY,
    *,
    package_segments: bool = False,
) -> SymbolTable:
    """Classify every identifier of a file as declared (with a category) or external.

    With ``package_segments`` the names in the ``package`` statement count as
    declared types; this is only used when a whole project folder is renamed
    together.
    """
    sig = [t for t in tokens if t.kind not in TRIVIA]
    sc = _Scanner(sig)
    table = SymbolTable()
    skipped, package_idents = _skipped_statements(sc)
    annotations = _annotation_names(sc)

    for i, tok in enumerate(sig):
        if i in skipped:
            continue
        lx = tok.lexeme
        if lx == "<" and (sc.lex(i - 1) in MODIFIERS or sc.lex(i - 1) in ("{", ";", "}")):
            _type_parameters(sc, i, table)
            continue
        if lx == ")" and sc.lex(i + 1) == "->":
            _paren_lambda_params(sc, i, table)
            continue
        if tok.kind != IDENTIFIER:
            continue
        prev, nxt = sc.lex(i - 1), sc.lex(i + 1)
        if prev == "@" or (prev == "." and sc.lex(i - 2) == "@"):
            continue
        if prev in ("class", "interface", "enum") and sc.lex(i - 2) != ".":
            table.declare(lx, TYPE)
            if nxt == "<":
                _type_parameters(sc, i + 1, table)
            if prev == "enum":
                _enum_constants(sc, i, table)
        elif prev == "record" and sc.is_ident(i - 1) and nxt in ("(", "<") and sc.lex(i - 2) != ".":
            table.declare(lx, TYPE)
            if nxt == "<":
                _type_parameters(sc, i + 1, table)
        elif nxt == "(" and sc.ends_type(i - 1):
            table.declare(lx, METHOD)
        elif nxt == "->" and prev in _LAMBDA_PREV and not sc.statement_has_case(i):
            table.declare(lx, FIELD)
        elif (nxt in _DECLARATOR_FOLLOW or (nxt == "[" and sc.lex(i + 2) == "]")) and sc.ends_type(i - 1):
            table.declare(lx, FIELD)
            if nxt in ("=", ","):
                _declarator_continuations(sc, i + 1, table)

    if package_segments:
        for i in package_idents:
            table.declare(sc.lex(i), TYPE)

    forced_external = (annotations | policy.external_symbols) - (
        {sc.lex(i) for i in package_idents} if package_segments else set()
    )
    for name in forced_external:
        table.declared.pop(name, None)
    identifiers = {t.lexeme for t in sig if t.kind == IDENTIFIER}
    table.external = identifiers - table.declared.keys()
    return table


# ---------------------------------------------------------------------------
# renaming


def base26_name(index: int) -> str:
    """0 -> a, 25 -> z, 26 -> aa, 27 -> ab, ..."""
    chars = []
    index += 1
    while index > 0:
        index, rem = divmod(index - 1, 26)
        chars.append(chr(ord("a") + rem))
    return "".join(reversed(chars))


def iter_names(forbidden: Iterable[str] = ()) -> Iterator[str]:
    blocked = set(forbidden)
    for i in _count():
        name = base26_name(i)
        if name in KEYWORD_SET or name in CONTEXTUAL_KEYWORDS or name in blocked:
            continue
        yield name


def generate_names(count: int, forbidden: Iterable[str] = ()) -> list[str]:
    """First ``count`` base-26 names not reserved and not in ``forbidden``."""
    it = iter_names(forbidden)
    return [next(it) for _ in range(count)]


def _assign(order: Sequence[str], forbidden: Iterable[str], seed: int) -> dict[str, str]:
    names = generate_names(len(order), forbidden)
    if seed:
        random.Random(seed).shuffle(names)
    return dict(zip(order, names))


def _first_occurrence(tokens: Iterable[Token], wanted: set[str]) -> list[str]:
    seen: dict[str, None] = {}
    for t in tokens:
        if t.kind == IDENTIFIER and t.lexeme in wanted:
            seen.setdefault(t.lexeme)
    return list(seen)


def apply_rename(
    tokens: Sequence[Token],
    table: SymbolTable,
    policy: RenamePolicy = DEFAULT_POLICY,
    assignment: dict[str, str] | None = None,
) -> tuple[str, RenameMap]:
    """Rewrite a token stream; returns the obfuscated text and the renames applied.

    ``assignment`` overrides the per-file name assignment (project-scope mode
    shares one assignment across several files).
    """
    if assignment is None:
        enabled = {name for name, cat in table.declared.items() if policy.renames(cat)}
        order = _first_occurrence(tokens, enabled)
        forbidden = {t.lexeme for t in tokens if t.kind == IDENTIFIER} | table.external
        assignment = _assign(order, forbidden, policy.seed)

    out: list[str] = []
    used: dict[str, str] = {}
    placeholders: dict[str, str] = {}
    n_comments = 0
    for t in tokens:
        if t.kind == IDENTIFIER and t.lexeme in assignment:
            new = assignment[t.lexeme]
            if used.setdefault(t.lexeme, new) != new:
                raise InvariantError(f"{t.lexeme!r} mapped to both {used[t.lexeme]!r} and {new!r}")
            out.append(new)
        elif t.kind == STRING and policy.scrub_strings != KEEP:
            if policy.scrub_strings == EMPTY:
                out.append('""')
            else:
                out.append(placeholders.setdefault(t.lexeme, f'"s{len(placeholders)}"'))
        elif t.kind in (LINE_COMMENT, BLOCK_COMMENT) and policy.comments != KEEP:
            if policy.comments == STRIP:
                out.append(" ")
            else:
                out.append(f"// c{n_comments}" if t.kind == LINE_COMMENT else f"/* c{n_comments} */")
                n_comments += 1
        else:
            out.append(t.lexeme)

    rmap = RenameMap(list(used.items()))
    if len(set(used.values())) != len(used):
        raise InvariantError("rename map is not injective")
    text = "".join(out)
    if token_structure_signature(tokenize(text)) != token_structure_signature(tokens):
        raise InvariantError("renaming changed the token structure")
    return text, rmap


def obfuscate_source(source: str | bytes, policy: RenamePolicy = DEFAULT_POLICY) -> tuple[str, RenameMap]:
    tokens = tokenize(source)
    return apply_rename(tokens, collect_declarations(tokens, policy), policy)


def restore_identifiers(text: str, rmap: RenameMap | dict[str, str]) -> str:
    """Undo identifier renames (string and comment scrubbing is not reversible)."""
    inverse = rmap.inverse() if isinstance(rmap, RenameMap) else {v: k for k, v in rmap.items()}
    return "".join(
        inverse.get(t.lexeme, t.lexeme) if t.kind == IDENTIFIER else t.lexeme for t in tokenize(text)
    )


# ---------------------------------------------------------------------------
# mapping files

MAPPING_INDENT = "    "
_RECORD = re.compile(r"(\S.*?) -> (\S+)")


def emit_mapping(rmap: RenameMap, file_id: str) -> str:
    lines = [f"{file_id}:"]
    lines.extend(f"{MAPPING_INDENT}{old} -> {new}" for old, new in rmap.entries)
    return "\n".join(lines)


def emit_mappings(maps: dict[str, RenameMap]) -> str:
    if not maps:
        return ""
    return "\n".join(emit_mapping(m, fid) for fid, m in maps.items()) + "\n"


def parse_mapping(text: str) -> dict[str, RenameMap]:
    """Parse mapping text back into ``{file_id: RenameMap}``.

    Also accepts ProGuard class headers (``org.xyz.Foo -> a.b.a:``), which
    open a section keyed by the original name whose first entry is the
    header itself.
    """
    result: dict[str, RenameMap] = {}
    current: RenameMap | None = None

    def open_section(file_id: str, lineno: int) -> RenameMap:
        if file_id in result:
            raise DataError(f"mapping line {lineno}: duplicate section {file_id!r}")
        result[file_id] = RenameMap()
        return result[file_id]

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.rstrip()
        if not line.strip():
            continue
        indented = line[0].isspace()
        body = line.strip()
        if not indented and body.endswith(":"):
            header = body[:-1].rstrip()
            m = _RECORD.fullmatch(header)
            if m:
                current = open_section(m.group(1), lineno)
                current.entries.append((m.group(1), m.group(2)))
            elif header:
                current = open_section(header, lineno)
            else:
                raise DataError(f"mapping line {lineno}: empty section header")
            continue
        m = _RECORD.fullmatch(body)
        if m is None:
            raise DataError(f"mapping line {lineno}: malformed record {body!r}")
        if current is None:
            if indented:
                raise DataError(f"mapping line {lineno}: record outside of a section")
            current = open_section(m.group(1), lineno)
        current.entries.append((m.group(1), m.group(2)))
    return result


# ---------------------------------------------------------------------------
# corpora


@dataclass
class ObfuscationResult:
    corpus: Corpus
    maps: dict[str, RenameMap]
    failures: dict[str, str]

    @property
    def mapping(self) -> str:
        return emit_mappings(self.maps)


def _project_of(entry_id: str) -> str:
    return posixpath.dirname(entry_id)


def obfuscate_corpus(
    corpus: Corpus,
    policy: RenamePolicy = DEFAULT_POLICY,
    *,
    project_scope: bool = False,
) -> ObfuscationResult:
    """Obfuscate every file; files that fail to lex are reported, not fatal.

    With ``project_scope`` all files in one directory share a symbol table and
    one name assignment, and package segments are renamed as well.
    """
    tokens: dict[str, list[Token]] = {}
    failures: dict[str, str] = {}
    for e in corpus.entries:
        try:
            tokens[e.id] = tokenize(e.text)
        except LexError as exc:
            failures[e.id] = str(exc)

    assignments: dict[str, dict[str, str]] = {}
    tables: dict[str, SymbolTable] = {}
    if project_scope:
        groups: dict[str, list[str]] = {}
        for ident in tokens:
            groups.setdefault(_project_of(ident), []).append(ident)
        for members in groups.values():
            shared = SymbolTable()
            for ident in members:
                shared.merge(collect_declarations(tokens[ident], policy, package_segments=True))
            enabled = {n for n, c in shared.declared.items() if policy.renames(c)}
            stream = [t for ident in members for t in tokens[ident]]
            order = _first_occurrence(stream, enabled)
            forbidden = {t.lexeme for t in stream if t.kind == IDENTIFIER} | shared.external
            assignment = _assign(order, forbidden, policy.seed)
            for ident in members:
                tables[ident] = shared
                assignments[ident] = assignment
    else:
        for ident, toks in tokens.items():
            tables[ident] = collect_declarations(toks, policy)

    texts: dict[str, bytes] = {}
    maps: dict[str, RenameMap] = {}
    for e in corpus.entries:
        if e.id not in tokens:
            continue
        text, rmap = apply_rename(tokens[e.id], tables[e.id], policy, assignments.get(e.id))
        texts[e.id] = text.encode("utf-8")
        maps[e.id] = rmap
    return ObfuscationResult(corpus.with_texts(texts), maps, failures)


__all__ = [
    "CATEGORIES",
    "DEFAULT_POLICY",
    "FIELD",
    "IDENTITY_POLICY",
    "METHOD",
    "TYPE",
    "TYPE_PARAMETER",
    "ObfuscationResult",
    "RenameMap",
    "RenamePolicy",
    "SymbolTable",
    "apply_rename",
    "base26_name",
    "collect_declarations",
    "emit_mapping",
    "emit_mappings",
    "generate_names",
    "obfuscate_corpus",
    "obfuscate_source",
    "parse_mapping",
    "restore_identifiers",
]
