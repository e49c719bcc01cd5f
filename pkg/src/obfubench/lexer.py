"""Lossless Java tokenizer.

Every character of the input ends up in exactly one token, so joining the
lexemes gives back the original text. Comments and whitespace are tokens too.
Unicode escapes are kept verbatim rather than translated first.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Sequence

from obfubench.errors import LexError

IDENTIFIER = "identifier"
KEYWORD = "keyword"
STRING = "string_literal"
CHAR = "char_literal"
NUMBER = "number_literal"
OPERATOR = "operator_punct"
LINE_COMMENT = "line_comment"
BLOCK_COMMENT = "block_comment"
WHITESPACE = "whitespace"

TOKEN_KINDS = (
    IDENTIFIER,
    KEYWORD,
    STRING,
    CHAR,
    NUMBER,
    OPERATOR,
    LINE_COMMENT,
    BLOCK_COMMENT,
    WHITESPACE,
)
TRIVIA = frozenset({WHITESPACE, LINE_COMMENT, BLOCK_COMMENT})

RESERVED_WORDS = (
    "abstract", "assert", "boolean", "break", "byte", "case", "catch", "char",
    "class", "const", "continue", "default", "do", "double", "else", "enum",
    "extends", "final", "finally", "float", "for", "goto", "if", "implements",
    "import", "instanceof", "int", "interface", "long", "native", "new",
    "package", "private", "protected", "public", "return", "short", "static",
    "strictfp", "super", "switch", "synchronized", "this", "throw", "throws",
    "transient", "try", "void", "volatile", "while",
)  # fmt: skip
LITERAL_WORDS = ("true", "false", "null")
KEYWORDS = RESERVED_WORDS + LITERAL_WORDS
KEYWORD_SET = frozenset(KEYWORDS)

# Longest first so that alternation order gives maximal munch.
OPERATORS = sorted(
    [
        ">>>=", "<<=", ">>=", ">>>", "...", "->", "::", "++", "--", "&&", "||",
        "==", "!=", "<=", ">=", "+=", "-=", "*=", "/=", "&=", "|=", "^=", "%=",
        "<<", ">>", "(", ")", "{", "}", "[", "]", ";", ",", ".", "@", "=", ">",
        "<", "!", "~", "?", ":", "+", "-", "*", "/", "&", "|", "^", "%",
    ],
    key=len,
    reverse=True,
)  # fmt: skip

_NUMBER = (
    r"0[xX][0-9a-fA-F_]*(?:\.[0-9a-fA-F_]*)?(?:[pP][+-]?[0-9_]+)?[\w$]*"
    r"|0[bB][01_]+[\w$]*"
    r"|(?:\d[\d_]*(?:\.(?!\.)[\d_]*)?|\.\d[\d_]*)(?:[eE][+-]?[\d_]+)?[\w$]*"
)

_MASTER = re.compile(
    "|".join(
        [
            rf"(?P<{WHITESPACE}>\s+)",
            rf"(?P<{LINE_COMMENT}>//[^\r\n]*)",
            rf"(?P<{BLOCK_COMMENT}>/\*.*?\*/)",
            r'(?P<text_block>"""[ \t\f]*\r?\n(?:[^"\\]|\\.|"(?!""))*""")',
            rf'(?P<{STRING}>"(?:[^"\\\r\n]|\\.)*")',
            rf"(?P<{CHAR}>'(?:[^'\\\r\n]|\\.)+')",
            rf"(?P<{NUMBER}>{_NUMBER})",
            r"(?P<word>(?:[^\W\d]|\$)[\w$]*)",
            rf"(?P<{OPERATOR}>{'|'.join(re.escape(op) for op in OPERATORS)})",
        ]
    ),
    re.DOTALL,
)


@dataclass(frozen=True)
class Token:
    kind: str
    lexeme: str
    start: int  # byte offsets into the UTF-8 input
    end: int
    line: int

    @property
    def span(self) -> tuple[int, int]:
        return (self.start, self.end)

    @property
    def is_trivia(self) -> bool:
        return self.kind in TRIVIA


def _unterminated(text: str, pos: int) -> str | None:
    if text.startswith("/*", pos):
        return "unterminated block comment"
    if text.startswith('"""', pos):
        return "unterminated text block"
    if text.startswith('"', pos):
        return "unterminated string literal"
    if text.startswith("'", pos):
        return "unterminated char literal"
    return None


def tokenize(text: str | bytes) -> list[Token]:
    """Split Java source into a lossless token list.

    Raises :class:`LexError` on an unterminated string, char literal, text
    block or block comment. Characters that match no rule (``#``, a stray
    backslash) become single-character ``operator_punct`` tokens.
    """
    if isinstance(text, bytes):
        try:
            text = text.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise LexError(f"invalid UTF-8: {exc.reason}", 1) from None
    tokens: list[Token] = []
    pos = 0
    byte_pos = 0
    line = 1
    n = len(text)
    while pos < n:
        m = _MASTER.match(text, pos)
        suspicious = (
            m is None
            or m.lastgroup == OPERATOR
            or (m.lastgroup != "text_block" and text.startswith('"""', pos))
        )
        problem = _unterminated(text, pos) if suspicious else None
        if problem:
            raise LexError(problem, line)
        if m is None:
            kind, lexeme = OPERATOR, text[pos]
        else:
            kind, lexeme = m.lastgroup, m.group()
            if kind == "text_block":
                kind = STRING
            elif kind == "word":
                kind = KEYWORD if lexeme in KEYWORD_SET else IDENTIFIER
        size = len(lexeme.encode("utf-8"))
        tokens.append(Token(kind, lexeme, byte_pos, byte_pos + size, line))
        pos += len(lexeme)
        byte_pos += size
        line += lexeme.count("\n")
    return tokens


def untokenize(tokens: Iterable[Token]) -> str:
    return "".join(t.lexeme for t in tokens)


def significant(tokens: Sequence[Token]) -> list[Token]:
    """Tokens without whitespace and comments."""
    return [t for t in tokens if t.kind not in TRIVIA]


_ELIDED = {IDENTIFIER: "id", STRING: "str", CHAR: "chr", NUMBER: "num"}


def token_structure_signature(tokens: Sequence[Token]) -> str:
    """Keyword/operator skeleton of a token stream.

    Identifiers and literals collapse to their kind; whitespace and comments are
    dropped entirely, so renaming, literal scrubbing and comment stripping all
    leave the signature unchanged.
    """
    parts = []
    for t in tokens:
        if t.kind in TRIVIA:
            continue
        parts.append(_ELIDED.get(t.kind) or t.lexeme)
    return " ".join(parts)


def escape_lexeme(lexeme: str) -> str:
    return lexeme.encode("unicode_escape").decode("ascii")


def dump_tsv(tokens: Iterable[Token]) -> str:
    """TSV dump (kind, start, end, escaped lexeme), one token per line."""
    return "".join(f"{t.kind}\t{t.start}\t{t.end}\t{escape_lexeme(t.lexeme)}\n" for t in tokens)
