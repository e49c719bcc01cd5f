import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from obfubench.corpus import Corpus, CorpusEntry
from obfubench.errors import DataError
from obfubench.features import (
    KEYWORDS,
    LEXICAL,
    STRUCTURAL,
    STRUCTURAL_SLOTS,
    EmbedderConfig,
    FeatureVector,
    dumps_vectors,
    embed_corpus,
    embed_lexical,
    embed_structural,
    fnv1a64,
    import_embeddings,
    lexical_terms,
    read_vectors,
    split_subtokens,
    stack,
    structural_counts,
)
from obfubench.lexer import tokenize
from obfubench.renamer import obfuscate_source
from obfubench.synth import fuzz_java

LEX = EmbedderConfig(LEXICAL)
STRUCT = EmbedderConfig(STRUCTURAL)


def lex(src, config=LEX):
    return embed_lexical(tokenize(src), config).values


def struct(src):
    return embed_structural(tokenize(src), STRUCT).values


# published FNV-1a 64 test vectors
@pytest.mark.parametrize(
    "text, digest",
    [("", 0xCBF29CE484222325), ("a", 0xAF63DC4C8601EC8C), ("foobar", 0x85944171F73967E8)],
)
def test_fnv1a64_vectors(text, digest):
    assert fnv1a64(text) == digest


def test_fnv_seed_changes_hash():
    assert fnv1a64("singleton", 1) != fnv1a64("singleton", 0)


@pytest.mark.parametrize(
    "ident, parts",
    [
        ("EmSingleton", ["em", "singleton"]),
        ("parseHTTPResponse2", ["parse", "http", "response", "2"]),
        ("a", ["a"]),
        ("MAX_VALUE", ["max", "value"]),
        ("__init$x", ["init", "x"]),
        ("utf8Decoder", ["utf", "8", "decoder"]),
        ("XMLHttpRequest", ["xml", "http", "request"]),
    ],
)
def test_split_subtokens(ident, parts):
    assert split_subtokens(ident) == parts


def test_lexical_terms_cover_strings_and_comments():
    terms = lexical_terms(tokenize('class ObserverHub { String s = "Observer Ready"; /* * notify all */ }'))
    assert terms == ["observer", "hub", "string", "s", "observer", "ready", "notify", "all"]


def test_empty_input_is_zero_vector():
    assert not lex("").any()
    assert not struct("").any()


def test_lexical_norm_and_determinism(em_singleton):
    v = lex(em_singleton.decode())
    assert abs(np.linalg.norm(v) - 1) < 1e-12
    assert np.array_equal(v, lex(em_singleton.decode()))


def test_lexical_whitespace_invariance():
    assert np.array_equal(lex("class A{int x;}"), lex("class   A {\n\tint x ;\n}\n"))


def test_obfuscation_changes_lexical_vector(em_singleton):
    src = em_singleton.decode()
    obf, _ = obfuscate_source(src)
    a, b = lex(src), lex(obf)
    assert float(a @ b) < 1.0


def test_hash_seed_permutes_buckets():
    src = "class SingletonHolder { int counter; }"
    a, b = lex(src), lex(src, EmbedderConfig(LEXICAL, hash_seed=99))
    assert not np.array_equal(a, b)
    assert abs(np.linalg.norm(a) - np.linalg.norm(b)) < 1e-12


def test_structural_slot_count():
    assert STRUCTURAL_SLOTS == 79
    with pytest.raises(DataError):
        EmbedderConfig(STRUCTURAL, dim=78)
    assert EmbedderConfig(STRUCTURAL, dim=79).dim == 79


def test_structural_identifier_blind():
    assert np.array_equal(struct("class A { }"), struct("class b { }"))


def test_synchronized_slot():
    counts = structural_counts(tokenize("class A { void f() { synchronized (this) { x(); } } }"))
    assert counts[KEYWORDS.index("synchronized")] == 1


def test_structural_depth_histogram():
    counts = structural_counts(tokenize("{{{}}}"))
    depth_base = len(KEYWORDS) + 6
    assert list(counts[depth_base : depth_base + 4]) == [2, 2, 2, 0]


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**9))
def test_structural_invariance_under_obfuscation(seed):
    src = fuzz_java(seed)
    obf, _ = obfuscate_source(src)
    assert np.array_equal(struct(src), struct(obf))
    for v in (struct(src), lex(src)):
        assert abs(np.linalg.norm(v) - 1) < 1e-12 or not v.any()


def test_wrong_kind_is_rejected():
    with pytest.raises(DataError):
        embed_lexical(tokenize("x"), STRUCT)
    with pytest.raises(DataError):
        EmbedderConfig("transformer")


def test_embed_corpus_sets_labels(synthetic):
    vectors = embed_corpus(synthetic.subset(synthetic.ids[:3]), LEX)
    assert [v.source_id for v in vectors] == synthetic.ids[:3]
    assert [v.label for v in vectors] == synthetic.labels[:3]
    assert all(v.dim == 256 for v in vectors)


# -- JSONL interchange -------------------------------------------------------


def _corpus(*ids):
    return Corpus(tuple(CorpusEntry(i, i, b"class A {}", "Singleton") for i in ids), ("Singleton", "Unknown"))


def _write(tmp_path, rows):
    path = tmp_path / "vectors.jsonl"
    path.write_text("".join(json.dumps(r) + "\n" for r in rows))
    return path


def test_import_two_vectors(tmp_path):
    path = _write(tmp_path, [{"id": "a/A.java", "vector": [0.5] * 256}, {"id": "B.java", "vector": [1.0] * 256}])
    vectors = import_embeddings(path, _corpus("a/A.java", "B.java"))
    assert [(v.source_id, v.label, v.dim) for v in vectors] == [("a/A.java", "Singleton", 256), ("B.java", "Singleton", 256)]


def test_import_unknown_id(tmp_path):
    path = _write(tmp_path, [{"id": "Ghost.java", "vector": [0.0] * 4}])
    with pytest.raises(DataError, match="Ghost.java"):
        import_embeddings(path, _corpus("A.java"))


def test_import_mixed_dims(tmp_path):
    path = _write(tmp_path, [{"id": "A.java", "vector": [0.0] * 256}, {"id": "B.java", "vector": [0.0] * 300}])
    with pytest.raises(DataError, match="dimension mismatch.*300 != 256"):
        import_embeddings(path, _corpus("A.java", "B.java"))


@pytest.mark.parametrize(
    "line",
    ['{"id": "A.java", "vector": [1.0, NaN]}', '{"id": "A.java", "vector": [1.0, Infinity]}', '{"id": "A.java"}', "not json", '{"id": "A.java", "vector": []}'],
)
def test_bad_records(tmp_path, line):
    path = tmp_path / "v.jsonl"
    path.write_text(line + "\n")
    with pytest.raises(DataError):
        read_vectors(path)


def test_duplicate_ids(tmp_path):
    path = _write(tmp_path, [{"id": "A.java", "vector": [1.0]}, {"id": "A.java", "vector": [2.0]}])
    with pytest.raises(DataError, match="duplicate"):
        read_vectors(path)


def test_jsonl_roundtrip_is_exact(tmp_path):
    rng = np.random.default_rng(0)
    vectors = [FeatureVector(rng.normal(size=8), "Visitor", f"v{i}") for i in range(5)]
    path = tmp_path / "v.jsonl"
    path.write_text(dumps_vectors(vectors))
    back = read_vectors(path)
    assert all(np.array_equal(a.values, b.values) and a.label == b.label for a, b in zip(vectors, back))


def test_stack_rejects_mixed_dims():
    with pytest.raises(DataError, match="mixed"):
        stack([FeatureVector(np.zeros(3)), FeatureVector(np.zeros(4))])
