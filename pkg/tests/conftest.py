from pathlib import Path

import pytest

from obfubench.renamer import obfuscate_corpus
from obfubench.synth import fuzz_corpus, synthesize

DATA = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def data_dir() -> Path:
    return DATA


@pytest.fixture(scope="session")
def em_singleton() -> bytes:
    return (DATA / "EmSingleton.java").read_bytes()


@pytest.fixture(scope="session")
def synthetic():
    """The shipped demo corpus at its reference size (10 files per label)."""
    return synthesize(10, 0)


@pytest.fixture(scope="session")
def obfuscated(synthetic):
    result = obfuscate_corpus(synthetic)
    assert not result.failures
    return result


@pytest.fixture(scope="session")
def fuzzed():
    return fuzz_corpus(50, 0)


@pytest.fixture
def write_tree(tmp_path):
    """Write ``{relpath: text}`` under tmp_path and return the root."""

    def write(files: dict[str, str], manifest: str | None = None) -> Path:
        for rel, text in files.items():
            p = tmp_path / rel
            p.parent.mkdir(parents=True, exist_ok=True)
            p.write_text(text, encoding="utf-8")
        if manifest is not None:
            (tmp_path / "manifest.csv").write_text(manifest, encoding="utf-8")
        return tmp_path

    return write
