"""Shared fixtures: one tiny checkpoint per session, short corpora."""

import pytest

from xsns_adapter import build_checkpoint, load_model, synth_corpus


@pytest.fixture(scope="session")
def ckpt_dir(tmp_path_factory):
    return build_checkpoint(tmp_path_factory.mktemp("fixture") / "tiny-mlm", seed=11)


@pytest.fixture(scope="session")
def loaded(ckpt_dir):
    """(model, tokenizer) shared read-only across tests."""
    return load_model(str(ckpt_dir))


@pytest.fixture(scope="session")
def latin_lines():
    return synth_corpus(40, 3, script="latin")


@pytest.fixture(scope="session")
def cyrillic_lines():
    return synth_corpus(40, 4, script="cyrillic")


@pytest.fixture
def corpus_file(tmp_path):
    def make(lines, name="corpus.txt"):
        path = tmp_path / name
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return path

    return make
