import numpy as np
import pytest

from xsns.tensorstore import FisherDump, LayoutManifest


@pytest.fixture
def manifest():
    return LayoutManifest.build(
        "unit-model", [("w", (4, 5)), ("b", (5,))], excluded_groups=("embedding",)
    )


@pytest.fixture
def make_dump(manifest):
    def build(values=None, *, language="en", seed=0, example_count=8,
              objective="lm_masked", corpus_tag="task_corpus", flags=0,
              mani=None):
        mani = mani or manifest
        if values is None:
            rng = np.random.default_rng(hash(language) % (2**32) + seed)
            values = rng.random(mani.total_params, dtype=np.float32)
        dump = FisherDump(
            manifest=mani,
            values=np.asarray(values, dtype=np.float32),
            example_count=example_count,
            objective=objective,
            corpus_tag=corpus_tag,
            language=language,
            seed=seed,
            flags=flags,
        )
        dump.validate()
        return dump

    return build
