"""Mask extraction and bitset similarity against independent oracles."""
import time

import numpy as np
import pytest

from xsns.errors import LayoutMismatchError, ValidationError
from xsns.subnet import (
    DEFAULT_P,
    SubNetwork,
    build_mask,
    jaccard,
    similarity_matrix,
    top_k_indices,
)
from xsns.tensorstore import (
    FLAG_DEGENERATE_SELECTION,
    LayoutManifest,
    MaskFile,
    expected_k,
    pack_bits,
    unpack_bits,
)


def sort_oracle(values, k):
    """Reference selection: stable sort by (value descending, index ascending)."""
    order = np.argsort(-values.astype(np.float64), kind="stable")
    return np.sort(order[:k])


def mask_from_indices(total, indices, *, p=DEFAULT_P, language="xx", seed=0,
                      manifest_hash=0xABCD):
    bits = np.zeros(total, dtype=bool)
    bits[np.asarray(indices)] = True
    return SubNetwork(
        mask=MaskFile(
            manifest_hash=manifest_hash, total_params=total, p=p,
            k_selected=int(bits.sum()), bits=pack_bits(bits),
            language=language, seed=seed, objective="lm_masked",
            corpus_tag="task_corpus",
        ),
        language=language,
    )


class TestTopK:
    def test_plain_selection(self):
        values = np.array([0.1, 0.9, 0.5, 0.7], dtype=np.float32)
        assert list(top_k_indices(values, 2)) == [1, 3]

    def test_tie_at_threshold_prefers_low_index(self):
        values = np.array([5.0, 4.0, 4.0, 4.0, 1.0], dtype=np.float32)
        assert list(top_k_indices(values, 2)) == [0, 1]
        assert list(top_k_indices(values, 3)) == [0, 1, 2]

    def test_all_equal(self):
        values = np.ones(10, dtype=np.float32)
        assert list(top_k_indices(values, 4)) == [0, 1, 2, 3]

    def test_k_equals_n(self):
        values = np.array([3.0, 1.0, 2.0], dtype=np.float32)
        assert list(top_k_indices(values, 3)) == [0, 1, 2]

    def test_matches_sort_oracle_with_heavy_ties(self):
        rng = np.random.default_rng(21)
        for _ in range(50):
            values = (rng.integers(0, 8, size=200) / 4).astype(np.float32)
            k = int(rng.integers(1, 200))
            assert np.array_equal(top_k_indices(values, k),
                                  sort_oracle(values, k))


class TestBuildMask:
    def test_exact_bit_count(self, make_dump):
        for p in (0.05, 0.15, 0.5, 1.0):
            net = build_mask(make_dump(), p)
            assert net.mask.k_selected == expected_k(p, 25)
            assert int(np.bitwise_count(net.bits).sum()) == net.mask.k_selected

    def test_selects_largest_values(self, make_dump):
        values = np.arange(25, dtype=np.float32)
        net = build_mask(make_dump(values), 0.2)  # k = 5
        selected = np.flatnonzero(unpack_bits(net.bits, 25))
        assert list(selected) == [20, 21, 22, 23, 24]

    def test_metadata_propagates(self, make_dump):
        dump = make_dump(language="ur", seed=2, objective="task_head_random",
                         corpus_tag="general_corpus")
        net = build_mask(dump, 0.15)
        m = net.mask
        assert (m.language, m.seed) == ("ur", 2)
        assert (m.objective, m.corpus_tag) == ("task_head_random", "general_corpus")
        assert m.manifest_hash == dump.manifest.layout_hash
        assert net.language == "ur"

    def test_deterministic(self, make_dump):
        dump = make_dump()
        assert build_mask(dump, 0.3) == build_mask(dump, 0.3)

    def test_p_out_of_range(self, make_dump):
        for bad in (0.0, -0.1, 1.5):
            with pytest.raises(ValidationError):
                build_mask(make_dump(), bad)

    def test_all_zero_dump_flags_degenerate_and_warns(self, make_dump):
        dump = make_dump(np.zeros(25, dtype=np.float32))
        with pytest.warns(UserWarning, match="all-zero"):
            net = build_mask(dump, 0.2)
        assert net.mask.flags & FLAG_DEGENERATE_SELECTION
        # tie rule degrades to the lowest parameter indices
        assert list(np.flatnonzero(unpack_bits(net.bits, 25))) == [0, 1, 2, 3, 4]

    def test_matches_sort_oracle_at_scale(self, make_dump):
        """Full-sort oracle over 1e5-element dumps, tie-heavy values."""
        n = 100_000
        manifest = LayoutManifest.build("big-test-model", [("w", (n,))])
        rng = np.random.default_rng(33)
        ps = (0.05, 0.15, 0.5, 1.0)
        start = time.perf_counter()
        for trial in range(100):
            if trial % 2:
                values = rng.random(n, dtype=np.float32)
            else:
                # quantized draws force threshold ties
                values = (rng.integers(0, 50, size=n) / 8).astype(np.float32)
            dump = make_dump(values, mani=manifest)
            p = ps[trial % len(ps)]
            net = build_mask(dump, p)
            k = expected_k(p, n)
            got = np.flatnonzero(unpack_bits(net.bits, n))
            assert net.mask.k_selected == k
            assert np.array_equal(got, sort_oracle(values, k))
        assert time.perf_counter() - start < 10.0


class TestJaccard:
    def test_hand_fixture(self):
        a = mask_from_indices(20, [0, 1, 2], language="aa")
        b = mask_from_indices(20, [1, 2, 3], language="bb")
        assert jaccard(a, b) == pytest.approx(2 / 4, abs=0)

    def test_self_similarity_is_one(self):
        a = mask_from_indices(64, [5, 6, 7, 9, 11, 40, 41, 55, 60, 63])
        assert jaccard(a, a) == 1.0

    def test_disjoint_masks(self):
        a = mask_from_indices(40, [0, 1, 2, 3, 4, 5], language="aa")
        b = mask_from_indices(40, [10, 11, 12, 13, 14, 15], language="bb")
        assert jaccard(a, b) == 0.0

    def test_symmetry_and_range(self):
        rng = np.random.default_rng(44)
        n = 512
        k = expected_k(0.15, n)
        for _ in range(20):
            a = mask_from_indices(n, rng.choice(n, k, replace=False), language="aa")
            b = mask_from_indices(n, rng.choice(n, k, replace=False), language="bb")
            ab = jaccard(a, b)
            assert ab == jaccard(b, a)
            assert 0.0 <= ab <= 1.0

    def test_matches_bigint_oracle_on_million_bits(self):
        rng = np.random.default_rng(55)
        n = 1_000_000
        k = expected_k(0.15, n)
        a = mask_from_indices(n, rng.choice(n, k, replace=False), language="aa")
        b = mask_from_indices(n, rng.choice(n, k, replace=False), language="bb")
        ia = int.from_bytes(a.bits.tobytes(), "little")
        ib = int.from_bytes(b.bits.tobytes(), "little")
        expected = (ia & ib).bit_count() / (ia | ib).bit_count()
        assert jaccard(a, b) == expected

    def test_hundred_million_bits_under_one_second(self):
        rng = np.random.default_rng(66)
        n = 100_000_000
        words = rng.integers(0, 2**63, size=n // 64, dtype=np.uint64)
        other = rng.integers(0, 2**63, size=n // 64, dtype=np.uint64)

        def wrap(bits, language):
            return SubNetwork(
                mask=MaskFile(
                    manifest_hash=1, total_params=n, p=0.15,
                    k_selected=0, bits=bits, language=language, seed=0,
                    objective="lm_masked", corpus_tag="task_corpus",
                ),
                language=language,
            )

        a, b = wrap(words, "aa"), wrap(other, "bb")
        start = time.perf_counter()
        value = jaccard(a, b)
        elapsed = time.perf_counter() - start
        assert 0.0 < value < 1.0
        assert elapsed < 1.0

    def test_layout_mismatch_rejected(self):
        a = mask_from_indices(20, [0, 1, 2], manifest_hash=1, language="aa")
        b = mask_from_indices(20, [0, 1, 2], manifest_hash=2, language="bb")
        with pytest.raises(LayoutMismatchError):
            jaccard(a, b)

    def test_p_mismatch_rejected(self):
        a = mask_from_indices(20, [0, 1, 2], p=0.15, language="aa")
        b = mask_from_indices(20, [0, 1, 2], p=0.2, language="bb")
        with pytest.raises(LayoutMismatchError):
            jaccard(a, b)


class TestSimilarityMatrix:
    def nets(self):
        # language aa: seeds 0/1; language bb: seeds 0/1 (N=20, k=3)
        return [
            mask_from_indices(20, [0, 1, 2], language="aa", seed=0),
            mask_from_indices(20, [0, 1, 3], language="aa", seed=1),
            mask_from_indices(20, [1, 2, 3], language="bb", seed=0),
            mask_from_indices(20, [0, 1, 3], language="bb", seed=1),
        ]

    def test_seed_averaging_on_similarity_values(self):
        nets = self.nets()
        matrix = similarity_matrix(nets)
        per_seed = [jaccard(nets[0], nets[2]), jaccard(nets[1], nets[3])]
        expected = sum(per_seed) / 2  # = (0.5 + 1.0) / 2
        assert matrix.score("aa", "bb") == pytest.approx(expected, abs=1e-15)
        assert per_seed[0] != per_seed[1]  # averaging actually matters here

    def test_structure(self):
        matrix = similarity_matrix(self.nets())
        assert matrix.languages == ("aa", "bb")
        assert matrix.method == "xsns"
        assert matrix.seeds_averaged == 2
        assert np.array_equal(np.diag(matrix.values), [1.0, 1.0])
        assert matrix.values[0, 1] == matrix.values[1, 0]

    def test_languages_sorted_regardless_of_input_order(self):
        nets = list(reversed(self.nets()))
        assert similarity_matrix(nets).languages == ("aa", "bb")

    def test_duplicate_language_seed_rejected(self):
        nets = self.nets()
        nets[1] = mask_from_indices(20, [4, 5, 6], language="aa", seed=0)
        with pytest.raises(ValidationError, match="duplicate"):
            similarity_matrix(nets)

    def test_ragged_seed_sets_rejected(self):
        with pytest.raises(ValidationError, match="ragged"):
            similarity_matrix(self.nets()[:3])

    def test_mixed_p_rejected(self):
        nets = self.nets()
        nets[3] = mask_from_indices(20, [0, 1, 3], language="bb", seed=1, p=0.2)
        with pytest.raises(ValidationError, match="p"):
            similarity_matrix(nets)

    def test_layout_mismatch_rejected(self):
        nets = self.nets()
        nets[3] = mask_from_indices(20, [0, 1, 3], language="bb", seed=1,
                                    manifest_hash=0xBEEF)
        with pytest.raises(LayoutMismatchError):
            similarity_matrix(nets)

    def test_empty_rejected(self):
        with pytest.raises(ValidationError):
            similarity_matrix([])
