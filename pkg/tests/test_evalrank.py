"""Ranking construction and metric formulas against independent oracles."""
import csv
import itertools
import math

import numpy as np
import pytest
import scipy.stats

from xsns.errors import ValidationError
from xsns.evalrank import (
    DEFAULT_K,
    METRIC_NAMES,
    Ranking,
    TransferScoreTable,
    aggregate_gold,
    evaluate,
    format_report_table,
    fractional_ranks,
    ndcg_at_k,
    pearson,
    rank_sources,
    read_gold_table,
    spearman,
    top1,
    write_gold_table,
    write_report_csv,
)
from xsns.tensorstore import SimilarityMatrix


def matrix_of(languages, values, method="xsns"):
    return SimilarityMatrix(
        languages=tuple(languages),
        values=np.asarray(values, dtype=np.float64),
        method=method,
    )


def ranking_of(target, sources, scores=None):
    scores = list(scores) if scores is not None else list(
        range(len(sources), 0, -1))
    return Ranking(target=target, ordered_sources=list(sources),
                   predicted_scores=[float(s) for s in scores])


class TestGoldTable:
    def rows(self):
        return [
            ("pos", "de", "en", 0, 70.0),
            ("pos", "de", "en", 1, 72.0),
            ("pos", "fi", "en", 0, 55.5),
            ("ner", "de", "en", 0, 61.0),
        ]

    def test_roundtrip(self, tmp_path):
        table = TransferScoreTable(rows=self.rows())
        path = tmp_path / "gold.csv"
        write_gold_table(path, table)
        loaded = read_gold_table(path)
        assert loaded.rows == table.rows

    def test_tasks_sorted_unique(self):
        assert TransferScoreTable(rows=self.rows()).tasks() == ["ner", "pos"]

    def test_duplicate_key_rejected(self):
        rows = self.rows() + [("pos", "de", "en", 0, 71.0)]
        with pytest.raises(ValidationError, match="duplicate"):
            TransferScoreTable(rows=rows).validate()

    def test_score_range_enforced(self):
        for bad in (-0.5, 100.5):
            with pytest.raises(ValidationError, match="outside"):
                TransferScoreTable(rows=[("pos", "de", "en", 0, bad)]).validate()

    def test_bad_header_rejected(self, tmp_path):
        path = tmp_path / "gold.csv"
        path.write_text("task,src,tgt,seed,score\npos,de,en,0,70\n")
        with pytest.raises(ValidationError, match="header"):
            read_gold_table(path)

    def test_empty_file_rejected(self, tmp_path):
        path = tmp_path / "gold.csv"
        path.write_text("")
        with pytest.raises(ValidationError, match="empty"):
            read_gold_table(path)

    def test_short_row_rejected_with_line_number(self, tmp_path):
        path = tmp_path / "gold.csv"
        path.write_text("task,source,target,seed,score\npos,de,en,0\n")
        with pytest.raises(ValidationError, match=":2"):
            read_gold_table(path)


class TestAggregateGold:
    def test_single_seed_passthrough(self):
        table = TransferScoreTable(rows=[("pos", "de", "en", 0, 70.0)])
        assert aggregate_gold(table, "pos") == {("de", "en"): 70.0}

    def test_three_seed_mean(self):
        rows = [("pos", "de", "en", s, v) for s, v in enumerate((50.0, 60.0, 70.0))]
        table = TransferScoreTable(rows=rows)
        assert aggregate_gold(table, "pos") == {("de", "en"): 60.0}

    def test_matches_naive_groupby_oracle(self):
        rng = np.random.default_rng(7)
        langs = ["aa", "bb", "cc", "dd"]
        rows = []
        for s in langs:
            for t in langs:
                if s == t:
                    continue
                for seed in range(3):
                    rows.append(("pos", s, t, seed,
                                 float(rng.uniform(0, 100))))
        table = TransferScoreTable(rows=rows)
        got = aggregate_gold(table, "pos")
        oracle = {}
        for task, s, t, _seed, v in rows:
            oracle.setdefault((s, t), []).append(v)
        for pair, vals in oracle.items():
            assert got[pair] == pytest.approx(sum(vals) / len(vals), abs=1e-12)

    def test_unknown_task_rejected(self):
        table = TransferScoreTable(rows=[("pos", "de", "en", 0, 70.0)])
        with pytest.raises(ValidationError, match="no rows"):
            aggregate_gold(table, "ner")


class TestRankSources:
    def test_descending_by_score(self):
        matrix = matrix_of(("aa", "bb", "tt"), [
            [1.0, 0.5, 0.9],
            [0.5, 1.0, 0.2],
            [0.9, 0.2, 1.0],
        ])
        ranking = rank_sources("tt", matrix)
        assert ranking.ordered_sources == ["aa", "bb"]
        assert ranking.predicted_scores == [0.9, 0.2]

    def test_lower_better_polarity(self):
        # externally supplied raw divergences: 0.1 beats 0.7
        matrix = matrix_of(("aa", "bb", "tt"), [
            [0.0, 0.3, 0.7],
            [0.3, 0.0, 0.1],
            [0.7, 0.1, 0.0],
        ], method="lex")
        ranking = rank_sources("tt", matrix, "lower_better")
        assert ranking.ordered_sources == ["bb", "aa"]

    def test_ties_break_alphabetically(self):
        matrix = matrix_of(("cc", "bb", "tt"), [
            [1.0, 0.0, 0.4],
            [0.0, 1.0, 0.4],
            [0.4, 0.4, 1.0],
        ])
        assert rank_sources("tt", matrix).ordered_sources == ["bb", "cc"]

    def test_target_excluded_by_default(self):
        matrix = matrix_of(("aa", "tt"), [[1.0, 0.5], [0.5, 1.0]])
        ranking = rank_sources("tt", matrix)
        assert "tt" not in ranking.ordered_sources

    def test_include_self_keeps_target(self):
        matrix = matrix_of(("aa", "tt"), [[1.0, 0.5], [0.5, 1.0]])
        ranking = rank_sources("tt", matrix, include_self=True)
        assert ranking.ordered_sources == ["tt", "aa"]  # self-sim 1.0 wins

    def test_unknown_target_rejected(self):
        matrix = matrix_of(("aa", "bb"), [[1.0, 0.5], [0.5, 1.0]])
        with pytest.raises(ValidationError, match="not in matrix"):
            rank_sources("zz", matrix)

    def test_nan_entry_rejected(self):
        matrix = matrix_of(("aa", "bb"), [[1.0, math.nan], [math.nan, 1.0]])
        with pytest.raises(ValidationError, match="NaN"):
            rank_sources("bb", matrix)

    def test_unknown_polarity_rejected(self):
        matrix = matrix_of(("aa", "bb"), [[1.0, 0.5], [0.5, 1.0]])
        with pytest.raises(ValidationError, match="polarity"):
            rank_sources("bb", matrix, "biggest")


class TestPearson:
    def test_affine_is_one(self):
        x = [1.0, 2.0, 5.0, 7.0]
        assert pearson(x, [2 * v + 1 for v in x]) == 1.0

    def test_negation_is_minus_one(self):
        x = [1.0, 2.0, 5.0]
        assert pearson(x, [-v for v in x]) == -1.0

    def test_hand_fixture(self):
        # dx=(-1,0,1), dy=(0,1,-1): cov 1, sds 2: r = 1/2
        assert pearson([1, 2, 3], [1, 3, 2]) == pytest.approx(0.5, abs=1e-9)

    def test_matches_scipy_on_random_draws(self):
        rng = np.random.default_rng(13)
        for _ in range(25):
            x = rng.normal(size=10)
            y = rng.normal(size=10)
            oracle = scipy.stats.pearsonr(x, y).statistic
            assert pearson(x, y) == pytest.approx(oracle, abs=1e-12)

    def test_zero_variance_is_error_not_nan(self):
        with pytest.raises(ValidationError, match="variance"):
            pearson([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])
        with pytest.raises(ValidationError, match="variance"):
            pearson([1.0, 2.0, 3.0], [4.0, 4.0, 4.0])

    def test_short_and_ragged_inputs_rejected(self):
        with pytest.raises(ValidationError):
            pearson([1.0], [2.0])
        with pytest.raises(ValidationError):
            pearson([1.0, 2.0], [1.0, 2.0, 3.0])

    def test_nonfinite_rejected(self):
        with pytest.raises(ValidationError, match="finite"):
            pearson([1.0, math.inf], [1.0, 2.0])


class TestSpearman:
    def test_fractional_ranks_average_ties(self):
        assert list(fractional_ranks([10.0, 20.0, 20.0, 30.0])) == [1.0, 2.5, 2.5, 4.0]
        assert list(fractional_ranks([5.0, 5.0, 5.0])) == [2.0, 2.0, 2.0]

    def test_strictly_monotone_transform_is_one(self):
        rng = np.random.default_rng(19)
        for _ in range(10):
            x = rng.normal(size=8)
            assert spearman(x, np.exp(x)) == 1.0
            assert spearman(x, x**3 + 2 * x) == 1.0

    def test_reversal_is_minus_one(self):
        x = [1.0, 2.0, 3.0, 4.0]
        assert spearman(x, x[::-1]) == -1.0

    def test_tie_fixture_matches_rank_table_oracle(self):
        # ranks of x=(1,2,2,3) are (1,2.5,2.5,4); closed form 3/sqrt(10)
        value = spearman([1, 2, 2, 3], [1, 3, 2, 4])
        assert value == pytest.approx(3 / math.sqrt(10), abs=1e-9)
        assert value == pearson([1.0, 2.5, 2.5, 4.0], [1.0, 3.0, 2.0, 4.0])

    def test_matches_scipy_with_ties(self):
        rng = np.random.default_rng(23)
        for _ in range(25):
            x = rng.integers(0, 5, size=12).astype(float)
            y = rng.integers(0, 5, size=12).astype(float)
            if np.ptp(x) == 0 or np.ptp(y) == 0:
                continue
            oracle = scipy.stats.spearmanr(x, y).statistic
            assert spearman(x, y) == pytest.approx(oracle, abs=1e-12)


class TestTop1:
    def test_unique_best_hit(self):
        r = ranking_of("tt", ["aa", "bb", "cc"])
        assert top1(r, {"aa": 90.0, "bb": 50.0, "cc": 10.0}) == 1

    def test_worst_pick_misses(self):
        r = ranking_of("tt", ["cc", "bb", "aa"])
        assert top1(r, {"aa": 90.0, "bb": 50.0, "cc": 10.0}) == 0

    def test_any_gold_argmax_counts(self):
        gold = {"aa": 90.0, "bb": 90.0, "cc": 10.0}
        assert top1(ranking_of("tt", ["aa", "bb", "cc"]), gold) == 1
        assert top1(ranking_of("tt", ["bb", "aa", "cc"]), gold) == 1
        assert top1(ranking_of("tt", ["cc", "aa", "bb"]), gold) == 0

    def test_missing_gold_listed(self):
        r = ranking_of("tt", ["aa", "bb", "cc"])
        with pytest.raises(ValidationError, match="bb, cc"):
            top1(r, {"aa": 90.0})


class TestNdcg:
    def test_gold_order_scores_one(self):
        r = ranking_of("tt", ["aa", "bb", "cc"])
        assert ndcg_at_k(r, {"aa": 80.0, "bb": 50.0, "cc": 10.0}) == 1.0

    def test_reversed_fixture(self):
        # gold (3,2,1) predicted worst-first:
        #   DCG  = 1 + 2/log2(3) + 3/2, IDCG = 3 + 2/log2(3) + 1/2
        r = ranking_of("tt", ["aa", "bb", "cc"])
        gold = {"aa": 1.0, "bb": 2.0, "cc": 3.0}
        value = ndcg_at_k(r, gold, k=3)
        assert value == pytest.approx(0.7899980042460358, abs=1e-9)
        assert value == pytest.approx(0.79000, abs=1e-5)

    def test_k_beyond_pool_truncates(self):
        r = ranking_of("tt", ["aa", "bb"])
        gold = {"aa": 10.0, "bb": 70.0}
        assert ndcg_at_k(r, gold, k=50) == ndcg_at_k(r, gold, k=2)

    def test_default_k_is_three(self):
        r = ranking_of("tt", ["aa", "bb", "cc", "dd"])
        gold = {"aa": 5.0, "bb": 40.0, "cc": 30.0, "dd": 20.0}
        assert ndcg_at_k(r, gold) == ndcg_at_k(r, gold, k=DEFAULT_K)
        assert ndcg_at_k(r, gold, k=3) != ndcg_at_k(r, gold, k=4)

    def test_all_zero_gold_returns_one(self):
        r = ranking_of("tt", ["aa", "bb"])
        assert ndcg_at_k(r, {"aa": 0.0, "bb": 0.0}) == 1.0

    def test_negative_gold_rejected(self):
        r = ranking_of("tt", ["aa", "bb"])
        with pytest.raises(ValidationError, match="nonnegative"):
            ndcg_at_k(r, {"aa": -1.0, "bb": 2.0})

    def test_bad_k_rejected(self):
        r = ranking_of("tt", ["aa", "bb"])
        with pytest.raises(ValidationError, match="k must be"):
            ndcg_at_k(r, {"aa": 1.0, "bb": 2.0}, k=0)

    def test_brute_force_permutations(self):
        """All orderings of up to 6 candidates: gold-descending order is the
        unique maximum at 1.0 when gold scores are distinct."""
        rng = np.random.default_rng(29)
        for n in (3, 4, 5, 6):
            codes = [f"l{i}" for i in range(n)]
            scores = rng.choice(np.arange(1, 100), size=n, replace=False)
            gold = {c: float(s) for c, s in zip(codes, scores)}
            best_order = sorted(codes, key=lambda c: -gold[c])
            for k in (2, 3, n):
                seen = {}
                for perm in itertools.permutations(codes):
                    value = ndcg_at_k(ranking_of("tt", perm), gold, k=k)
                    assert 0.0 <= value <= 1.0
                    seen[perm] = value
                assert seen[tuple(best_order)] == 1.0
                top_perms = [p for p, v in seen.items() if v == 1.0]
                # distinct gold: only orderings agreeing on the top-k slots tie at 1.0
                for p in top_perms:
                    assert list(p[:k]) == best_order[:k]

    def test_reversed_fixture_ranks_where_expected(self):
        gold = {"aa": 1.0, "bb": 2.0, "cc": 3.0}
        values = {
            perm: ndcg_at_k(ranking_of("tt", perm), gold, k=3)
            for perm in itertools.permutations(("aa", "bb", "cc"))
        }
        assert values[("cc", "bb", "aa")] == 1.0
        assert values[("aa", "bb", "cc")] == min(values.values())


class TestRankingInvariance:
    """NDCG, Top-1 and Spearman are unchanged by strictly increasing
    transforms of the predicted scores; 50 randomized trials."""

    TRANSFORMS = (
        lambda v, a, b: a * v + b,
        lambda v, a, b: np.exp(a * v) + b,
        lambda v, a, b: v**3 + a * v + b,
        lambda v, a, b: np.arctan(v) * a + b,
    )

    def test_invariance_50_trials(self):
        rng = np.random.default_rng(31)
        langs = ("aa", "bb", "cc", "dd", "ee", "tt")
        for trial in range(50):
            values = rng.uniform(-1, 1, size=(6, 6))
            values = 0.5 * (values + values.T)
            np.fill_diagonal(values, 1.0)
            matrix = matrix_of(langs, values)
            gold = {c: float(rng.uniform(1, 99)) for c in langs if c != "tt"}

            base = rank_sources("tt", matrix)
            f = self.TRANSFORMS[trial % len(self.TRANSFORMS)]
            a, b = float(rng.uniform(0.1, 5.0)), float(rng.uniform(-3, 3))
            transformed = matrix_of(langs, f(values, a, b))
            moved = rank_sources("tt", transformed)

            assert moved.ordered_sources == base.ordered_sources
            assert top1(moved, gold) == top1(base, gold)
            assert ndcg_at_k(moved, gold, k=3) == ndcg_at_k(base, gold, k=3)
            gold_vec = [gold[c] for c in base.ordered_sources]
            assert spearman(moved.predicted_scores, gold_vec) == pytest.approx(
                spearman(base.predicted_scores, gold_vec), abs=1e-12)


def gold_from_matrix(matrix, *, task="pos", noise=None, seeds=(0,)):
    """Gold table whose (source, target) score is 100 * similarity."""
    rows = []
    for i, s in enumerate(matrix.languages):
        for j, t in enumerate(matrix.languages):
            if s == t:
                continue
            for seed in seeds:
                bump = 0.0 if noise is None else noise[(s, t, seed)]
                rows.append((task, s, t, seed,
                             float(np.clip(100 * matrix.values[i, j] + bump, 0, 100))))
    return TransferScoreTable(rows=rows)


class TestEvaluate:
    def random_matrix(self, seed=37, n=4):
        rng = np.random.default_rng(seed)
        langs = tuple(sorted(f"l{i}" for i in range(n)))
        values = rng.uniform(0.05, 0.95, size=(n, n))
        values = 0.5 * (values + values.T)
        np.fill_diagonal(values, 1.0)
        return matrix_of(langs, values)

    def test_perfect_predictor_scores_100(self):
        matrix = self.random_matrix()
        report = evaluate(matrix, gold_from_matrix(matrix), "pos")
        assert report.means["spearman"] == pytest.approx(100.0, abs=1e-9)
        assert report.means["top1"] == 100.0
        assert report.means["ndcg"] == pytest.approx(100.0, abs=1e-9)

    def test_constant_matrix_surfaces_zero_variance(self):
        langs = ("aa", "bb", "cc")
        values = np.full((3, 3), 0.5)
        np.fill_diagonal(values, 1.0)
        matrix = matrix_of(langs, values)
        gold = TransferScoreTable(rows=[
            ("pos", s, t, 0, 50.0 + 3 * i)
            for i, (s, t) in enumerate(
                (s, t) for s in langs for t in langs if s != t)
        ])
        with pytest.raises(ValidationError, match="variance"):
            evaluate(matrix, gold, "pos")

    def test_report_matches_first_principles_recomputation(self):
        rng = np.random.default_rng(41)
        matrix = self.random_matrix(seed=43, n=5)
        noise = {}
        for s in matrix.languages:
            for t in matrix.languages:
                for seed in (0, 1):
                    noise[(s, t, seed)] = float(rng.normal(0, 8))
        gold = gold_from_matrix(matrix, noise=noise, seeds=(0, 1))
        report = evaluate(matrix, gold, "pos", k=3)

        pair_gold = aggregate_gold(gold, "pos")
        for target in matrix.languages:
            col = matrix.languages.index(target)
            cands = sorted(
                (c for c in matrix.languages if c != target),
                key=lambda c: (-matrix.values[matrix.languages.index(c), col], c),
            )
            pred = [matrix.values[matrix.languages.index(c), col] for c in cands]
            gvec = [pair_gold[(c, target)] for c in cands]
            got = report.per_target[target]
            assert got["pearson"] == pytest.approx(
                100 * scipy.stats.pearsonr(pred, gvec).statistic, abs=1e-9)
            assert got["spearman"] == pytest.approx(
                100 * scipy.stats.spearmanr(pred, gvec).statistic, abs=1e-9)
            assert got["top1"] == 100.0 * (gvec[0] == max(gvec))
            dcg = sum(gvec[i] / math.log2(i + 2) for i in range(3))
            idcg = sum(v / math.log2(i + 2)
                       for i, v in enumerate(sorted(gvec, reverse=True)[:3]))
            assert got["ndcg"] == pytest.approx(100 * dcg / idcg, abs=1e-9)
        for name in METRIC_NAMES:
            expected = sum(report.per_target[t][name]
                           for t in matrix.languages) / len(matrix.languages)
            assert report.means[name] == pytest.approx(expected, abs=1e-9)

    def test_missing_language_listed(self):
        matrix = self.random_matrix(n=3)
        gold = TransferScoreTable(rows=[("pos", "l0", "l1", 0, 50.0)])
        with pytest.raises(ValidationError, match="l2"):
            evaluate(matrix, gold, "pos")

    def test_missing_pairs_listed_exhaustively(self):
        matrix = self.random_matrix(n=3)
        gold = gold_from_matrix(matrix)
        rows = [r for r in gold.rows
                if (r[1], r[2]) not in {("l0", "l1"), ("l2", "l1")}]
        with pytest.raises(ValidationError, match=r"l0->l1.*l2->l1"):
            evaluate(matrix, TransferScoreTable(rows=rows), "pos")

    def test_deterministic(self):
        matrix = self.random_matrix()
        gold = gold_from_matrix(matrix)
        a = evaluate(matrix, gold, "pos")
        b = evaluate(matrix, gold, "pos")
        assert a.per_target == b.per_target
        assert a.means == b.means

    def test_mean_mismatch_rejected(self):
        matrix = self.random_matrix()
        report = evaluate(matrix, gold_from_matrix(matrix), "pos")
        report.means["ndcg"] += 1.0
        with pytest.raises(ValidationError, match="mean"):
            report.validate()


class TestReportSerialization:
    def reports(self):
        matrix = TestEvaluate().random_matrix()
        gold = gold_from_matrix(matrix)
        return [evaluate(matrix, gold, "pos")]

    def test_csv_layout(self, tmp_path):
        path = tmp_path / "report.csv"
        write_report_csv(path, self.reports(), notes=("extra note",))
        lines = path.read_text().splitlines()
        comments = [l for l in lines if l.startswith("#")]
        assert any("ndcg: linear gains" in c for c in comments)
        assert any("excludes the target" in c for c in comments)
        assert any("percentages" in c for c in comments)
        assert comments[-1] == "# extra note"
        body = [l for l in lines if not l.startswith("#")]
        assert body[0] == "method,task,k,target,pearson,spearman,top1,ndcg"
        assert len(body) == 1 + 4 + 1  # header, four targets, mean row
        assert body[-1].split(",")[3] == "mean"

    def test_csv_values_parse_back(self, tmp_path):
        report = self.reports()[0]
        path = tmp_path / "report.csv"
        write_report_csv(path, [report])
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh)
                    if r and not r[0].startswith("#")][1:]
        for row in rows:
            target = row[3]
            source = report.means if target == "mean" else report.per_target[target]
            for name, cell in zip(METRIC_NAMES, row[4:]):
                assert float(cell) == pytest.approx(source[name], rel=1e-8)

    def test_empty_reports_rejected(self, tmp_path):
        with pytest.raises(ValidationError):
            write_report_csv(tmp_path / "report.csv", [])

    def test_text_table_layout(self):
        text = format_report_table(self.reports())
        assert "ndcg@3" in text
        assert "xsns" in text
        assert text.splitlines()[0].startswith("task: pos")
