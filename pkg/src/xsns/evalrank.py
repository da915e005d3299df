"""Source-language ranking and its evaluation against gold transfer scores.

Metrics follow one fixed convention set, repeated in every report header:
NDCG uses linear gains over raw gold scores with a log2(i+1) discount;
candidate pools exclude the target itself unless include_self is set;
zero-variance correlation inputs raise instead of propagating NaN.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import ValidationError
from .tensorstore import SimilarityMatrix

DEFAULT_K = 3

GOLD_HEADER = ("task", "source", "target", "seed", "score")

METRIC_NAMES = ("pearson", "spearman", "top1", "ndcg")

REPORT_CONVENTIONS = (
    "ndcg: linear gains over raw gold scores, discount log2(rank+1), "
    "ideal order = gold descending, 1.0 when the ideal DCG is 0",
    "candidate pool excludes the target language unless stated otherwise",
    "values are percentages (raw metric x 100)",
)


# ---------------------------------------------------------------------------
# gold transfer scores


@dataclass(eq=False)
class TransferScoreTable:
    """Gold cross-lingual transfer results: one row per fine-tuning run."""

    rows: list[tuple[str, str, str, int, float]]

    def validate(self) -> None:
        if not self.rows:
            raise ValidationError("empty transfer score table")
        seen = set()
        for task, source, target, seed, score in self.rows:
            key = (task, source, target, seed)
            if key in seen:
                raise ValidationError(f"duplicate gold row {key}")
            seen.add(key)
            if not (0.0 <= score <= 100.0):
                raise ValidationError(
                    f"gold score {score} for {key} outside [0, 100]"
                )

    def tasks(self) -> list[str]:
        return sorted({row[0] for row in self.rows})


def read_gold_table(path) -> TransferScoreTable:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValidationError(f"{path}: empty gold file") from None
        if tuple(h.strip() for h in header) != GOLD_HEADER:
            raise ValidationError(
                f"{path}: expected header {','.join(GOLD_HEADER)!r}, "
                f"got {','.join(header)!r}"
            )
        rows = []
        for lineno, fields in enumerate(reader, 2):
            if not fields:
                continue
            if len(fields) != 5:
                raise ValidationError(f"{path}:{lineno}: expected 5 fields")
            task, source, target, seed, score = (f.strip() for f in fields)
            rows.append((task, source, target, int(seed), float(score)))
    table = TransferScoreTable(rows=rows)
    table.validate()
    return table


def write_gold_table(path, table: TransferScoreTable) -> None:
    table.validate()
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(GOLD_HEADER)
        for task, source, target, seed, score in table.rows:
            writer.writerow([task, source, target, seed, f"{score:.9g}"])


def aggregate_gold(
    table: TransferScoreTable, task: str
) -> dict[tuple[str, str], float]:
    """Mean gold score over seeds per (source, target) pair for one task."""
    sums: dict[tuple[str, str], list[float]] = {}
    for row_task, source, target, _seed, score in table.rows:
        if row_task != task:
            continue
        sums.setdefault((source, target), []).append(score)
    if not sums:
        raise ValidationError(f"gold table has no rows for task {task!r}")
    return {pair: math.fsum(vals) / len(vals) for pair, vals in sums.items()}


# ---------------------------------------------------------------------------
# ranking


@dataclass(eq=False)
class Ranking:
    """Candidate sources for one target, best first."""

    target: str
    ordered_sources: list[str]
    predicted_scores: list[float]

    def validate(self) -> None:
        if len(self.ordered_sources) != len(self.predicted_scores):
            raise ValidationError("sources and scores must be parallel lists")
        if not self.ordered_sources:
            raise ValidationError(f"no candidates for target {self.target!r}")
        if self.target in self.ordered_sources:
            raise ValidationError(
                f"target {self.target!r} appears in its own candidate list"
            )


POLARITIES = ("higher_better", "lower_better")


def rank_sources(
    target: str,
    matrix: SimilarityMatrix,
    polarity: str = "higher_better",
    *,
    include_self: bool = False,
) -> Ranking:
    """Order candidate sources for `target` by matrix score.

    Ties break by ascending language code so rankings are reproducible.
    Matrices produced by this package are already higher-is-better; the
    lower_better polarity serves externally supplied raw divergences.
    """
    if polarity not in POLARITIES:
        raise ValidationError(f"unknown polarity {polarity!r}")
    if target not in matrix.languages:
        raise ValidationError(f"target {target!r} not in matrix languages")
    col = matrix.languages.index(target)
    candidates = []
    for row, code in enumerate(matrix.languages):
        if code == target and not include_self:
            continue
        score = float(matrix.values[row, col])
        if math.isnan(score):
            raise ValidationError(f"NaN similarity for pair ({code}, {target})")
        candidates.append((code, score))
    sign = -1.0 if polarity == "higher_better" else 1.0
    candidates.sort(key=lambda cs: (sign * cs[1], cs[0]))
    ranking = Ranking(
        target=target,
        ordered_sources=[c for c, _ in candidates],
        predicted_scores=[s for _, s in candidates],
    )
    if include_self:
        # validate() rejects self-candidates; the rest still applies
        if len(ranking.ordered_sources) != len(ranking.predicted_scores):
            raise ValidationError("sources and scores must be parallel lists")
    else:
        ranking.validate()
    return ranking


# ---------------------------------------------------------------------------
# correlation metrics


def _check_pair(x: Sequence[float], y: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    ax = np.asarray(x, dtype=np.float64)
    ay = np.asarray(y, dtype=np.float64)
    if ax.ndim != 1 or ay.ndim != 1 or len(ax) != len(ay):
        raise ValidationError("inputs must be equal-length flat sequences")
    if len(ax) < 2:
        raise ValidationError(f"need >= 2 points, got {len(ax)}")
    if not (np.isfinite(ax).all() and np.isfinite(ay).all()):
        raise ValidationError("non-finite values in correlation input")
    if np.ptp(ax) == 0.0:
        raise ValidationError("zero variance in first sequence")
    if np.ptp(ay) == 0.0:
        raise ValidationError("zero variance in second sequence")
    return ax, ay


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    ax, ay = _check_pair(x, y)
    dx = ax - ax.mean()
    dy = ay - ay.mean()
    r = float(np.dot(dx, dy) / math.sqrt(np.dot(dx, dx) * np.dot(dy, dy)))
    return min(1.0, max(-1.0, r))


def fractional_ranks(values: Sequence[float]) -> np.ndarray:
    """1-based ranks; tied values share the average of their positions."""
    arr = np.asarray(values, dtype=np.float64)
    order = np.argsort(arr, kind="stable")
    ranks = np.empty(len(arr), dtype=np.float64)
    i = 0
    while i < len(arr):
        j = i
        while j + 1 < len(arr) and arr[order[j + 1]] == arr[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def spearman(x: Sequence[float], y: Sequence[float]) -> float:
    ax, ay = _check_pair(x, y)
    return pearson(fractional_ranks(ax), fractional_ranks(ay))


# ---------------------------------------------------------------------------
# ranking metrics


def _gold_for(ranking: Ranking, gold: Mapping[str, float]) -> list[float]:
    missing = [c for c in ranking.ordered_sources if c not in gold]
    if missing:
        raise ValidationError(
            f"gold scores missing for target {ranking.target!r}: "
            + ", ".join(sorted(missing))
        )
    return [float(gold[c]) for c in ranking.ordered_sources]


def top1(ranking: Ranking, gold: Mapping[str, float]) -> int:
    """1 iff the predicted best source attains the maximum gold score."""
    gold_scores = _gold_for(ranking, gold)
    return int(gold_scores[0] == max(gold_scores))


def ndcg_at_k(ranking: Ranking, gold: Mapping[str, float], k: int = DEFAULT_K) -> float:
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    gold_scores = _gold_for(ranking, gold)
    if any(g < 0 for g in gold_scores):
        raise ValidationError("gold scores must be nonnegative for NDCG")
    depth = min(k, len(gold_scores))
    dcg = math.fsum(
        gold_scores[i] / math.log2(i + 2) for i in range(depth)
    )
    ideal = sorted(gold_scores, reverse=True)
    idcg = math.fsum(ideal[i] / math.log2(i + 2) for i in range(depth))
    if idcg == 0.0:
        return 1.0
    return dcg / idcg


# ---------------------------------------------------------------------------
# full evaluation


@dataclass(eq=False)
class EvalReport:
    """Per-target and mean ranking metrics for one method on one task.

    All values are percentages (raw metric x 100).
    """

    method: str
    task: str
    k: int
    targets: list[str]
    per_target: dict[str, dict[str, float]]
    means: dict[str, float] = field(default_factory=dict)

    def validate(self) -> None:
        if not self.targets:
            raise ValidationError("report covers no targets")
        for t in self.targets:
            metrics = self.per_target.get(t)
            if metrics is None or set(metrics) != set(METRIC_NAMES):
                raise ValidationError(f"incomplete metrics for target {t!r}")
        for name in METRIC_NAMES:
            mean = math.fsum(self.per_target[t][name] for t in self.targets)
            mean /= len(self.targets)
            if abs(self.means.get(name, math.nan) - mean) > 1e-9:
                raise ValidationError(f"mean {name} does not match per-target values")


def evaluate(
    matrix: SimilarityMatrix,
    gold: TransferScoreTable,
    task: str,
    k: int = DEFAULT_K,
    *,
    polarity: str = "higher_better",
    include_self: bool = False,
) -> EvalReport:
    """Rank sources for every target in the matrix and score the rankings."""
    pair_gold = aggregate_gold(gold, task)
    gold_langs = {src for src, _ in pair_gold} | {tgt for _, tgt in pair_gold}
    missing_langs = [c for c in matrix.languages if c not in gold_langs]
    if missing_langs:
        raise ValidationError(
            f"gold table for task {task!r} lacks languages: "
            + ", ".join(missing_langs)
        )
    targets = list(matrix.languages)
    per_target: dict[str, dict[str, float]] = {}
    gaps = []
    for target in targets:
        ranking = rank_sources(target, matrix, polarity, include_self=include_self)
        absent = [
            (c, target) for c in ranking.ordered_sources if (c, target) not in pair_gold
        ]
        if absent:
            gaps.extend(absent)
            continue
        target_gold = {c: pair_gold[(c, target)] for c in ranking.ordered_sources}
        gold_vector = [target_gold[c] for c in ranking.ordered_sources]
        per_target[target] = {
            "pearson": 100.0 * pearson(ranking.predicted_scores, gold_vector),
            "spearman": 100.0 * spearman(ranking.predicted_scores, gold_vector),
            "top1": 100.0 * top1(ranking, target_gold),
            "ndcg": 100.0 * ndcg_at_k(ranking, target_gold, k),
        }
    if gaps:
        listing = ", ".join(f"{s}->{t}" for s, t in sorted(gaps))
        raise ValidationError(f"gold table missing pairs: {listing}")
    report = EvalReport(
        method=matrix.method,
        task=task,
        k=k,
        targets=targets,
        per_target=per_target,
        means={
            name: math.fsum(per_target[t][name] for t in targets) / len(targets)
            for name in METRIC_NAMES
        },
    )
    report.validate()
    return report


# ---------------------------------------------------------------------------
# report serialization


def write_report_csv(path, reports: Sequence[EvalReport],
                     notes: Sequence[str] = ()) -> None:
    """Per-target rows plus a `mean` row per report, with convention notes."""
    if not reports:
        raise ValidationError("no reports to write")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for note in (*REPORT_CONVENTIONS, *notes):
            fh.write(f"# {note}\n")
        writer = csv.writer(fh)
        writer.writerow(["method", "task", "k", "target", *METRIC_NAMES])
        for report in reports:
            report.validate()
            for target in report.targets:
                metrics = report.per_target[target]
                writer.writerow(
                    [report.method, report.task, report.k, target]
                    + [f"{metrics[name]:.9g}" for name in METRIC_NAMES]
                )
            writer.writerow(
                [report.method, report.task, report.k, "mean"]
                + [f"{report.means[name]:.9g}" for name in METRIC_NAMES]
            )


def format_report_table(reports: Sequence[EvalReport]) -> str:
    """Aligned text table: one row per method, mean metrics as columns."""
    if not reports:
        raise ValidationError("no reports to format")
    k = reports[0].k
    task = reports[0].task
    header = ["method", "pearson", "spearman", "top-1", f"ndcg@{k}"]
    rows = [header]
    for report in reports:
        report.validate()
        rows.append(
            [report.method]
            + [f"{report.means[name]:.2f}" for name in METRIC_NAMES]
        )
    widths = [max(len(row[i]) for row in rows) for i in range(len(header))]
    lines = [f"task: {task} (values in percent, averaged over targets)"]
    for note in REPORT_CONVENTIONS:
        lines.append(f"# {note}")
    for idx, row in enumerate(rows):
        cells = [row[0].ljust(widths[0])] + [
            cell.rjust(widths[i]) for i, cell in enumerate(row[1:], 1)
        ]
        lines.append("  ".join(cells))
        if idx == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"
