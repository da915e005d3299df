"""Predicting transfer scores from similarity: ordinary least squares and a
random-intercept-per-target mixed-effects fit.

The mixed model is score = beta0 + beta1*sim + u_target + noise with
u ~ N(0, sigma2_u), noise ~ N(0, sigma2_e). Likelihood is plain ML profiled
over the variance ratio lambda = sigma2_u / sigma2_e; for fixed lambda the
betas, the variances and the intercepts all have closed forms, so the fit
reduces to a 1-D golden-section search over ln(lambda).
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ValidationError, XsnsError
from .evalrank import (
    DEFAULT_K,
    Ranking,
    TransferScoreTable,
    aggregate_gold,
    ndcg_at_k,
    top1,
)
from .tensorstore import SimilarityMatrix

LOG_LAMBDA_LO = -12.0
LOG_LAMBDA_HI = 12.0
GOLDEN_TOL = 1e-8
MAX_GOLDEN_ITERS = 200

_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


class ConvergenceError(XsnsError):
    """The variance-ratio search did not reach tolerance within its budget."""


# ---------------------------------------------------------------------------
# dataset


@dataclass(eq=False)
class RegressionDataset:
    """(similarity feature, gold score) pairs keyed by language pair."""

    rows: list[tuple[str, str, float, float]]

    def validate(self) -> None:
        if len(self.rows) < 2:
            raise ValidationError(f"need >= 2 rows, got {len(self.rows)}")
        seen = set()
        for source, target, feature, score in self.rows:
            if (source, target) in seen:
                raise ValidationError(f"duplicate pair ({source}, {target})")
            seen.add((source, target))
            if not (math.isfinite(feature) and math.isfinite(score)):
                raise ValidationError(
                    f"non-finite row for pair ({source}, {target})"
                )
        features = {row[2] for row in self.rows}
        if len(features) < 2:
            raise ValidationError(
                "all feature values identical; slope not identifiable"
            )

    def arrays(self) -> tuple[np.ndarray, np.ndarray, list[str]]:
        f = np.array([row[2] for row in self.rows], dtype=np.float64)
        s = np.array([row[3] for row in self.rows], dtype=np.float64)
        targets = [row[1] for row in self.rows]
        return f, s, targets

    def target_codes(self) -> list[str]:
        return sorted({row[1] for row in self.rows})


def dataset_from(
    matrix: SimilarityMatrix,
    gold: TransferScoreTable,
    task: str,
    *,
    include_self: bool = False,
) -> RegressionDataset:
    """All (source, target) pairs covered by both the matrix and the gold
    table for one task, in sorted pair order."""
    pair_gold = aggregate_gold(gold, task)
    rows = []
    for i, source in enumerate(matrix.languages):
        for j, target in enumerate(matrix.languages):
            if source == target and not include_self:
                continue
            if (source, target) not in pair_gold:
                raise ValidationError(
                    f"gold table for task {task!r} lacks pair {source}->{target}"
                )
            rows.append(
                (source, target, float(matrix.values[i, j]),
                 pair_gold[(source, target)])
            )
    dataset = RegressionDataset(rows=rows)
    dataset.validate()
    return dataset


# ---------------------------------------------------------------------------
# fit results


@dataclass(eq=False)
class FitResult:
    method: str  # "ols" or "mer"
    beta0: float
    beta1: float
    rmse: float
    random_intercepts: dict[str, float] = field(default_factory=dict)
    sigma2_residual: float = 0.0
    sigma2_intercept: float = 0.0
    log_likelihood: float = math.nan
    degenerate: bool = False

    def predict(self, feature: float, target: str | None = None) -> float:
        u = self.random_intercepts.get(target, 0.0) if target else 0.0
        return self.beta0 + self.beta1 * feature + u

    def validate(self) -> None:
        if self.method not in ("ols", "mer"):
            raise ValidationError(f"unknown fit method {self.method!r}")
        for value in (self.beta0, self.beta1, self.rmse):
            if not math.isfinite(value):
                raise ValidationError("non-finite fit parameters")
        if self.rmse < 0 or self.sigma2_residual < 0 or self.sigma2_intercept < 0:
            raise ValidationError("negative variance or rmse")


# ---------------------------------------------------------------------------
# ordinary least squares


def ols_fit(data: RegressionDataset) -> FitResult:
    data.validate()
    f, s, _ = data.arrays()
    df = f - f.mean()
    beta1 = float(np.dot(df, s - s.mean()) / np.dot(df, df))
    beta0 = float(s.mean() - beta1 * f.mean())
    resid = s - (beta0 + beta1 * f)
    mse = float(np.dot(resid, resid) / len(s))
    fit = FitResult(
        method="ols",
        beta0=beta0,
        beta1=beta1,
        rmse=math.sqrt(mse),
        sigma2_residual=mse,
    )
    fit.validate()
    return fit


# ---------------------------------------------------------------------------
# mixed-effects regression (random intercept per target)


def _profile(
    lam: float,
    f: np.ndarray,
    s: np.ndarray,
    groups: list[np.ndarray],
) -> tuple[float, float, float, float, np.ndarray]:
    """Closed-form (loglik, beta0, beta1, sigma2_e, group sums) at fixed
    lambda. W = (I + lambda*Z*Z')^-1 applied per group as
    W_g = I - (lambda / (1 + lambda*n_g)) * J."""
    n = len(s)
    X = np.column_stack([np.ones(n), f])

    def apply_w(v: np.ndarray) -> np.ndarray:
        out = v.copy()
        for idx in groups:
            shrink = lam / (1.0 + lam * len(idx))
            out[idx] -= shrink * v[idx].sum()
        return out

    wx = np.column_stack([apply_w(X[:, 0]), apply_w(X[:, 1])])
    xtwx = X.T @ wx
    xtwy = wx.T @ s
    try:
        beta = np.linalg.solve(xtwx, xtwy)
    except np.linalg.LinAlgError as exc:
        raise ValidationError(f"singular design at lambda={lam:g}") from exc
    resid = s - X @ beta
    sigma2_e = float(resid @ apply_w(resid) / n)
    if sigma2_e <= 0:
        raise ValidationError("non-positive residual variance in profile")
    logdet = math.fsum(math.log1p(lam * len(idx)) for idx in groups)
    loglik = (
        -0.5 * n * (math.log(sigma2_e) + 1.0 + math.log(2.0 * math.pi))
        - 0.5 * logdet
    )
    group_sums = np.array([resid[idx].sum() for idx in groups])
    return loglik, float(beta[0]), float(beta[1]), sigma2_e, group_sums


def mer_fit(data: RegressionDataset) -> FitResult:
    data.validate()
    f, s, targets = data.arrays()
    codes = data.target_codes()
    if len(codes) < 2:
        fit = ols_fit(data)
        fit.method = "mer"
        fit.degenerate = True
        fit.random_intercepts = {codes[0]: 0.0}
        return fit
    target_array = np.array(targets)
    groups = [np.flatnonzero(target_array == code) for code in codes]

    def objective(log_lam: float) -> float:
        return _profile(math.exp(log_lam), f, s, groups)[0]

    # golden-section maximization over ln(lambda)
    lo, hi = LOG_LAMBDA_LO, LOG_LAMBDA_HI
    a, b = lo, hi
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = objective(c), objective(d)
    iters = 0
    while b - a > GOLDEN_TOL:
        iters += 1
        if iters > MAX_GOLDEN_ITERS:
            raise ConvergenceError(
                f"variance-ratio search still at width {b - a:g} after "
                f"{MAX_GOLDEN_ITERS} iterations"
            )
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = objective(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = objective(d)
    best_log_lam = 0.5 * (a + b)
    # interior optimum can hide a boundary solution; compare the endpoints
    candidates = [best_log_lam, LOG_LAMBDA_LO, LOG_LAMBDA_HI]
    best_log_lam = max(candidates, key=objective)
    lam = math.exp(best_log_lam)

    loglik, beta0, beta1, sigma2_e, group_sums = _profile(lam, f, s, groups)
    intercepts = {}
    for code, idx, total in zip(codes, groups, group_sums):
        intercepts[code] = float(lam * total / (1.0 + lam * len(idx)))
    fitted = beta0 + beta1 * f
    for code, idx in zip(codes, groups):
        fitted[idx] += intercepts[code]
    resid = s - fitted
    fit = FitResult(
        method="mer",
        beta0=beta0,
        beta1=beta1,
        rmse=math.sqrt(float(resid @ resid) / len(s)),
        random_intercepts=intercepts,
        sigma2_residual=sigma2_e,
        sigma2_intercept=lam * sigma2_e,
        log_likelihood=loglik,
    )
    fit.validate()
    return fit


# ---------------------------------------------------------------------------
# scoring fitted values as rankings


@dataclass(eq=False)
class RegressionScore:
    rmse: float
    top1: float  # fraction in [0, 1], averaged over targets
    ndcg: float  # fraction in [0, 1], averaged over targets
    k: int
    per_target: dict[str, tuple[float, float]] = field(default_factory=dict)


def predict_and_score(
    fit: FitResult, data: RegressionDataset, k: int = DEFAULT_K
) -> RegressionScore:
    """RMSE of fitted values plus ranking metrics of those values per target.

    Targets absent from the fit's intercept table predict with u = 0.
    """
    data.validate()
    fit.validate()
    by_target: dict[str, list[tuple[str, float, float]]] = {}
    sq_err = []
    for source, target, feature, score in data.rows:
        pred = fit.predict(feature, target)
        sq_err.append((pred - score) ** 2)
        by_target.setdefault(target, []).append((source, pred, score))
    rmse = math.sqrt(math.fsum(sq_err) / len(sq_err))
    per_target = {}
    for target in sorted(by_target):
        entries = sorted(by_target[target], key=lambda e: (-e[1], e[0]))
        ranking = Ranking(
            target=target,
            ordered_sources=[e[0] for e in entries],
            predicted_scores=[e[1] for e in entries],
        )
        ranking.validate()
        gold = {e[0]: e[2] for e in entries}
        per_target[target] = (
            float(top1(ranking, gold)),
            ndcg_at_k(ranking, gold, k),
        )
    n_targets = len(per_target)
    score = RegressionScore(
        rmse=rmse,
        top1=math.fsum(v[0] for v in per_target.values()) / n_targets,
        ndcg=math.fsum(v[1] for v in per_target.values()) / n_targets,
        k=k,
        per_target=per_target,
    )
    return score


# ---------------------------------------------------------------------------
# fit summaries


def write_fit_summary(path, fit: FitResult, score: RegressionScore,
                      notes: Sequence[str] = ()) -> None:
    """CSV summary: scalar fields then one row per random intercept."""
    fit.validate()
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("# grouping factor for random intercepts: target language\n")
        for note in notes:
            fh.write(f"# {note}\n")
        writer = csv.writer(fh)
        writer.writerow(["field", "value"])
        writer.writerow(["method", fit.method])
        writer.writerow(["beta0", f"{fit.beta0:.9g}"])
        writer.writerow(["beta1", f"{fit.beta1:.9g}"])
        writer.writerow(["rmse", f"{fit.rmse:.9g}"])
        writer.writerow(["sigma2_residual", f"{fit.sigma2_residual:.9g}"])
        writer.writerow(["sigma2_intercept", f"{fit.sigma2_intercept:.9g}"])
        if not math.isnan(fit.log_likelihood):
            writer.writerow(["log_likelihood", f"{fit.log_likelihood:.9g}"])
        writer.writerow(["degenerate", str(fit.degenerate).lower()])
        writer.writerow(["top1", f"{score.top1:.9g}"])
        writer.writerow([f"ndcg@{score.k}", f"{score.ndcg:.9g}"])
        for code in sorted(fit.random_intercepts):
            writer.writerow(
                [f"intercept[{code}]", f"{fit.random_intercepts[code]:.9g}"]
            )


def format_fit_summary(fit: FitResult, score: RegressionScore) -> str:
    fit.validate()
    lines = [
        f"method: {fit.method}"
        + (" (degenerate: single target, plain least squares)" if fit.degenerate else ""),
        "grouping factor for random intercepts: target language",
        f"beta0 = {fit.beta0:.6f}",
        f"beta1 = {fit.beta1:.6f}",
        f"rmse = {fit.rmse:.6f}",
    ]
    if fit.method == "mer" and not fit.degenerate:
        lines.append(f"sigma2_intercept = {fit.sigma2_intercept:.6f}")
        lines.append(f"sigma2_residual = {fit.sigma2_residual:.6f}")
        lines.append(f"log_likelihood = {fit.log_likelihood:.6f}")
    lines.append(f"top-1 = {100.0 * score.top1:.2f}")
    lines.append(f"ndcg@{score.k} = {100.0 * score.ndcg:.2f}")
    if fit.random_intercepts and not fit.degenerate:
        lines.append("random intercepts:")
        for code in sorted(fit.random_intercepts):
            lines.append(f"  {code}: {fit.random_intercepts[code]:+.6f}")
    return "\n".join(lines) + "\n"
