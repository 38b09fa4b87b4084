"""Evaluation machinery: F1, area under the precision-recall curve,
normalized learning-curve area, significance testing and win counting.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy import stats as scipy_stats

A_BETTER = "a-better"
B_BETTER = "b-better"
NO_DIFFERENCE = "no-significant-difference"

METRICS = ("f1", "auc_pr")
SPLITS = ("train", "test")

_VAR_FLOOR = 1e-24


class MetricError(ValueError):
    pass


def f1_score(predicted, truth) -> float:
    """2TP / (2TP + FP + FN); 0 when the denominator vanishes."""
    predicted = np.asarray(predicted)
    truth = np.asarray(truth)
    if predicted.shape != truth.shape:
        raise MetricError(f"length mismatch: {predicted.shape} vs {truth.shape}")
    tp = int(np.sum((predicted == 1) & (truth == 1)))
    fp = int(np.sum((predicted == 1) & (truth == -1)))
    fn = int(np.sum((predicted == -1) & (truth == 1)))
    denom = 2 * tp + fp + fn
    return 2 * tp / denom if denom else 0.0


def ranking(scores) -> np.ndarray:
    """Indices in descending score order; equal scores keep index order."""
    scores = np.asarray(scores, dtype=np.float64)
    return np.lexsort((np.arange(scores.size), -scores))


def auc_pr(scores, truth) -> float:
    """Average precision over the ranked instances.

    Precision at each positive's rank is accumulated against its recall
    step (1 / number of positives). Ties in score rank by ascending index;
    this convention is part of the metric's contract.
    """
    scores = np.asarray(scores, dtype=np.float64)
    truth = np.asarray(truth)
    if scores.shape != truth.shape:
        raise MetricError(f"length mismatch: {scores.shape} vs {truth.shape}")
    n_pos = int(np.sum(truth == 1))
    if n_pos == 0:
        raise MetricError("area under the precision-recall curve needs at least one positive")
    order = ranking(scores)
    hits = (truth[order] == 1).astype(np.float64)
    tp = np.cumsum(hits)
    precision = tp / np.arange(1, scores.size + 1)
    return float(np.sum(precision * hits) / n_pos)


@dataclass(frozen=True)
class LearningCurve:
    """Metric values indexed by query count 0..Q for one split."""

    values: tuple[float, ...]
    metric: str
    split: str

    def __post_init__(self) -> None:
        if self.metric not in METRICS:
            raise MetricError(f"unknown metric {self.metric!r}")
        if self.split not in SPLITS:
            raise MetricError(f"unknown split {self.split!r}")

    @property
    def queries(self) -> int:
        return len(self.values) - 1


def naulc(curve) -> float:
    """Trapezoidal area under a per-query curve divided by the query count."""
    values = np.asarray(curve.values if isinstance(curve, LearningCurve) else curve,
                        dtype=np.float64)
    if values.size < 2:
        raise MetricError("curve needs at least one query (two points)")
    q = values.size - 1
    return float(np.trapezoid(values) / q)


@dataclass(frozen=True)
class TTestResult:
    decision: str
    t: float
    p: float
    df: float


def welch_t_test(a, b, alpha: float = 0.05, pooled: bool = False) -> TTestResult:
    """Two-tailed t-test; direction is read off the means.

    Unequal variances (Welch, the default) with Welch-Satterthwaite degrees
    of freedom, or the classic pooled-variance form with ``pooled=True``.
    Zero variance is floored so completely separated constant samples still
    resolve instead of dividing by zero.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size < 2 or b.size < 2:
        raise MetricError("each sample needs at least two values")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise MetricError("samples must be finite")
    va, vb = a.var(ddof=1), b.var(ddof=1)
    na, nb = a.size, b.size
    if pooled:
        s2 = ((na - 1) * va + (nb - 1) * vb) / (na + nb - 2)
        se2 = s2 * (1.0 / na + 1.0 / nb)
        df = float(na + nb - 2)
    else:
        se2 = va / na + vb / nb
        df_denom = (va / na) ** 2 / (na - 1) + (vb / nb) ** 2 / (nb - 1)
        df = se2 ** 2 / df_denom if df_denom > 0 else float(na + nb - 2)
    if se2 <= _VAR_FLOOR:
        if a.mean() == b.mean():
            return TTestResult(NO_DIFFERENCE, 0.0, 1.0, float(na + nb - 2))
        se2, df = _VAR_FLOOR, float(na + nb - 2)
    t = (a.mean() - b.mean()) / math.sqrt(se2)
    p = 2.0 * float(scipy_stats.t.sf(abs(t), df))
    if p < alpha:
        return TTestResult(A_BETTER if t > 0 else B_BETTER, float(t), p, float(df))
    return TTestResult(NO_DIFFERENCE, float(t), p, float(df))


@dataclass
class SessionRecord:
    """One strategy run: curves per (metric, split), the query order, audit trail."""

    strategy: str
    repetition: int
    curves: dict[tuple[str, str], tuple[float, ...]]
    query_log: tuple[str, ...]
    error: str | None = None
    audit: tuple[dict, ...] = ()

    def naulc(self, metric: str, split: str) -> float:
        return naulc(self.curves[(metric, split)])


@dataclass
class ExperimentResult:
    """Rectangular collection of session records over strategies and repetitions."""

    dataset: str
    strategies: tuple[str, ...]
    repetitions: int
    base_seed: int
    records: list[SessionRecord] = field(default_factory=list)

    def record(self, strategy: str, repetition: int) -> SessionRecord:
        for rec in self.records:
            if rec.strategy == strategy and rec.repetition == repetition:
                return rec
        raise KeyError(f"no record for {strategy!r} repetition {repetition}")

    def successful(self, strategy: str) -> list[SessionRecord]:
        return [r for r in self.records if r.strategy == strategy and r.error is None]

    def naulc_values(self, strategy: str, metric: str, split: str) -> np.ndarray:
        return np.array([r.naulc(metric, split) for r in self.successful(strategy)])

    def curve_values(self, strategy: str, metric: str, split: str) -> list[np.ndarray]:
        return [np.asarray(r.curves[(metric, split)]) for r in self.successful(strategy)]


def _as_problem_map(results) -> Mapping[str, ExperimentResult]:
    if isinstance(results, ExperimentResult):
        return {results.dataset: results}
    return results


def _winners(samples: dict[str, np.ndarray], alpha: float) -> list[str]:
    """Best-mean strategy plus every strategy not significantly worse than it."""
    means = {s: float(np.mean(v)) for s, v in samples.items()}
    best = max(means, key=lambda s: means[s])
    winners = []
    for s in samples:
        if s == best:
            winners.append(s)
            continue
        outcome = welch_t_test(samples[best], samples[s], alpha=alpha)
        if outcome.decision != A_BETTER:
            winners.append(s)
    return winners


@dataclass(frozen=True)
class WinTable:
    """Win sets per (problem, metric, split) and aggregated counts."""

    strategies: tuple[str, ...]
    cells: dict[tuple[str, str, str], tuple[str, ...]]

    def counts(self, metric: str | None = None, split: str | None = None) -> dict[str, int]:
        totals = {s: 0 for s in self.strategies}
        for (problem, m, sp), winners in self.cells.items():
            if metric is not None and m != metric:
                continue
            if split is not None and sp != split:
                continue
            for w in winners:
                totals[w] += 1
        return totals


def count_wins(results, alpha: float = 0.05) -> WinTable:
    """Apply the win rule per problem, metric and split.

    The strategy with the best mean curve-area summary wins; any strategy
    the best one does not significantly beat (unequal-variance t-test at
    ``alpha``) shares the win, so ties are possible.
    """
    problems = _as_problem_map(results)
    strategies: tuple[str, ...] | None = None
    cells: dict[tuple[str, str, str], tuple[str, ...]] = {}
    for name, result in problems.items():
        if strategies is None:
            strategies = result.strategies
        elif set(strategies) != set(result.strategies):
            raise MetricError("all problems must share the same strategy set")
        if len(result.strategies) < 2:
            raise MetricError("win counting needs at least two strategies")
        for metric in METRICS:
            for split in SPLITS:
                samples = {
                    s: result.naulc_values(s, metric, split) for s in result.strategies
                }
                cells[(name, metric, split)] = tuple(_winners(samples, alpha))
    return WinTable(strategies=strategies or (), cells=cells)


def curve_value_at_fraction(values: Sequence[float], fraction: float) -> float:
    """Linear interpolation of a per-query curve at a queried-bag fraction."""
    values = np.asarray(values, dtype=np.float64)
    q = values.size - 1
    return float(np.interp(fraction * q, np.arange(values.size), values))


def wins_vs_query_fraction(results, fractions, alpha: float = 0.05) -> dict[str, np.ndarray]:
    """Win counts per strategy at each queried-bag fraction.

    At every fraction the win rule is applied to the instantaneous
    (interpolated) metric values across repetitions, aggregated over all
    problems, metrics and splits.
    """
    problems = _as_problem_map(results)
    fractions = np.asarray(fractions, dtype=np.float64)
    first = next(iter(problems.values()))
    counts = {s: np.zeros(fractions.size, dtype=np.int64) for s in first.strategies}
    for result in problems.values():
        for metric in METRICS:
            for split in SPLITS:
                per_strategy = {
                    s: result.curve_values(s, metric, split) for s in result.strategies
                }
                for fi, fraction in enumerate(fractions):
                    samples = {
                        s: np.array([curve_value_at_fraction(c, fraction) for c in curves])
                        for s, curves in per_strategy.items()
                    }
                    for winner in _winners(samples, alpha):
                        counts[winner][fi] += 1
    return counts
