"""Individual and group fairness audits"""
# Copyright (C) 2024  Adil Developers
#
# This program is free software: you can redistribute it and/or modify
# it under the terms of the GNU General Public License as published by
# the Free Software Foundation, either version 3 of the License, or
# (at your option) any later version.
#
# This program is distributed in the hope that it will be useful,
# but WITHOUT ANY WARRANTY; without even the implied warranty of
# MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the
# GNU General Public License for more details.
#
# You should have received a copy of the GNU General Public License
# along with this program.  If not, see <http://www.gnu.org/licenses/>.

import logging
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.stats import rankdata

from adil.dataset import TabularDataset
from adil.error import DataError, InvalidArgument, UndefinedMetricError
from adil.fair_metric import FairMetric
from adil.models.predict import labels_from_proba, predict_proba
from adil.pairs import PairSampling, iter_pairs, plan_pairs

__all__ = [
    "DiffRow",
    "GroupMetricTable",
    "GroupRow",
    "IfmCurve",
    "LipschitzAuditResult",
    "ModelAudit",
    "TradeoffSummary",
    "audit_model",
    "auc_concordance",
    "auc_trapezoid",
    "default_epsilon_grid",
    "group_metrics",
    "ifm",
    "lipschitz_audit",
    "metric_diff",
    "roc_from_scores",
    "roc_points",
    "score_table",
    "tradeoff_summary",
]

log = logging.getLogger("fairness_eval")

# Two-sided 95% normal quantile
Z_95 = 1.959963984540054


class IfmCurve(BaseModel):
    """Share of fair-similar pairs (d <= epsilon) that receive the same prediction."""

    model_config = ConfigDict(extra="forbid")

    epsilons: List[float]
    values: List[Optional[float]]
    similar_pairs: List[int]
    agreeing_pairs: List[int]
    sampling: PairSampling


class LipschitzAuditResult(BaseModel):
    model_config = ConfigDict(extra="forbid")

    constant: float
    violations: int
    pairs: int
    violation_rate: float
    half_width: Optional[float] = None
    empirical_constant: Optional[float] = None
    zero_distance_conflicts: int = 0
    sampling: PairSampling


class GroupRow(BaseModel):
    group: str
    n: int
    positives: int
    negatives: int
    accuracy: Optional[float]
    fpr: Optional[float]
    fnr: Optional[float]
    auc: Optional[float]


class DiffRow(BaseModel):
    """minuend - subtrahend for every rate, None where either side is undefined."""

    minuend: str
    subtrahend: str
    accuracy: Optional[float]
    fpr: Optional[float]
    fnr: Optional[float]
    auc: Optional[float]


class GroupMetricTable(BaseModel):
    reference_group: str
    threshold: float
    overall: GroupRow
    rows: List[GroupRow]
    diffs: List[DiffRow]


def _validate_grid(epsilons: Sequence[float]) -> np.ndarray:
    grid = np.asarray(list(epsilons), dtype=np.float64)
    if grid.size == 0:
        raise InvalidArgument("The epsilon grid is empty")
    if not np.isfinite(grid).all() or (grid < 0).any():
        raise InvalidArgument("Epsilons must be finite and nonnegative")
    if (np.diff(grid) <= 0).any():
        raise InvalidArgument("Epsilons must be strictly ascending")
    return grid


def _require_rows(ds: TabularDataset, what: str) -> None:
    if ds.n_rows == 0:
        raise DataError(f"Can't compute {what} on an empty dataset")


def ifm(
    model: Any,
    m: FairMetric,
    ds: TabularDataset,
    epsilons: Sequence[float],
    *,
    pair_budget: Optional[int] = None,
    seed: int = 0,
    threshold: float = 0.5,
) -> IfmCurve:
    """Individual fairness measure at every epsilon of the grid.

    Pairs are exhaustive unless `pair_budget` is below the number of unordered pairs.
    A grid point with no similar pair has an undefined (None) value.
    """
    _require_rows(ds, "IFM")
    grid = _validate_grid(epsilons)
    m.check_features(ds.feature_names)

    Z = m.project_out(ds.X)
    pred = labels_from_proba(predict_proba(model, ds.X), threshold)
    sampling = plan_pairs(ds.n_rows, pair_budget, seed)

    similar = np.zeros(grid.size, dtype=np.int64)
    agreeing = np.zeros(grid.size, dtype=np.int64)
    for first, second in iter_pairs(ds.n_rows, sampling):
        dist = np.linalg.norm(Z[first] - Z[second], axis=1)
        same = pred[first] == pred[second]
        similar += np.searchsorted(np.sort(dist), grid, side="right")
        agreeing += np.searchsorted(np.sort(dist[same]), grid, side="right")

    values = [
        float(agree) / float(total) if total else None
        for agree, total in zip(agreeing.tolist(), similar.tolist())
    ]
    return IfmCurve(
        epsilons=grid.tolist(),
        values=values,
        similar_pairs=similar.tolist(),
        agreeing_pairs=agreeing.tolist(),
        sampling=sampling,
    )


def lipschitz_audit(
    model: Any,
    m: FairMetric,
    ds: TabularDataset,
    constant: float = 1.0,
    *,
    pair_budget: Optional[int] = None,
    seed: int = 0,
) -> LipschitzAuditResult:
    """Counts pairs with |p(x) - p(x')| > L * d(x, x').

    A sampled audit carries the half-width of a 95% normal interval around the rate.
    """
    if not constant > 0:
        raise InvalidArgument(f"Lipschitz constant must be positive, got {constant}")
    if ds.n_rows < 2:
        raise DataError("A Lipschitz audit needs at least two rows")
    m.check_features(ds.feature_names)

    Z = m.project_out(ds.X)
    proba = predict_proba(model, ds.X)
    sampling = plan_pairs(ds.n_rows, pair_budget, seed)

    violations = 0
    pairs = 0
    conflicts = 0
    steepest: Optional[float] = None
    for first, second in iter_pairs(ds.n_rows, sampling):
        dist = np.linalg.norm(Z[first] - Z[second], axis=1)
        gap = np.abs(proba[first] - proba[second])
        violations += int(np.count_nonzero(gap > constant * dist))
        pairs += dist.size
        apart = dist > 0
        conflicts += int(np.count_nonzero(~apart & (gap > 0)))
        if apart.any():
            block_max = float(np.max(gap[apart] / dist[apart]))
            steepest = block_max if steepest is None else max(steepest, block_max)

    rate = violations / pairs if pairs else 0.0
    half_width = None
    if sampling.mode == "sampled" and pairs:
        half_width = float(Z_95 * np.sqrt(rate * (1.0 - rate) / pairs))

    return LipschitzAuditResult(
        constant=constant,
        violations=violations,
        pairs=pairs,
        violation_rate=rate,
        half_width=half_width,
        empirical_constant=steepest,
        zero_distance_conflicts=conflicts,
        sampling=sampling,
    )


def auc_concordance(scores: Any, labels: Any) -> float:
    """P(score of a positive > score of a negative), ties counted half."""
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    labels = np.asarray(labels).reshape(-1)
    n_pos = int(np.count_nonzero(labels == 1))
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUC needs both classes")

    ranks = rankdata(scores, method="average")
    rank_sum = float(ranks[labels == 1].sum())
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def roc_from_scores(
    scores: Any, labels: Any, n_thresholds: Optional[int] = None
) -> List[Tuple[float, float]]:
    """(FPR, TPR) points for thresholds from +inf down to -inf, predicting score >= t.

    Without `n_thresholds` every distinct score is a threshold.
    """
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    labels = np.asarray(labels).reshape(-1)
    pos_scores = np.sort(scores[labels == 1])
    neg_scores = np.sort(scores[labels != 1])
    if pos_scores.size == 0 or neg_scores.size == 0:
        raise UndefinedMetricError("ROC needs both classes")

    if n_thresholds is None:
        inner = np.unique(scores)[::-1]
    else:
        if n_thresholds < 2:
            raise InvalidArgument("Need at least two thresholds")
        inner = np.linspace(scores.max(), scores.min(), n_thresholds)
    thresholds = np.concatenate([[np.inf], inner, [-np.inf]])

    tpr = (pos_scores.size - np.searchsorted(pos_scores, thresholds, side="left")) / pos_scores.size
    fpr = (neg_scores.size - np.searchsorted(neg_scores, thresholds, side="left")) / neg_scores.size
    return list(zip(fpr.tolist(), tpr.tolist()))


def roc_points(
    model: Any, ds: TabularDataset, n_thresholds: Optional[int] = None
) -> List[Tuple[float, float]]:
    _require_rows(ds, "ROC")
    return roc_from_scores(predict_proba(model, ds.X), ds.labels, n_thresholds)


def auc_trapezoid(points: Sequence[Tuple[float, float]]) -> float:
    xy = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    widths = np.diff(xy[:, 0])
    return float(np.sum(widths * (xy[1:, 1] + xy[:-1, 1]) / 2.0))


def _rate(numerator: int, denominator: int) -> Optional[float]:
    return numerator / denominator if denominator else None


def _group_row(group: str, labels: np.ndarray, scores: np.ndarray, threshold: float) -> GroupRow:
    pred = labels_from_proba(scores, threshold)
    pos = labels == 1
    n_pos = int(np.count_nonzero(pos))
    n_neg = labels.size - n_pos
    false_pos = int(np.count_nonzero(~pos & (pred == 1)))
    false_neg = int(np.count_nonzero(pos & (pred == 0)))
    correct = int(np.count_nonzero(pred == labels))
    try:
        auc: Optional[float] = auc_concordance(scores, labels)
    except UndefinedMetricError:
        auc = None

    return GroupRow(
        group=group,
        n=int(labels.size),
        positives=n_pos,
        negatives=n_neg,
        accuracy=_rate(correct, labels.size),
        fpr=_rate(false_pos, n_neg),
        fnr=_rate(false_neg, n_pos),
        auc=auc,
    )


def metric_diff(minuend: GroupRow, subtrahend: GroupRow) -> DiffRow:
    def gap(first: Optional[float], second: Optional[float]) -> Optional[float]:
        return None if first is None or second is None else first - second

    return DiffRow(
        minuend=minuend.group,
        subtrahend=subtrahend.group,
        accuracy=gap(minuend.accuracy, subtrahend.accuracy),
        fpr=gap(minuend.fpr, subtrahend.fpr),
        fnr=gap(minuend.fnr, subtrahend.fnr),
        auc=gap(minuend.auc, subtrahend.auc),
    )


def score_table(
    scores: Any,
    labels: Any,
    groups: Any,
    *,
    threshold: float = 0.5,
    reference_group: Optional[str] = None,
) -> GroupMetricTable:
    """Per-group rates from scores; diff rows are reference minus each other group.

    The reference group falls back to the first group in sorted order when absent.
    """
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    labels = np.asarray(labels).reshape(-1)
    groups = np.asarray(groups, dtype=object).reshape(-1).astype(str)
    if not scores.size == labels.size == groups.size:
        raise DataError("Scores, labels and groups differ in length")
    if scores.size == 0:
        raise DataError("Can't compute group metrics on an empty dataset")

    names = sorted(np.unique(groups).tolist())
    rows = [
        _group_row(name, labels[groups == name], scores[groups == name], threshold)
        for name in names
    ]
    reference = reference_group if reference_group in names else names[0]
    if reference_group is not None and reference_group != reference:
        log.warning("Reference group '%s' not present, using '%s'", reference_group, reference)
    ref_row = next(row for row in rows if row.group == reference)

    return GroupMetricTable(
        reference_group=reference,
        threshold=threshold,
        overall=_group_row("all", labels, scores, threshold),
        rows=rows,
        diffs=[metric_diff(ref_row, row) for row in rows if row.group != reference],
    )


def group_metrics(
    model: Any, ds: TabularDataset, *, threshold: float = 0.5, reference_group: Optional[str] = None
) -> GroupMetricTable:
    if ds.sensitive is None:
        raise DataError("Group metrics need the sensitive column, the dataset has none")
    _require_rows(ds, "group metrics")
    return score_table(
        predict_proba(model, ds.X),
        ds.labels,
        ds.sensitive,
        threshold=threshold,
        reference_group=reference_group,
    )


def default_epsilon_grid(
    m: FairMetric,
    ds: TabularDataset,
    n_points: int = 20,
    *,
    pair_budget: int = 200_000,
    seed: int = 0,
    low_percentile: float = 1.0,
    high_percentile: float = 50.0,
) -> List[float]:
    """Log-spaced epsilons between two percentiles of the pairwise fair distances."""
    if n_points < 1:
        raise InvalidArgument("The epsilon grid needs at least one point")
    if ds.n_rows < 2:
        raise DataError("An epsilon grid needs at least two rows")

    Z = m.project_out(ds.X)
    sampling = plan_pairs(ds.n_rows, pair_budget, seed)
    dist = np.concatenate(
        [np.linalg.norm(Z[i] - Z[j], axis=1) for i, j in iter_pairs(ds.n_rows, sampling)]
    )
    positive = dist[dist > 0]
    if positive.size == 0:
        raise UndefinedMetricError("Every pair is at fair distance 0")

    low = float(np.percentile(dist, low_percentile))
    high = float(np.percentile(dist, high_percentile))
    if low <= 0:
        low = float(positive.min())
    if high <= low:
        return [low]
    return np.geomspace(low, high, n_points).tolist()


class ModelAudit(BaseModel):
    """Everything the evaluation reports about one model."""

    method: str
    auc: Optional[float]
    groups: GroupMetricTable
    ifm: IfmCurve
    lipschitz: LipschitzAuditResult
    provenance: Dict[str, Any] = Field(default_factory=dict)


def audit_model(
    model: Any,
    m: FairMetric,
    ds: TabularDataset,
    *,
    method: str,
    epsilons: Sequence[float],
    threshold: float = 0.5,
    reference_group: Optional[str] = None,
    lipschitz_constant: float = 1.0,
    pair_budget: Optional[int] = None,
    seed: int = 0,
    provenance: Optional[Dict[str, Any]] = None,
) -> ModelAudit:
    groups = group_metrics(model, ds, threshold=threshold, reference_group=reference_group)
    return ModelAudit(
        method=method,
        auc=groups.overall.auc,
        groups=groups,
        ifm=ifm(model, m, ds, epsilons, pair_budget=pair_budget, seed=seed, threshold=threshold),
        lipschitz=lipschitz_audit(
            model, m, ds, lipschitz_constant, pair_budget=pair_budget, seed=seed
        ),
        provenance=provenance or {},
    )


class TradeoffSummary(BaseModel):
    """fair - baseline for each headline number. Gaps are absolute diff-row values."""

    baseline: str
    fair: str
    accuracy_change: Optional[float]
    auc_change: Optional[float]
    fpr_gap_change: Optional[float]
    accuracy_gap_change: Optional[float]
    mean_ifm_change: Optional[float]
    # Share of defined grid points where the fair model's IFM is at least the baseline's
    ifm_win_fraction: Optional[float]
    violation_rate_change: float


def _largest_gap(audit: ModelAudit, field: str) -> Optional[float]:
    values = [getattr(row, field) for row in audit.groups.diffs]
    gaps = [abs(value) for value in values if value is not None]
    return max(gaps) if gaps else None


def _change(before: Optional[float], after: Optional[float]) -> Optional[float]:
    return None if before is None or after is None else after - before


def tradeoff_summary(baseline: ModelAudit, fair: ModelAudit) -> TradeoffSummary:
    """What the fair model gains in individual fairness and pays in accuracy.

    Both audits must share the epsilon grid.
    """
    if baseline.ifm.epsilons != fair.ifm.epsilons:
        raise InvalidArgument("Audits were computed on different epsilon grids")

    paired = [
        (before, after)
        for before, after in zip(baseline.ifm.values, fair.ifm.values)
        if before is not None and after is not None
    ]
    return TradeoffSummary(
        baseline=baseline.method,
        fair=fair.method,
        accuracy_change=_change(baseline.groups.overall.accuracy, fair.groups.overall.accuracy),
        auc_change=_change(baseline.auc, fair.auc),
        fpr_gap_change=_change(_largest_gap(baseline, "fpr"), _largest_gap(fair, "fpr")),
        accuracy_gap_change=_change(
            _largest_gap(baseline, "accuracy"), _largest_gap(fair, "accuracy")
        ),
        mean_ifm_change=(
            float(np.mean([after - before for before, after in paired])) if paired else None
        ),
        ifm_win_fraction=(
            sum(after >= before for before, after in paired) / len(paired) if paired else None
        ),
        violation_rate_change=fair.lipschitz.violation_rate - baseline.lipschitz.violation_rate,
    )
