"""Individually fair gradient boosting"""
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

import dataclasses
import logging
from pathlib import Path
from typing import Any, Callable, Optional, Union

import numpy as np
from pydantic import BaseModel, Field
from scipy.spatial.distance import cdist
from sklearn.neighbors import NearestNeighbors

from adil.dataset import TabularDataset, require_role
from adil.error import DataError, InvalidArgument, IsolationError
from adil.fair_metric import FairMetric
from adil.models.boosted import BoostedEnsemble, RoundStats, boost
from adil.models.config import TrainConfig
from adil.models.smooth import bce_with_logits
from adil.util.misc import array_checksum, sha256_hex

__all__ = [
    "CandidateTable",
    "IfgbConfig",
    "IfgbRound",
    "TransportPlan",
    "build_candidates",
    "solve_adversary_lp",
    "train_ifgb",
]

log = logging.getLogger("ifgb")

# Bisection stops once the bracket can't shrink further, this bounds the iterations anyway
MAX_BISECT = 200
MAX_DOUBLING = 200


class IfgbConfig(TrainConfig):
    """Boosting options plus the transport adversary."""

    epsilon_lp: float = Field(0.1, ge=0.0)
    candidate_cap: int = Field(50, ge=1)
    cache_dir: Optional[str] = None


@dataclasses.dataclass(frozen=True, eq=False)
class CandidateTable:
    """Per row, the rows it may send mass to and their squared fair distances.

    Every row lists itself with distance 0. Columns are ordered by row index; padding
    entries have index -1 and infinite distance.
    """

    index: np.ndarray
    sq_dist: np.ndarray

    @property
    def n_rows(self) -> int:
        return self.index.shape[0]


@dataclasses.dataclass(frozen=True, eq=False)
class TransportPlan:
    """Optimal coupling of the adversary's linear program.

    Row i keeps mass (1 - alt_share[i]) / n on `primary[i]` and alt_share[i] / n on
    `alt[i]`. At most one row has a fractional share.
    """

    primary: np.ndarray
    alt: np.ndarray
    alt_share: np.ndarray
    epsilon: float
    lambda_star: float
    objective: float
    cost: float

    @property
    def n_rows(self) -> int:
        return self.primary.shape[0]

    def column_mass(self) -> np.ndarray:
        """n times the mass received by each row, the boosting weights."""
        n = self.n_rows
        return np.bincount(self.primary, weights=1.0 - self.alt_share, minlength=n) + np.bincount(
            self.alt, weights=self.alt_share, minlength=n
        )

    def moved_mass_fraction(self) -> float:
        rows = np.arange(self.n_rows)
        moved = (1.0 - self.alt_share) * (self.primary != rows) + self.alt_share * (
            self.alt != rows
        )
        return float(moved.mean()) if self.n_rows else 0.0

    def to_matrix(self) -> np.ndarray:
        n = self.n_rows
        plan = np.zeros((n, n))
        rows = np.arange(n)
        np.add.at(plan, (rows, self.primary), (1.0 - self.alt_share) / n)
        np.add.at(plan, (rows, self.alt), self.alt_share / n)
        return plan


def _exact_table(Z: np.ndarray) -> CandidateTable:
    n = Z.shape[0]
    sq = cdist(Z, Z, "sqeuclidean")
    np.fill_diagonal(sq, 0.0)
    return CandidateTable(np.tile(np.arange(n), (n, 1)), sq)


def _neighbor_table(Z: np.ndarray, cap: int) -> CandidateTable:
    dist, index = NearestNeighbors(n_neighbors=cap).fit(Z).kneighbors(Z)
    rows = np.arange(Z.shape[0])
    sq = dist * dist
    has_self = index == rows[:, None]
    missing = ~has_self.any(axis=1)
    # Duplicated rows may push a row out of its own neighbor list
    index[missing, -1] = rows[missing]
    sq[has_self | (index == rows[:, None])] = 0.0
    order = np.argsort(index, axis=1, kind="stable")
    return CandidateTable(
        np.take_along_axis(index, order, axis=1), np.take_along_axis(sq, order, axis=1)
    )


def _table_for(Z: np.ndarray, cap: int) -> CandidateTable:
    return _exact_table(Z) if cap >= Z.shape[0] else _neighbor_table(Z, cap)


def _label_table(Z: np.ndarray, cap: int, labels: np.ndarray) -> CandidateTable:
    """Candidates drawn from rows with the same label only, padded to a common width."""
    n = Z.shape[0]
    parts = []
    for value in np.unique(labels):
        members = np.flatnonzero(labels == value)
        sub = _table_for(Z[members], cap)
        parts.append((members, members[sub.index], sub.sq_dist))
    width = max(part[1].shape[1] for part in parts)
    index = np.full((n, width), -1, dtype=np.int64)
    sq = np.full((n, width), np.inf)
    for members, sub_index, sub_sq in parts:
        index[members, : sub_index.shape[1]] = sub_index
        sq[members, : sub_sq.shape[1]] = sub_sq
    return CandidateTable(index, sq)


def build_candidates(
    m: FairMetric,
    X: np.ndarray,
    cap: int,
    cache_dir: Optional[Union[str, Path]] = None,
    *,
    labels: Optional[Any] = None,
) -> CandidateTable:
    """Exact table when `cap` covers every row, else the `cap` nearest fair neighbors.

    With `labels` a row only lists rows carrying its own label.
    """
    Z = m.project_out(X)
    if labels is not None:
        labels = np.asarray(labels).reshape(-1)
        if labels.shape[0] != Z.shape[0]:
            raise InvalidArgument(f"{labels.shape[0]} labels for {Z.shape[0]} rows")

    cache_path = None
    if cache_dir is not None:
        parts = (X, m.basis) if labels is None else (X, m.basis, labels)
        key = sha256_hex(array_checksum(*parts) + f":{cap}")[:20]
        cache_path = Path(cache_dir) / f"candidates-{key}.npz"
        if cache_path.exists():
            log.debug("Loading candidate table from %s", cache_path)
            with np.load(cache_path) as cached:
                return CandidateTable(cached["index"], cached["sq_dist"])

    if labels is None or Z.shape[0] == 0:
        table = _table_for(Z, cap)
    else:
        table = _label_table(Z, cap, labels)
    if cache_path is not None:
        cache_path.parent.mkdir(parents=True, exist_ok=True)
        with cache_path.open("wb") as handle:
            np.savez(handle, index=table.index, sq_dist=table.sq_dist)
    return table


def _choose(scores_base: np.ndarray, sq: np.ndarray, lam: float) -> np.ndarray:
    """Column per row maximizing loss - lam * d^2.

    Ties go to the nearer candidate first and only then to the lower row index. Any tied
    column gives the same objective, the nearer one spends less of the budget.
    """
    with np.errstate(invalid="ignore"):
        score = scores_base - lam * sq
    score[~np.isfinite(sq)] = -np.inf
    top = score.max(axis=1, keepdims=True)
    tied_sq = np.where(score == top, sq, np.inf)
    return np.argmin(tied_sq, axis=1)


def solve_adversary_lp(losses: Any, table: CandidateTable, epsilon: float) -> TransportPlan:
    """Maximizes sum of plan * loss[column] over couplings with uniform row marginals 1/n
    and transport cost sum of plan * d^2 at most epsilon.

    The Lagrangian relaxation picks, for each row, the candidate maximizing
    loss - lambda * d^2. Bisection on lambda finds the breakpoint where the cost crosses
    epsilon; the rows whose choice changes there are moved by decreasing loss gain per unit
    of cost until the budget is spent, the last one fractionally.

    Raises:
        InvalidArgument: Negative epsilon or losses not matching the table.
    """
    losses = np.asarray(losses, dtype=np.float64).reshape(-1)
    n = table.n_rows
    if losses.shape[0] != n:
        raise InvalidArgument(f"{losses.shape[0]} losses for a {n}-row candidate table")
    if not np.isfinite(losses).all():
        raise InvalidArgument("Losses must be finite")
    if epsilon < 0 or np.isnan(epsilon):
        raise InvalidArgument(f"Transport budget must be nonnegative, got {epsilon}")

    rows = np.arange(n)
    if n == 0:
        empty = np.zeros(0, dtype=np.int64)
        return TransportPlan(empty, empty, np.zeros(0), epsilon, 0.0, 0.0, 0.0)

    sq = table.sq_dist
    cand_loss = np.where(table.index >= 0, losses[table.index], -np.inf)
    positive = sq[np.isfinite(sq) & (sq > 0)]
    spread = float(losses.max() - losses.min())
    lam_max = spread / float(positive.min()) if positive.size else 0.0

    def cost_of(col: np.ndarray) -> float:
        return float(sq[rows, col].mean())

    def plan_for(col: np.ndarray, lam: float) -> TransportPlan:
        target = table.index[rows, col]
        return TransportPlan(
            target,
            target.copy(),
            np.zeros(n),
            epsilon,
            lam,
            float(losses[target].mean()),
            cost_of(col),
        )

    if epsilon == 0.0:
        self_col = np.argmax(table.index == rows[:, None], axis=1)
        return plan_for(self_col, lam_max)

    free = _choose(cand_loss, sq, 0.0)
    if cost_of(free) <= epsilon:
        return plan_for(free, 0.0)

    lo, hi = 0.0, max(lam_max, np.finfo(float).tiny)
    for _ in range(MAX_DOUBLING):
        if cost_of(_choose(cand_loss, sq, hi)) <= epsilon:
            break
        lo, hi = hi, hi * 2.0
    for _ in range(MAX_BISECT):
        mid = lo + (hi - lo) / 2.0
        if mid <= lo or mid >= hi:
            break
        if cost_of(_choose(cand_loss, sq, mid)) > epsilon:
            lo = mid
        else:
            hi = mid

    col_hi = _choose(cand_loss, sq, hi)
    col_lo = _choose(cand_loss, sq, lo)
    primary = table.index[rows, col_hi]
    alt = primary.copy()
    share = np.zeros(n)

    budget = (epsilon - cost_of(col_hi)) * n
    changed = np.flatnonzero(col_lo != col_hi)
    extra_cost = sq[changed, col_lo[changed]] - sq[changed, col_hi[changed]]
    extra_gain = cand_loss[changed, col_lo[changed]] - cand_loss[changed, col_hi[changed]]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(extra_cost > 0, extra_gain / extra_cost, np.inf)
    for k in np.lexsort((changed, -ratio)):
        if extra_gain[k] <= 0:
            continue
        row = changed[k]
        alt[row] = table.index[row, col_lo[row]]
        if extra_cost[k] <= budget:
            share[row] = 1.0
            budget -= max(extra_cost[k], 0.0)
            continue
        share[row] = budget / extra_cost[k]
        break

    full = share == 1.0
    primary[full] = alt[full]
    share[full] = 0.0
    alt[share == 0.0] = primary[share == 0.0]

    received = (1.0 - share) * losses[primary] + share * losses[alt]
    moved_sq = (1.0 - share) * sq[rows, _column_of(table, primary)] + share * sq[
        rows, _column_of(table, alt)
    ]
    return TransportPlan(
        primary, alt, share, epsilon, hi, float(received.mean()), float(moved_sq.mean())
    )


def _column_of(table: CandidateTable, target: np.ndarray) -> np.ndarray:
    return np.argmax(table.index == target[:, None], axis=1)


class IfgbRound(BaseModel):
    round: int
    mean_loss: float
    adv_objective: float
    lambda_star: float
    moved_mass_fraction: float
    train_loss: Optional[float] = None


def train_ifgb(
    ds: TabularDataset,
    m: FairMetric,
    cfg: IfgbConfig,
    *,
    on_round: Optional[Callable[[IfgbRound], None]] = None,
) -> BoostedEnsemble:
    """Boosting where every round's row weights are the mass the transport adversary
    assigns to each row under the current ensemble's losses.

    Mass only moves between rows sharing a label, so each class keeps its total weight.
    With `epsilon_lp` = 0 the adversary can't move any mass, every weight is exactly 1
    and the result equals plain boosting.

    Raises:
        RoleError: The dataset is not the main training split.
        SchemaError: Feature names differ from the fair metric's.
    """
    require_role(ds, ("main_train",), "train_ifgb")
    if ds.sensitive is not None:
        raise IsolationError("The main training split must not carry sensitive data")
    m.check_features(ds.feature_names)
    if ds.n_rows == 0:
        raise DataError("Can't train on an empty split")

    X = ds.X
    y = ds.labels.astype(np.float64)
    table = build_candidates(m, X, cfg.candidate_cap, cfg.cache_dir, labels=ds.labels)
    log.info(
        "Boosting %d rounds against a transport budget of %.4g with %d candidates per row",
        cfg.rounds,
        cfg.epsilon_lp,
        table.index.shape[1],
    )

    pending: dict = {}

    def weight_fn(rnd: int, margin: np.ndarray) -> np.ndarray:
        losses = bce_with_logits(margin, y)
        plan = solve_adversary_lp(losses, table, cfg.epsilon_lp)
        pending["record"] = IfgbRound(
            round=rnd,
            mean_loss=float(losses.mean()),
            adv_objective=plan.objective,
            lambda_star=plan.lambda_star,
            moved_mass_fraction=plan.moved_mass_fraction(),
        )
        return plan.column_mass()

    def round_end(stats: RoundStats) -> None:
        record = pending.pop("record").model_copy(update={"train_loss": stats.train_loss})
        log.debug(
            "Round %d: mean loss %.5f, adversarial %.5f, lambda %.4g, moved %.3f",
            record.round,
            record.mean_loss,
            record.adv_objective,
            record.lambda_star,
            record.moved_mass_fraction,
        )
        if on_round is not None:
            on_round(record)

    return boost(
        X, y, cfg, feature_names=ds.feature_names, weight_fn=weight_fn, on_round=round_end
    )
