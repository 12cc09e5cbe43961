"""Second-order gradient boosted decision trees"""
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
import warnings
from typing import Any, Callable, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel
from scipy.special import expit

from adil.dataset import TabularDataset, require_role
from adil.error import BoostingWarning, DimensionMismatch, InvalidArgument

from .config import TrainConfig
from .smooth import bce_with_logits

__all__ = ["BoostedEnsemble", "RoundStats", "TreeNode", "boost", "fit_tree", "train_boosted"]

log = logging.getLogger("models.boosted")

# Clip of the prior used for the base score
PRIOR_CLIP = 1e-6

WeightFn = Callable[[int, np.ndarray], np.ndarray]


@dataclasses.dataclass(frozen=True, eq=False)
class TreeNode:
    """Rows with `x[feature] < threshold` go left."""

    leaf_value: float = 0.0
    feature: Optional[int] = None
    threshold: Optional[float] = None
    left: Optional["TreeNode"] = None
    right: Optional["TreeNode"] = None

    @property
    def is_leaf(self) -> bool:
        return self.feature is None

    def depth(self) -> int:
        if self.is_leaf:
            return 0
        return 1 + max(self.left.depth(), self.right.depth())  # type: ignore

    def predict(self, X: np.ndarray) -> np.ndarray:
        out = np.empty(X.shape[0])
        self._fill(X, np.arange(X.shape[0]), out)
        return out

    def _fill(self, X: np.ndarray, rows: np.ndarray, out: np.ndarray) -> None:
        if self.is_leaf:
            out[rows] = self.leaf_value
            return
        goes_left = X[rows, self.feature] < self.threshold
        self.left._fill(X, rows[goes_left], out)  # type: ignore
        self.right._fill(X, rows[~goes_left], out)  # type: ignore

    def to_dict(self) -> Any:
        if self.is_leaf:
            return {"leaf_value": self.leaf_value}
        return {
            "feature": self.feature,
            "threshold": self.threshold,
            "left": self.left.to_dict(),  # type: ignore
            "right": self.right.to_dict(),  # type: ignore
        }

    @classmethod
    def from_dict(cls, doc: Any) -> "TreeNode":
        if "feature" not in doc:
            return cls(leaf_value=float(doc["leaf_value"]))
        return cls(
            feature=int(doc["feature"]),
            threshold=float(doc["threshold"]),
            left=cls.from_dict(doc["left"]),
            right=cls.from_dict(doc["right"]),
        )


@dataclasses.dataclass(frozen=True, eq=False)
class BoostedEnsemble:
    """Margin is base_score + learning_rate * sum of tree outputs."""

    trees: Tuple[TreeNode, ...]
    learning_rate: float
    base_score: float
    feature_names: Tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "trees", tuple(self.trees))
        object.__setattr__(self, "feature_names", tuple(self.feature_names))

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    def margin(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X.reshape(1, -1) if X.size else X.reshape(0, self.n_features)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise DimensionMismatch(self.n_features, X.shape[-1], "ensemble input")

        margin = np.full(X.shape[0], self.base_score)
        for tree in self.trees:
            margin = margin + self.learning_rate * tree.predict(X)
        return margin


class RoundStats(BaseModel):
    round: int
    train_loss: float
    n_leaves: int


def _count_leaves(node: TreeNode) -> int:
    if node.is_leaf:
        return 1
    return _count_leaves(node.left) + _count_leaves(node.right)  # type: ignore


def _best_split(
    X: np.ndarray, g: np.ndarray, h: np.ndarray, rows: np.ndarray, cfg: TrainConfig
) -> Optional[Tuple[float, int, float]]:
    """Exact greedy search over every feature and every gap between distinct values."""
    lam = cfg.reg_lambda
    g_total = g[rows].sum()
    h_total = h[rows].sum()
    parent = g_total * g_total / (h_total + lam)

    best: Optional[Tuple[float, int, float]] = None
    for feature in range(X.shape[1]):
        values = X[rows, feature]
        order = np.argsort(values, kind="stable")
        ordered = values[order]
        g_left = np.cumsum(g[rows][order])[:-1]
        h_left = np.cumsum(h[rows][order])[:-1]
        g_right = g_total - g_left
        h_right = h_total - h_left

        valid = (ordered[:-1] < ordered[1:]) & (h_left >= cfg.min_child_weight) & (
            h_right >= cfg.min_child_weight
        )
        if not valid.any():
            continue
        with np.errstate(divide="ignore", invalid="ignore"):
            gain = 0.5 * (
                g_left * g_left / (h_left + lam) + g_right * g_right / (h_right + lam) - parent
            ) - cfg.min_split_gain
        gain = np.where(valid, gain, -np.inf)
        pos = int(np.argmax(gain))
        # Ties keep the earlier feature and the lower threshold
        if gain[pos] > 0.0 and (best is None or gain[pos] > best[0]):
            lower, upper = ordered[pos], ordered[pos + 1]
            threshold = lower + (upper - lower) / 2.0
            if not lower < threshold <= upper:
                threshold = upper
            best = (float(gain[pos]), feature, float(threshold))
    return best


def _grow(
    X: np.ndarray, g: np.ndarray, h: np.ndarray, rows: np.ndarray, depth: int, cfg: TrainConfig
) -> TreeNode:
    leaf = float(-g[rows].sum() / (h[rows].sum() + cfg.reg_lambda)) if rows.size else 0.0
    if depth >= cfg.max_depth or rows.size < 2:
        return TreeNode(leaf_value=leaf)

    split = _best_split(X, g, h, rows, cfg)
    if split is None:
        return TreeNode(leaf_value=leaf)

    _, feature, threshold = split
    goes_left = X[rows, feature] < threshold
    return TreeNode(
        feature=feature,
        threshold=threshold,
        left=_grow(X, g, h, rows[goes_left], depth + 1, cfg),
        right=_grow(X, g, h, rows[~goes_left], depth + 1, cfg),
    )


def fit_tree(X: np.ndarray, g: np.ndarray, h: np.ndarray, cfg: TrainConfig) -> TreeNode:
    """Regression tree on gradient/hessian pairs, leaf value -G/(H + lambda)."""
    if np.any(np.isnan(X)):
        raise InvalidArgument("Boosting input contains NaN")
    return _grow(X, g, h, np.arange(X.shape[0]), 0, cfg)


def _base_score(y: np.ndarray, weights: np.ndarray) -> float:
    prior = float(np.sum(weights * y) / np.sum(weights))
    prior = min(max(prior, PRIOR_CLIP), 1.0 - PRIOR_CLIP)
    return float(np.log(prior / (1.0 - prior)))


def boost(
    X: np.ndarray,
    y: np.ndarray,
    cfg: TrainConfig,
    *,
    feature_names: Sequence[str] = (),
    weights: Optional[np.ndarray] = None,
    weight_fn: Optional[WeightFn] = None,
    on_round: Optional[Callable[[RoundStats], None]] = None,
) -> BoostedEnsemble:
    """Boosting loop on the logistic loss.

    Per-row weights are fixed (`weights`, default all ones) or recomputed before every
    round by `weight_fn(round, margin)`.
    """
    n_rows = X.shape[0]
    class_w = np.where(y == 1, cfg.positive_weight, 1.0)
    fixed_w = np.ones(n_rows) if weights is None else weights
    base = _base_score(y, class_w * fixed_w) if n_rows else 0.0

    if n_rows == 0 or np.unique(y).size < 2:
        message = "Training labels hold a single class, the ensemble predicts the prior only"
        log.warning(message)
        warnings.warn(message, BoostingWarning, stacklevel=3)
        return BoostedEnsemble((), cfg.learning_rate, base, feature_names)

    trees = []
    margin = np.full(n_rows, base)
    for rnd in range(cfg.rounds):
        row_w = class_w * (fixed_w if weight_fn is None else weight_fn(rnd, margin))
        prob = expit(margin)
        grad = (prob - y) * row_w
        hess = prob * (1.0 - prob) * row_w
        tree = fit_tree(X, grad, hess, cfg)
        trees.append(tree)
        margin = margin + cfg.learning_rate * tree.predict(X)

        stats = RoundStats(
            round=rnd,
            train_loss=float(np.mean(bce_with_logits(margin, y))),
            n_leaves=_count_leaves(tree),
        )
        log.debug("Round %d: loss %.6f, %d leaves", rnd, stats.train_loss, stats.n_leaves)
        if on_round is not None:
            on_round(stats)

    return BoostedEnsemble(tuple(trees), cfg.learning_rate, base, feature_names)


def normalize_weights(weights: Any, n_rows: int) -> np.ndarray:
    """Validates row weights and rescales them to sum to the number of rows."""
    weights = np.asarray(weights, dtype=np.float64).reshape(-1)
    if weights.shape[0] != n_rows:
        raise DimensionMismatch(n_rows, weights.shape[0], "row weights")
    if not np.isfinite(weights).all() or (weights < 0).any():
        raise InvalidArgument("Row weights must be finite and nonnegative")
    total = weights.sum()
    if total <= 0:
        raise InvalidArgument("Row weights sum to zero")
    return weights * (n_rows / total)


def train_boosted(
    ds: TabularDataset,
    cfg: TrainConfig,
    weights: Optional[Any] = None,
    *,
    on_round: Optional[Callable[[RoundStats], None]] = None,
) -> BoostedEnsemble:
    """Baseline boosted ensemble on the main split, optionally with row weights."""
    require_role(ds, ("main_train",), "train_boosted")
    row_w = None if weights is None else normalize_weights(weights, ds.n_rows)
    log.info(
        "Boosting %d rounds of depth-%d trees on %d rows", cfg.rounds, cfg.max_depth, ds.n_rows
    )
    return boost(
        ds.X,
        ds.labels.astype(np.float64),
        cfg,
        feature_names=ds.feature_names,
        weights=row_w,
        on_round=on_round,
    )
