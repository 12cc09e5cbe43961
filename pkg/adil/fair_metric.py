"""Sensitive-subspace fair metric"""
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
import json
import logging
import warnings
from functools import cached_property
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.linalg
from pydantic import BaseModel, ConfigDict
from scipy.spatial.distance import cdist
from sklearn.exceptions import ConvergenceWarning
from sklearn.linear_model import LogisticRegression
from sklearn.model_selection import train_test_split

from adil.dataset import TabularDataset, require_role
from adil.error import (
    ConvergenceNotice,
    DataError,
    DegenerateSubspaceError,
    DimensionMismatch,
    IntegrityError,
    SchemaError,
)
from adil.pairs import iter_pairs, plan_pairs
from adil.util.misc import atomic_write, canonical_json, seal, unseal

__all__ = [
    "FairMetric",
    "SubspaceFitReport",
    "fair_distance",
    "learn_sensitive_subspace",
    "load_metric",
    "metric_from_doc",
    "metric_to_doc",
    "pairwise_fair_distances",
    "save_metric",
]

log = logging.getLogger("fair_metric")

# Directions whose singular value falls below this fraction of the largest are dropped
RANK_TOL = 1e-8


@dataclasses.dataclass(frozen=True, eq=False)
class FairMetric:
    """Fair distance d(x, x') = ||(I - P)(x - x')|| with P projecting on the sensitive subspace.

    `basis` holds one orthonormal sensitive direction per row. An empty basis gives the
    Euclidean distance.
    """

    basis: np.ndarray
    feature_names: Tuple[str, ...]
    epsilon_default: float = 0.0
    fitted_rows: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        names = tuple(self.feature_names)
        basis = np.array(self.basis, dtype=np.float64).reshape(-1, len(names))
        basis.setflags(write=False)
        object.__setattr__(self, "basis", basis)
        object.__setattr__(self, "feature_names", names)
        if self.epsilon_default < 0:
            raise DataError("epsilon_default must be nonnegative")
        if self.fitted_rows is not None:
            rows = np.asarray(self.fitted_rows, dtype=np.int64).reshape(-1)
            rows.setflags(write=False)
            object.__setattr__(self, "fitted_rows", rows)

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    @property
    def dimension(self) -> int:
        return self.basis.shape[0]

    @cached_property
    def projector(self) -> np.ndarray:
        proj = self.basis.T @ self.basis
        proj.setflags(write=False)
        return proj

    @cached_property
    def complement(self) -> np.ndarray:
        comp = np.eye(self.n_features) - self.projector
        comp.setflags(write=False)
        return comp

    def project_out(self, X: np.ndarray) -> np.ndarray:
        """Removes the sensitive-subspace component of each row."""
        X = np.asarray(X, dtype=np.float64)
        if X.shape[-1] != self.n_features:
            raise DimensionMismatch(self.n_features, X.shape[-1], "fair metric input")
        return X - (X @ self.basis.T) @ self.basis

    def check_features(self, names: Sequence[str]) -> None:
        if tuple(names) != self.feature_names:
            raise SchemaError(
                "Feature names differ from the ones the fair metric was learned on, "
                "columns were added, dropped or reordered"
            )


class SubspaceFitReport(BaseModel):
    model_config = ConfigDict(extra="forbid")

    heldout_accuracy: float
    heldout_rows: int
    dimension: int
    n_iter: int
    converged: bool
    categories: List[str]
    reference_category: str
    n_rows: int
    epsilon_default: float


def fair_distance(m: FairMetric, x: Any, x_other: Any) -> float:
    """sqrt((x - x')^T (I - P) (x - x'))"""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    x_other = np.asarray(x_other, dtype=np.float64).reshape(-1)
    for vec in (x, x_other):
        if vec.shape[0] != m.n_features:
            raise DimensionMismatch(m.n_features, vec.shape[0], "fair_distance")

    return float(np.linalg.norm(m.project_out(x - x_other)))


def pairwise_fair_distances(
    m: FairMetric, X: np.ndarray, Y: Optional[np.ndarray] = None
) -> np.ndarray:
    Z = m.project_out(X)
    return cdist(Z, Z if Y is None else m.project_out(Y))


def _fit_direction_classifier(
    X: np.ndarray, s: np.ndarray, l2_penalty: float, max_iter: int
) -> Tuple[LogisticRegression, bool]:
    clf = LogisticRegression(C=1.0 / l2_penalty, max_iter=max_iter)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", ConvergenceWarning)
        clf.fit(X, s)

    converged = not any(issubclass(item.category, ConvergenceWarning) for item in caught)
    return clf, converged


def _coefficient_directions(clf: LogisticRegression) -> np.ndarray:
    coef = np.atleast_2d(clf.coef_)
    if coef.shape[0] == 1:
        return coef
    # Multinomial: contrast every category against the reference one
    return coef[1:] - coef[0]


def _group_mean_directions(
    X: np.ndarray, s: np.ndarray, categories: np.ndarray, k_extra: int
) -> np.ndarray:
    if k_extra <= 0:
        return np.empty((0, X.shape[1]))

    means = np.stack([X[s == category].mean(axis=0) for category in categories])
    spread = means - means.mean(axis=0)
    _, sing, vt = np.linalg.svd(spread, full_matrices=False)
    if sing.size == 0 or sing[0] == 0.0:
        return np.empty((0, X.shape[1]))
    keep = sing > RANK_TOL * sing[0]
    return vt[keep][:k_extra]


def orthonormalize(directions: np.ndarray) -> np.ndarray:
    """Orthonormal rows spanning `directions`, with a deterministic sign per row."""
    if directions.size == 0 or not np.any(directions):
        return np.empty((0, directions.shape[1]))

    basis = scipy.linalg.orth(directions.T, rcond=RANK_TOL).T
    pivots = np.argmax(np.abs(basis), axis=1)
    signs = np.sign(basis[np.arange(basis.shape[0]), pivots])
    return basis * signs[:, None]


def _distance_percentile(
    Z: np.ndarray, percentile: float, pair_budget: int, seed: int
) -> float:
    sampling = plan_pairs(Z.shape[0], pair_budget, seed)
    chunks = [np.linalg.norm(Z[i] - Z[j], axis=1) for i, j in iter_pairs(Z.shape[0], sampling)]
    if not chunks:
        return 0.0
    return float(np.percentile(np.concatenate(chunks), percentile))


def learn_sensitive_subspace(
    metric_split: TabularDataset,
    k_extra: int = 0,
    *,
    seed: int = 0,
    l2_penalty: float = 1e-2,
    max_iter: int = 1000,
    holdout_fraction: float = 0.2,
    epsilon_percentile: float = 5.0,
    pair_budget: int = 200_000,
) -> Tuple[FairMetric, SubspaceFitReport]:
    """Learns the sensitive subspace from the metric split.

    A logistic classifier predicts the sensitive category from the features; its
    coefficient vectors, plus up to `k_extra` principal directions of the between-group
    mean differences, are orthonormalized into the basis.

    Raises:
        RoleError: The dataset is not the metric split.
        DegenerateSubspaceError: Fewer than two categories, a category with fewer than two
            rows, or no usable direction.
    """
    require_role(metric_split, ("metric_train",), "learn_sensitive_subspace")
    if metric_split.sensitive is None:
        raise DataError("The metric split carries no sensitive column")

    X = metric_split.X
    s = metric_split.sensitive.astype(str)
    categories, counts = np.unique(s, return_counts=True)
    if categories.size < 2:
        raise DegenerateSubspaceError(
            f"Sensitive column has a single category {categories.tolist()}, nothing to separate"
        )
    if (counts < 2).any():
        raise DegenerateSubspaceError(
            f"Every sensitive category needs two rows, got {dict(zip(categories, counts.tolist()))}"
        )

    clf, converged = _fit_direction_classifier(X, s, l2_penalty, max_iter)
    if not converged:
        message = f"Direction classifier did not converge in {max_iter} iterations"
        log.warning(message)
        warnings.warn(message, ConvergenceNotice, stacklevel=2)

    n_rows = metric_split.n_rows
    n_hold = int(round(holdout_fraction * n_rows))
    if categories.size <= n_hold <= n_rows - categories.size:
        fit_idx, hold_idx = train_test_split(
            np.arange(n_rows), test_size=n_hold, stratify=s, random_state=seed
        )
        fold_clf, _ = _fit_direction_classifier(X[fit_idx], s[fit_idx], l2_penalty, max_iter)
        accuracy = float(fold_clf.score(X[hold_idx], s[hold_idx]))
    else:
        log.warning("Metric split too small for a held-out fold, reporting training accuracy")
        n_hold = 0
        accuracy = float(clf.score(X, s))

    directions = np.vstack(
        [_coefficient_directions(clf), _group_mean_directions(X, s, categories, k_extra)]
    )
    basis = orthonormalize(directions)
    if basis.shape[0] == 0:
        raise DegenerateSubspaceError("The sensitive directions vanished, features carry no signal")

    provisional = FairMetric(basis, metric_split.feature_names)
    epsilon = _distance_percentile(
        provisional.project_out(X), epsilon_percentile, pair_budget, seed
    )
    metric = FairMetric(
        basis, metric_split.feature_names, epsilon_default=epsilon, fitted_rows=metric_split.row_ids
    )
    report = SubspaceFitReport(
        heldout_accuracy=accuracy,
        heldout_rows=n_hold,
        dimension=metric.dimension,
        n_iter=int(np.max(clf.n_iter_)),
        converged=converged,
        categories=categories.tolist(),
        reference_category=str(categories[0]),
        n_rows=n_rows,
        epsilon_default=epsilon,
    )
    log.info(
        "Learned a %d-dimensional sensitive subspace, held-out accuracy %.4f, epsilon %.4g",
        metric.dimension,
        accuracy,
        epsilon,
    )
    return metric, report


def metric_to_doc(m: FairMetric) -> Dict[str, Any]:
    return dict(
        seal(
            {
                "kind": "fair_metric",
                "basis": m.basis.tolist(),
                "projector": m.projector.tolist(),
                "feature_names": list(m.feature_names),
                "epsilon_default": m.epsilon_default,
                "fitted_rows": None if m.fitted_rows is None else m.fitted_rows.tolist(),
            }
        )
    )


def metric_from_doc(doc: Dict[str, Any]) -> FairMetric:
    body = unseal(doc, what="fair metric")
    if body.get("kind") != "fair_metric":
        raise IntegrityError(f"Not a fair metric artifact: kind={body.get('kind')!r}")

    names = body["feature_names"]
    basis = np.asarray(body["basis"], dtype=np.float64).reshape(-1, len(names))
    gram = basis @ basis.T
    if not np.allclose(gram, np.eye(basis.shape[0]), atol=1e-10, rtol=0):
        raise IntegrityError("Stored basis is not orthonormal")
    stored = body.get("projector")
    if stored is not None:
        recomputed = basis.T @ basis
        if np.max(np.abs(np.asarray(stored, dtype=np.float64) - recomputed), initial=0.0) > 1e-12:
            raise IntegrityError("Stored projector disagrees with the basis")

    return FairMetric(
        basis,
        tuple(names),
        epsilon_default=float(body["epsilon_default"]),
        fitted_rows=body.get("fitted_rows"),
    )


def save_metric(m: FairMetric, path: Union[str, Path]) -> None:
    atomic_write(path, canonical_json(metric_to_doc(m)))


def load_metric(path: Union[str, Path]) -> FairMetric:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as err:
        raise IntegrityError(f"Fair metric file '{path}' is corrupt: {err}") from err

    return metric_from_doc(doc)
