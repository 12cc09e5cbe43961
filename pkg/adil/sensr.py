"""Distributionally robust training of smooth classifiers against fair-metric perturbations"""
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
import warnings
from typing import Any, Callable, Dict, List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from adil.dataset import TabularDataset, require_role
from adil.error import AdversaryWarning, IsolationError
from adil.fair_metric import FairMetric
from adil.models.config import TrainConfig
from adil.models.smooth import (
    EpochStats,
    SmoothClassifier,
    bce_with_logits,
    fit_network,
    input_gradient,
)

__all__ = ["SensrConfig", "SensrEpoch", "train_sensr", "worst_case_perturb"]

log = logging.getLogger("sensr")


class SensrConfig(TrainConfig):
    """Smooth training options plus the adversary."""

    adversary_steps: int = Field(10, ge=0)
    adversary_step_size: float = Field(0.1, ge=0.0)
    # Step along the sensitive span, which the fair distance leaves unpenalized
    subspace_step_size: float = Field(5.0, ge=0.0)
    fair_lambda: float = Field(10.0, gt=0.0)
    epsilon_train: float = Field(0.1, ge=0.0)
    auto_tune_lambda: bool = True
    # Features are standardized, perturbed coordinates stay inside [-box, box]
    box: float = Field(6.0, gt=0.0)
    divergence_factor: float = Field(1e3, gt=1.0)


class SensrEpoch(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    epoch: int
    clean_loss: float
    adv_loss: float
    mean_perturb_dist: float
    fair_lambda: float = Field(serialization_alias="lambda")


def _fair_sq(m: FairMetric, delta: np.ndarray) -> np.ndarray:
    resid = m.project_out(delta)
    return np.sum(resid * resid, axis=1)


def _row_loss(model: SmoothClassifier, X: np.ndarray, y: np.ndarray) -> np.ndarray:
    return bce_with_logits(model.logits(X), y)


def worst_case_perturb(
    model: SmoothClassifier,
    m: FairMetric,
    x: Any,
    y: Any,
    cfg: SensrConfig,
    *,
    fair_lambda: Optional[float] = None,
) -> np.ndarray:
    """Approximately maximizes loss(x') - lambda * d(x, x')^2 by gradient ascent.

    The gradient component inside the sensitive span moves with `subspace_step_size`. The
    rest takes `adversary_step_size` steps that treat the penalty implicitly, so a huge
    lambda pins x in the fair directions while the span stays free.

    Returns the best iterate seen, so loss(x') >= loss(x) for every row. Accepts one row or
    a batch.
    """
    single = np.asarray(x).ndim == 1
    X = np.atleast_2d(np.asarray(x, dtype=np.float64))
    labels = np.broadcast_to(np.asarray(y, dtype=np.float64), (X.shape[0],))
    lam = cfg.fair_lambda if fair_lambda is None else fair_lambda

    low = np.minimum(X, -cfg.box)
    high = np.maximum(X, cfg.box)
    best = X.copy()
    best_obj = _row_loss(model, X, labels)
    delta = np.zeros_like(X)
    warned = False
    for _ in range(cfg.adversary_steps):
        grad = input_gradient(model, X + delta, labels)
        fair_grad = m.project_out(grad)
        fair_delta = m.project_out(delta)
        span_delta = delta - fair_delta + cfg.subspace_step_size * (grad - fair_grad)
        # Implicit step on the quadratic penalty, stable for any lambda
        fair_delta = (fair_delta + cfg.adversary_step_size * fair_grad) / (
            1.0 + 2.0 * lam * cfg.adversary_step_size
        )
        delta = np.clip(X + fair_delta + span_delta, low, high) - X
        candidate = X + delta
        with np.errstate(over="ignore", invalid="ignore"):
            obj = _row_loss(model, candidate, labels) - lam * _fair_sq(m, delta)

        finite = np.isfinite(obj) & np.isfinite(delta).all(axis=1)
        if not finite.all():
            if not warned:
                warnings.warn(
                    "Adversary objective became non-finite, keeping the best finite iterate",
                    AdversaryWarning,
                    stacklevel=2,
                )
                warned = True
            delta[~finite] = best[~finite] - X[~finite]

        better = finite & (obj > best_obj)
        best[better] = candidate[better]
        best_obj[better] = obj[better]

    return best[0] if single else best


def train_sensr(
    ds: TabularDataset,
    m: FairMetric,
    cfg: SensrConfig,
    *,
    on_epoch: Optional[Callable[[SensrEpoch], None]] = None,
) -> SmoothClassifier:
    """Trains a smooth classifier on the worst-case fair perturbation of every batch.

    With `auto_tune_lambda` the penalty doubles after an epoch whose mean perturbation
    distance exceeded 1.2 * epsilon_train, and halves below 0.8 * epsilon_train.

    Raises:
        RoleError: The dataset is not the main training split.
        SchemaError: Feature names differ from the fair metric's.
        DivergenceError: The adversarial loss exploded.
    """
    require_role(ds, ("main_train",), "train_sensr")
    if ds.sensitive is not None:
        raise IsolationError("The main training split must not carry sensitive data")
    m.check_features(ds.feature_names)

    state: Dict[str, float] = {"lambda": cfg.fair_lambda, "dist": 0.0, "rows": 0}
    history: List[SensrEpoch] = []

    def perturb(model: SmoothClassifier, xb: np.ndarray, yb: np.ndarray) -> np.ndarray:
        x_adv = worst_case_perturb(model, m, xb, yb, cfg, fair_lambda=state["lambda"])
        state["dist"] += float(np.sum(np.sqrt(_fair_sq(m, x_adv - xb))))
        state["rows"] += xb.shape[0]
        return x_adv

    def epoch_end(stats: EpochStats) -> None:
        mean_dist = state["dist"] / max(state["rows"], 1)
        record = SensrEpoch(
            epoch=stats.epoch,
            clean_loss=stats.clean_loss,
            adv_loss=stats.train_loss,
            mean_perturb_dist=mean_dist,
            fair_lambda=state["lambda"],
        )
        history.append(record)
        log.info(
            "Epoch %d: clean %.5f, adversarial %.5f, distance %.4g, lambda %.4g",
            record.epoch,
            record.clean_loss,
            record.adv_loss,
            record.mean_perturb_dist,
            record.fair_lambda,
        )
        if cfg.auto_tune_lambda:
            if mean_dist > 1.2 * cfg.epsilon_train:
                state["lambda"] *= 2.0
            elif mean_dist < 0.8 * cfg.epsilon_train:
                state["lambda"] /= 2.0
        state["dist"] = 0.0
        state["rows"] = 0
        if on_epoch is not None:
            on_epoch(record)

    log.info(
        "Training with %d adversary steps, epsilon %.4g, lambda %.4g",
        cfg.adversary_steps,
        cfg.epsilon_train,
        cfg.fair_lambda,
    )
    return fit_network(
        ds.X,
        ds.labels.astype(np.float64),
        cfg,
        feature_names=ds.feature_names,
        perturb=perturb,
        on_epoch=epoch_end,
        divergence_factor=cfg.divergence_factor,
    )
