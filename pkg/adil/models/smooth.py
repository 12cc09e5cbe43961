"""Smooth (differentiable) classifier trained with mini-batch SGD"""
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
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel
from scipy.special import expit

from adil.dataset import TabularDataset, require_role
from adil.error import DimensionMismatch, DivergenceError, InvalidArgument

from .config import TrainConfig

__all__ = [
    "EpochStats",
    "SmoothClassifier",
    "bce_with_logits",
    "fit_network",
    "input_gradient",
    "train_smooth",
]

log = logging.getLogger("models.smooth")

Perturb = Callable[["SmoothClassifier", np.ndarray, np.ndarray], np.ndarray]


@dataclasses.dataclass(frozen=True, eq=False)
class SmoothClassifier:
    """Feed-forward network with one logit output.

    `weights[k]` has shape (fan_in, fan_out), the last layer maps to a single unit.
    """

    weights: Tuple[np.ndarray, ...]
    biases: Tuple[np.ndarray, ...]
    activation: str = "relu"
    feature_names: Tuple[str, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "weights", tuple(self.weights))
        object.__setattr__(self, "biases", tuple(self.biases))
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        if len(self.weights) != len(self.biases) or not self.weights:
            raise InvalidArgument("A network needs one bias vector per weight matrix")
        if self.weights[-1].shape[1] != 1:
            raise InvalidArgument("The output layer must have a single unit")
        if self.activation not in _ACTIVATIONS:
            raise InvalidArgument(f"Unknown activation '{self.activation}'")

    @property
    def n_features(self) -> int:
        return self.weights[0].shape[0]

    @property
    def layer_sizes(self) -> List[int]:
        return [self.n_features] + [w.shape[1] for w in self.weights]

    def logits(self, X: np.ndarray) -> np.ndarray:
        return _forward(self, _as_batch(self, X))[0]


def _relu_grad(pre: np.ndarray, _: np.ndarray) -> np.ndarray:
    return (pre > 0).astype(np.float64)


def _tanh_grad(_: np.ndarray, act: np.ndarray) -> np.ndarray:
    return 1.0 - act * act


_ACTIVATIONS = {
    "relu": (lambda z: np.maximum(z, 0.0), _relu_grad),
    "tanh": (np.tanh, _tanh_grad),
}


def bce_with_logits(logits: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Per-row binary cross-entropy, stable for large logits."""
    return np.logaddexp(0.0, logits) - labels * logits


def _as_batch(model: SmoothClassifier, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1) if X.size else X.reshape(0, model.n_features)
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise DimensionMismatch(model.n_features, X.shape[-1], "classifier input")
    return X


def _forward(
    model: SmoothClassifier, X: np.ndarray
) -> Tuple[np.ndarray, List[np.ndarray], List[np.ndarray]]:
    act, _ = _ACTIVATIONS[model.activation]
    pres: List[np.ndarray] = []
    acts = [X]
    hidden = X
    last = len(model.weights) - 1
    for layer, (w, b) in enumerate(zip(model.weights, model.biases)):
        pre = hidden @ w + b
        pres.append(pre)
        if layer < last:
            hidden = act(pre)
            acts.append(hidden)
    return pres[-1][:, 0], pres, acts


def _backward(
    model: SmoothClassifier, pres: List[np.ndarray], acts: List[np.ndarray], dlogits: np.ndarray
) -> Tuple[List[np.ndarray], List[np.ndarray], np.ndarray]:
    _, act_grad = _ACTIVATIONS[model.activation]
    n_layers = len(model.weights)
    grad_w: List[np.ndarray] = [np.empty(0)] * n_layers
    grad_b: List[np.ndarray] = [np.empty(0)] * n_layers
    delta = dlogits[:, None]
    for layer in reversed(range(n_layers)):
        grad_w[layer] = acts[layer].T @ delta
        grad_b[layer] = delta.sum(axis=0)
        delta = delta @ model.weights[layer].T
        if layer > 0:
            delta = delta * act_grad(pres[layer - 1], acts[layer])
    return grad_w, grad_b, delta


def input_gradient(model: SmoothClassifier, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Gradient of the per-row loss with respect to each input row."""
    single = np.asarray(x).ndim == 1
    X = _as_batch(model, x)
    labels = np.broadcast_to(np.asarray(y, dtype=np.float64), (X.shape[0],))
    logits, pres, acts = _forward(model, X)
    _, _, grad = _backward(model, pres, acts, expit(logits) - labels)
    return grad[0] if single else grad


def init_network(
    n_features: int, cfg: TrainConfig, rng: np.random.Generator, feature_names: Sequence[str] = ()
) -> SmoothClassifier:
    """Hidden layers drawn with std sqrt(1/fan_in), output layer starts at zero."""
    sizes = [n_features] + list(cfg.hidden_layers)
    weights = []
    biases = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        weights.append(rng.normal(0.0, np.sqrt(1.0 / max(fan_in, 1)), size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    weights.append(np.zeros((sizes[-1], 1)))
    biases.append(np.zeros(1))
    return SmoothClassifier(tuple(weights), tuple(biases), cfg.activation, tuple(feature_names))


class EpochStats(BaseModel):
    epoch: int
    train_loss: float
    clean_loss: float


def _row_weights(y: np.ndarray, positive_weight: float) -> np.ndarray:
    return np.where(y == 1, positive_weight, 1.0)


def _mean_loss(model: SmoothClassifier, X: np.ndarray, y: np.ndarray, w: np.ndarray) -> float:
    if X.shape[0] == 0:
        return 0.0
    return float(np.mean(w * bce_with_logits(_forward(model, X)[0], y)))


def fit_network(
    X: np.ndarray,
    y: np.ndarray,
    cfg: TrainConfig,
    *,
    feature_names: Sequence[str] = (),
    perturb: Optional[Perturb] = None,
    on_epoch: Optional[Callable[[EpochStats], None]] = None,
    divergence_factor: Optional[float] = None,
) -> SmoothClassifier:
    """Mini-batch SGD with classical momentum.

    When `perturb` is given each batch is replaced by `perturb(model, xb, yb)` before the
    gradient step, the clean batch loss is still tracked for the epoch stats.

    Raises:
        DivergenceError: The loss became non-finite, or exceeded `divergence_factor`
            times the initial loss.
    """
    rng = np.random.default_rng(cfg.rng_seed)
    model = init_network(X.shape[1], cfg, rng, feature_names)
    weights = [w.copy() for w in model.weights]
    biases = [b.copy() for b in model.biases]
    vel_w = [np.zeros_like(w) for w in weights]
    vel_b = [np.zeros_like(b) for b in biases]
    model = SmoothClassifier(weights, biases, cfg.activation, model.feature_names)

    n_rows = X.shape[0]
    row_w = _row_weights(y, cfg.positive_weight)
    initial_loss = _mean_loss(model, X, y, row_w)
    loss_floor = max(initial_loss, 1e-12)
    log.debug("Initial training loss %.6f", initial_loss)

    for epoch in range(cfg.epochs):
        order = np.arange(n_rows) if cfg.batch_size >= n_rows else rng.permutation(n_rows)
        loss_sum = 0.0
        clean_sum = 0.0
        for batch, start in enumerate(range(0, n_rows, cfg.batch_size)):
            idx = order[start : start + cfg.batch_size]
            xb, yb, wb = X[idx], y[idx], row_w[idx]
            used = xb if perturb is None else perturb(model, xb, yb)

            logits, pres, acts = _forward(model, used)
            losses = wb * bce_with_logits(logits, yb)
            batch_loss = float(losses.mean())
            if not np.isfinite(batch_loss):
                raise DivergenceError(
                    "Loss became non-finite, lower the learning rate",
                    epoch=epoch,
                    batch=batch,
                    learning_rate=cfg.learning_rate,
                )
            if divergence_factor is not None and batch_loss > divergence_factor * loss_floor:
                raise DivergenceError(
                    f"Loss exceeded {divergence_factor:g} times its initial value",
                    epoch=epoch,
                    batch=batch,
                    loss=batch_loss,
                    initial_loss=initial_loss,
                )
            loss_sum += batch_loss * idx.size
            clean_sum += (
                batch_loss * idx.size
                if perturb is None
                else float(np.sum(wb * bce_with_logits(_forward(model, xb)[0], yb)))
            )

            grad_w, grad_b, _ = _backward(model, pres, acts, wb * (expit(logits) - yb) / idx.size)
            for k, (gw, gb) in enumerate(zip(grad_w, grad_b)):
                vel_w[k] = cfg.momentum * vel_w[k] - cfg.learning_rate * gw
                vel_b[k] = cfg.momentum * vel_b[k] - cfg.learning_rate * gb
                weights[k] += vel_w[k]
                biases[k] += vel_b[k]

        stats = EpochStats(
            epoch=epoch,
            train_loss=loss_sum / max(n_rows, 1),
            clean_loss=clean_sum / max(n_rows, 1),
        )
        log.debug("Epoch %d: loss %.6f", epoch, stats.train_loss)
        if on_epoch is not None:
            on_epoch(stats)

    final_loss = _mean_loss(model, X, y, row_w)
    if final_loss > initial_loss:
        log.warning("Training loss rose from %.6f to %.6f", initial_loss, final_loss)

    return SmoothClassifier(
        tuple(w.copy() for w in weights),
        tuple(b.copy() for b in biases),
        cfg.activation,
        model.feature_names,
    )


def train_smooth(
    ds: TabularDataset, cfg: TrainConfig, *, on_epoch: Optional[Callable[[EpochStats], None]] = None
) -> SmoothClassifier:
    """Baseline smooth classifier by empirical risk minimization on the main split."""
    require_role(ds, ("main_train",), "train_smooth")
    log.info(
        "Training smooth classifier %s on %d rows for %d epochs",
        [ds.n_features] + list(cfg.hidden_layers) + [1],
        ds.n_rows,
        cfg.epochs,
    )
    return fit_network(
        ds.X, ds.labels.astype(np.float64), cfg, feature_names=ds.feature_names, on_epoch=on_epoch
    )
