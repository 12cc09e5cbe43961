#!/usr/bin/env python
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

import json
from pathlib import Path
from typing import Any, Dict, Optional, Sequence

import numpy as np
import pandas as pd

from adil.dataset import TabularDataset
from adil.fair_metric import FairMetric
from adil.models import TrainConfig


def feature_frame(X: np.ndarray, prefix: str = "f") -> pd.DataFrame:
    X = np.asarray(X, dtype=np.float64)
    return pd.DataFrame(X, columns=[f"{prefix}{i}" for i in range(X.shape[1])])


def toy_dataset(
    X: Any,
    y: Any,
    role: str = "main_train",
    sensitive: Optional[Sequence[str]] = None,
    row_ids: Optional[Sequence[int]] = None,
) -> TabularDataset:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    return TabularDataset(
        features=feature_frame(X),
        labels=np.asarray(y),
        role=role,
        sensitive=None if sensitive is None else np.asarray(sensitive, dtype=object),
        sensitive_name=None if sensitive is None else "gender",
        row_ids=None if row_ids is None else np.asarray(row_ids),
    )


def blobs(n_rows: int = 200, n_features: int = 3, seed: int = 0) -> TabularDataset:
    """Main-train split whose label follows the first two features."""
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n_rows, n_features))
    logit = 2.0 * X[:, 0] - 1.5 * X[:, 1]
    y = (rng.random(n_rows) < 1.0 / (1.0 + np.exp(-logit))).astype(np.int64)
    return toy_dataset(X, y)


def gender_aligned(n_rows: int = 400, seed: int = 0, noise_features: int = 1) -> TabularDataset:
    """Metric split where feature 0 is the gender indicator and the rest is noise."""
    rng = np.random.default_rng(seed)
    male = rng.random(n_rows) < 0.5
    X = np.column_stack(
        [np.where(male, 1.0, -1.0) + 0.05 * rng.normal(size=n_rows)]
        + [rng.normal(size=n_rows) for _ in range(noise_features)]
    )
    y = rng.integers(0, 2, size=n_rows)
    return toy_dataset(X, y, role="metric_train", sensitive=np.where(male, "M", "F"))


def random_metric(n_features: int, dimension: int, seed: int = 0) -> FairMetric:
    rng = np.random.default_rng(seed)
    if dimension == 0:
        return FairMetric(np.empty((0, n_features)), [f"f{i}" for i in range(n_features)])
    q, _ = np.linalg.qr(rng.normal(size=(n_features, dimension)))
    return FairMetric(q.T, [f"f{i}" for i in range(n_features)])


def quick_train(**overrides: Any) -> TrainConfig:
    params: Dict[str, Any] = dict(
        seed=7, epochs=3, batch_size=32, learning_rate=0.1, hidden_layers=[8], rounds=5
    )
    params.update(overrides)
    return TrainConfig(**params)


def write_config(directory: Path, doc: Dict[str, Any], name: str = "adil.json") -> Path:
    path = directory / name
    path.write_text(json.dumps(doc), encoding="utf-8")
    return path


def sensitive_axis(n_features: int = 3, epsilon_default: float = 0.0) -> FairMetric:
    """Fair metric whose only sensitive direction is feature 0."""
    basis = np.eye(n_features)[:1]
    return FairMetric(basis, [f"f{i}" for i in range(n_features)], epsilon_default)


def spurious_toy(n_rows: int = 600, seed: int = 0, role: str = "main_train") -> TabularDataset:
    """Label driven equally by feature 1 and by the sensitive-aligned feature 0."""
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n_rows, 3))
    logit = 2.0 * X[:, 1] + 2.0 * X[:, 0]
    y = (rng.random(n_rows) < 1.0 / (1.0 + np.exp(-logit))).astype(np.int64)
    return toy_dataset(X, y, role=role)
