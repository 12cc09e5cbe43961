"""Shared prediction helpers"""
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

from functools import singledispatch
from typing import Any

import numpy as np
from scipy.special import expit

from adil.error import InvalidArgument

from .boosted import BoostedEnsemble
from .smooth import SmoothClassifier

__all__ = ["labels_from_proba", "predict_label", "predict_proba"]


@singledispatch
def predict_proba(model: Any, X: np.ndarray) -> np.ndarray:
    """P(y = 1 | x) for every row of X."""
    raise TypeError(f"Can't predict with a {type(model).__name__}")


@predict_proba.register
def _(model: SmoothClassifier, X: np.ndarray) -> np.ndarray:
    return expit(model.logits(X))


@predict_proba.register
def _(model: BoostedEnsemble, X: np.ndarray) -> np.ndarray:
    return expit(model.margin(X))


def labels_from_proba(proba: np.ndarray, threshold: float = 0.5) -> np.ndarray:
    if not 0.0 < threshold < 1.0:
        raise InvalidArgument(f"Threshold must lie in (0, 1), got {threshold}")
    return (np.asarray(proba) >= threshold).astype(np.int64)


def predict_label(model: Any, X: np.ndarray, threshold: float = 0.5) -> np.ndarray:
    return labels_from_proba(predict_proba(model, X), threshold)
