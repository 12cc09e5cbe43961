"""Classifiers: smooth networks and boosted trees"""
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

from .boosted import BoostedEnsemble, RoundStats, TreeNode, boost, train_boosted
from .config import TrainConfig
from .io import Model, ModelMeta, load_model, model_from_doc, model_to_doc, save_model
from .predict import labels_from_proba, predict_label, predict_proba
from .smooth import EpochStats, SmoothClassifier, bce_with_logits, input_gradient, train_smooth

__all__ = [
    "BoostedEnsemble",
    "EpochStats",
    "Model",
    "ModelMeta",
    "RoundStats",
    "SmoothClassifier",
    "TrainConfig",
    "TreeNode",
    "bce_with_logits",
    "boost",
    "input_gradient",
    "labels_from_proba",
    "load_model",
    "model_from_doc",
    "model_to_doc",
    "predict_label",
    "predict_proba",
    "save_model",
    "train_boosted",
    "train_smooth",
]
