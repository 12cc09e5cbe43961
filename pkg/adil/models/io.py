"""Model artifacts"""
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
from typing import Any, Dict, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from adil.error import IntegrityError
from adil.util.misc import atomic_write, canonical_json, seal, unseal

from .boosted import BoostedEnsemble, TreeNode
from .smooth import SmoothClassifier

__all__ = ["Model", "ModelMeta", "load_model", "model_from_doc", "model_to_doc", "save_model"]

Model = Union[SmoothClassifier, BoostedEnsemble]


class ModelMeta(BaseModel):
    """What a model was trained from."""

    model_config = ConfigDict(extra="forbid")

    method: str
    config: Dict[str, Any] = Field(default_factory=dict)
    # train_checksum, train_rows, metric_checksum, metric_rows, ...
    provenance: Dict[str, Any] = Field(default_factory=dict)


def _model_body(model: Model) -> Dict[str, Any]:
    if isinstance(model, SmoothClassifier):
        return {
            "kind": "smooth",
            "activation": model.activation,
            "weights": [w.tolist() for w in model.weights],
            "biases": [b.tolist() for b in model.biases],
            "feature_names": list(model.feature_names),
        }
    if isinstance(model, BoostedEnsemble):
        return {
            "kind": "boosted",
            "learning_rate": model.learning_rate,
            "base_score": model.base_score,
            "trees": [tree.to_dict() for tree in model.trees],
            "feature_names": list(model.feature_names),
        }
    raise TypeError(f"Can't serialize a {type(model).__name__}")


def model_to_doc(model: Model, meta: ModelMeta) -> Dict[str, Any]:
    return dict(seal({"model": _model_body(model), "meta": meta.model_dump(mode="json")}))


def model_from_doc(doc: Dict[str, Any]) -> Tuple[Model, ModelMeta]:
    body = unseal(doc, what="model")
    try:
        params = body["model"]
        meta = ModelMeta.model_validate(body["meta"])
        kind = params["kind"]
        if kind == "smooth":
            model: Model = SmoothClassifier(
                tuple(np.asarray(w, dtype=np.float64) for w in params["weights"]),
                tuple(np.asarray(b, dtype=np.float64) for b in params["biases"]),
                params["activation"],
                tuple(params["feature_names"]),
            )
        elif kind == "boosted":
            model = BoostedEnsemble(
                tuple(TreeNode.from_dict(tree) for tree in params["trees"]),
                float(params["learning_rate"]),
                float(params["base_score"]),
                tuple(params["feature_names"]),
            )
        else:
            raise IntegrityError(f"Unknown model kind {kind!r}")
    except (KeyError, TypeError, ValueError) as err:
        raise IntegrityError(f"Malformed model artifact: {err}") from err

    return model, meta


def save_model(model: Model, meta: ModelMeta, path: Union[str, Path]) -> None:
    atomic_write(path, canonical_json(model_to_doc(model, meta)))


def load_model(path: Union[str, Path]) -> Tuple[Model, ModelMeta]:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as err:
        raise IntegrityError(f"Model file '{path}' is corrupt: {err}") from err
    return model_from_doc(doc)
