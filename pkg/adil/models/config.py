"""Model hyperparameters"""
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

from typing import List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field

__all__ = ["TrainConfig"]


class TrainConfig(BaseModel):
    """Hyper-parameters shared by every trainer.

    The smooth classifier reads the epoch/batch/momentum/layer fields, the boosted
    ensemble reads the round/tree fields. Both read `learning_rate`, `seed`,
    `threshold` and `positive_weight`.
    """

    model_config = ConfigDict(extra="forbid")

    seed: Optional[int] = None
    learning_rate: float = Field(0.05, ge=0.0)
    threshold: float = Field(0.5, gt=0.0, lt=1.0)
    # Loss weight of label-1 rows, label-0 rows weigh 1
    positive_weight: float = Field(1.0, gt=0.0)

    epochs: int = Field(20, ge=0)
    batch_size: int = Field(128, gt=0)
    momentum: float = Field(0.9, ge=0.0, lt=1.0)
    hidden_layers: List[int] = Field(default_factory=lambda: [32])
    activation: Literal["relu", "tanh"] = "relu"

    rounds: int = Field(100, ge=0)
    max_depth: int = Field(3, ge=1)
    min_child_weight: float = Field(1.0, ge=0.0)
    reg_lambda: float = Field(1.0, ge=0.0)
    min_split_gain: float = Field(0.0, ge=0.0)

    @property
    def rng_seed(self) -> int:
        return 0 if self.seed is None else self.seed
