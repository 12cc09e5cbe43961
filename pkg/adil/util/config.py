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
from os import getenv
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from adil.dataset import SplitSpec
from adil.error import ConfigError
from adil.ifgb import IfgbConfig
from adil.models.config import TrainConfig
from adil.sensr import SensrConfig

__all__ = [
    "AuditOptions",
    "DataConfig",
    "METHODS",
    "MetricOptions",
    "PreprocessOptions",
    "RunConfig",
    "default_config_path",
    "default_output_dir",
    "load_config",
]

# CLI method name -> RunConfig field
METHODS = {
    "baseline-nn": "baseline_nn",
    "sensr": "sensr",
    "baseline-gbt": "baseline_gbt",
    "ifgb": "ifgb",
}


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class DataConfig(_Strict):
    csv: str
    label_column: str = "default"
    sensitive_column: str = "gender"
    drop_missing: bool = True


class PreprocessOptions(_Strict):
    # None infers categorical columns from non-numeric dtypes
    categorical: Optional[List[str]] = None
    passthrough: List[str] = Field(default_factory=list)


class MetricOptions(_Strict):
    k_extra: int = Field(0, ge=0)
    l2_penalty: float = Field(1e-2, gt=0.0)
    max_iter: int = Field(1000, gt=0)
    holdout_fraction: float = Field(0.2, ge=0.0, lt=1.0)
    epsilon_percentile: float = Field(5.0, ge=0.0, le=100.0)
    pair_budget: int = Field(200_000, gt=0)
    seed: Optional[int] = None


class AuditOptions(_Strict):
    # None derives a log-spaced grid from the test split
    epsilons: Optional[List[float]] = None
    n_epsilons: int = Field(20, ge=1)
    # None audits every pair
    pair_budget: Optional[int] = Field(2_000_000, gt=0)
    lipschitz_constant: float = Field(1.0, gt=0.0)
    threshold: float = Field(0.5, gt=0.0, lt=1.0)
    reference_group: str = "M"
    roc_thresholds: Optional[int] = Field(None, ge=2)
    seed: Optional[int] = None


def _gbt_defaults() -> Dict[str, Any]:
    return {"learning_rate": 0.1}


class RunConfig(_Strict):
    """One pipeline run. Every nested `seed` left empty takes the top-level seed."""

    seed: int = 0
    output: Optional[str] = None
    data: Optional[DataConfig] = None
    split: SplitSpec = Field(default_factory=SplitSpec)
    preprocess: PreprocessOptions = Field(default_factory=PreprocessOptions)
    metric: MetricOptions = Field(default_factory=MetricOptions)
    baseline_nn: TrainConfig = Field(default_factory=TrainConfig)
    sensr: SensrConfig = Field(default_factory=SensrConfig)
    baseline_gbt: TrainConfig = Field(default_factory=lambda: TrainConfig(**_gbt_defaults()))
    ifgb: IfgbConfig = Field(default_factory=lambda: IfgbConfig(**_gbt_defaults()))
    audit: AuditOptions = Field(default_factory=AuditOptions)

    @model_validator(mode="after")
    def _materialize_seeds(self) -> "RunConfig":
        for section in (
            self.split,
            self.metric,
            self.baseline_nn,
            self.sensr,
            self.baseline_gbt,
            self.ifgb,
            self.audit,
        ):
            if section.seed is None:
                section.seed = self.seed
        return self

    def train_config(self, method: str) -> TrainConfig:
        if method not in METHODS:
            raise ConfigError(f"Unknown method '{method}', expected one of {list(METHODS)}")
        return getattr(self, METHODS[method])


def default_config_path() -> str:
    return getenv("ADIL_CONFIG", "adil.json")


def default_output_dir() -> str:
    return getenv("ADIL_OUTPUT", "output")


def load_config(
    path: Union[str, Path, None] = None, *, seed: Optional[int] = None
) -> RunConfig:
    """Reads and validates a JSON run configuration.

    `seed` replaces the top-level seed before nested seeds are filled in. A relative
    data path is taken relative to the config file.

    Raises:
        ConfigError: Unreadable file, invalid JSON, unknown keys or out-of-range values.
    """
    path = Path(path or default_config_path())
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as err:
        raise ConfigError(f"Config file '{path}' does not exist") from err
    except json.JSONDecodeError as err:
        raise ConfigError(f"Config file '{path}' is not valid JSON: {err}") from err
    if not isinstance(raw, dict):
        raise ConfigError(f"Config file '{path}' must hold a JSON object")

    if seed is not None:
        raw["seed"] = seed
    data = raw.get("data")
    if isinstance(data, dict) and isinstance(data.get("csv"), str):
        csv = Path(data["csv"])
        if not csv.is_absolute():
            data["csv"] = str(path.parent / csv)

    try:
        return RunConfig.model_validate(raw)
    except ValidationError as err:
        raise ConfigError(f"Invalid config '{path}':\n{err}") from err
