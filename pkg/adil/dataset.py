"""Tabular credit data: ingestion, preprocessing and the three-way split"""
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
import math
import warnings
from functools import cached_property
from pathlib import Path
from typing import Any, Dict, Iterable, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, model_validator

from adil.error import (
    DataError,
    IsolationError,
    PreprocessWarning,
    RoleError,
    SchemaError,
)
from adil.util.misc import array_checksum, seal, unseal

__all__ = [
    "ROLES",
    "ROW_ID",
    "PreprocessRecipe",
    "SplitManifest",
    "SplitSpec",
    "TabularDataset",
    "apply_preprocess",
    "build_manifest",
    "dataset_to_frame",
    "fit_preprocess",
    "from_frame",
    "load_csv",
    "make_synthetic_credit",
    "three_way_split",
]

log = logging.getLogger("dataset")

Role = Literal["metric_train", "main_train", "test", "unsplit"]
ROLES: Tuple[str, ...] = ("metric_train", "main_train", "test", "unsplit")
SPLIT_ROLES: Tuple[str, ...] = ("metric_train", "main_train", "test")

# Column carrying the original row position through split files
ROW_ID = "row_id"


@dataclasses.dataclass(frozen=True, eq=False)
class TabularDataset:
    """Feature table with binary labels and an optional sensitive column kept apart.

    The sensitive column is never one of `features`. Datasets with role `main_train`
    carry neither the sensitive values nor its column name.
    """

    features: pd.DataFrame
    labels: np.ndarray
    role: str = "unsplit"
    sensitive: Optional[np.ndarray] = None
    sensitive_name: Optional[str] = None
    row_ids: Optional[np.ndarray] = None
    label_name: str = "label"

    def __post_init__(self) -> None:
        if self.role not in ROLES:
            raise DataError(f"Unknown dataset role '{self.role}'")

        features = self.features.reset_index(drop=True)
        labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        n_rows = len(features)
        if labels.shape[0] != n_rows:
            raise DataError(f"{labels.shape[0]} labels for {n_rows} rows")
        if labels.size and not np.isin(labels, (0, 1)).all():
            raise DataError("Labels must be 0 or 1")

        row_ids = (
            np.arange(n_rows, dtype=np.int64)
            if self.row_ids is None
            else np.asarray(self.row_ids, dtype=np.int64).reshape(-1)
        )
        if row_ids.shape[0] != n_rows:
            raise DataError(f"{row_ids.shape[0]} row ids for {n_rows} rows")
        if np.unique(row_ids).size != n_rows:
            raise DataError("Row ids must be unique")

        sensitive = self.sensitive
        if sensitive is not None:
            if self.role == "main_train":
                raise RoleError(("metric_train", "test", "unsplit"), self.role, "sensitive data")
            sensitive = np.asarray(sensitive, dtype=object).reshape(-1)
            if sensitive.shape[0] != n_rows:
                raise DataError(f"{sensitive.shape[0]} sensitive values for {n_rows} rows")
        if self.role == "main_train" and self.sensitive_name is not None:
            raise RoleError(("metric_train", "test", "unsplit"), self.role, "sensitive column")
        if self.sensitive_name is not None and self.sensitive_name in features.columns:
            raise SchemaError(f"Sensitive column '{self.sensitive_name}' found among features")

        for arr in (labels, row_ids, sensitive):
            if arr is not None:
                arr.setflags(write=False)

        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "row_ids", row_ids)
        object.__setattr__(self, "sensitive", sensitive)

    @property
    def n_rows(self) -> int:
        return len(self.features)

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def feature_names(self) -> Tuple[str, ...]:
        return tuple(str(col) for col in self.features.columns)

    @cached_property
    def X(self) -> np.ndarray:  # pylint: disable=invalid-name
        """Read-only float matrix of the features."""
        non_numeric = [
            col
            for col in self.features.columns
            if not pd.api.types.is_numeric_dtype(self.features[col])
        ]
        if non_numeric:
            raise SchemaError(
                f"Columns {non_numeric} are not numeric, apply a preprocess recipe first"
            )

        matrix = self.features.to_numpy(dtype=np.float64, copy=True)
        matrix.setflags(write=False)
        return matrix

    def checksum(self) -> str:
        """Checksum over features, labels and row ids (never the sensitive column)."""
        return array_checksum(
            np.asarray(self.feature_names, dtype=object),
            self.features.to_numpy(dtype=object),
            self.labels,
            self.row_ids,
        )

    def take(self, positions: Sequence[int], role: str) -> "TabularDataset":
        """Rows at `positions` as a new dataset; `main_train` drops all sensitive data."""
        positions = np.asarray(positions, dtype=np.int64)
        keep_sensitive = role != "main_train" and self.sensitive is not None
        return TabularDataset(
            features=self.features.iloc[positions],
            labels=self.labels[positions],
            role=role,
            sensitive=self.sensitive[positions] if keep_sensitive else None,
            sensitive_name=self.sensitive_name if role != "main_train" else None,
            row_ids=self.row_ids[positions],
            label_name=self.label_name,
        )


def require_role(ds: TabularDataset, roles: Iterable[str], operation: str) -> None:
    roles = tuple(roles)
    if ds.role not in roles:
        raise RoleError(roles, ds.role, operation)


def _parse_labels(raw: pd.Series, label_col: str) -> pd.Series:
    parsed = pd.to_numeric(raw, errors="coerce")
    bad = raw.notna() & ~parsed.isin((0, 1))
    if bad.any():
        row = int(np.flatnonzero(bad.to_numpy())[0])
        raise DataError(f"Label '{label_col}' at row {row} is not 0 or 1: {raw.iloc[row]!r}")

    return parsed


def from_frame(
    frame: pd.DataFrame,
    label_col: str,
    sensitive_col: Optional[str] = None,
    *,
    drop_missing: bool = True,
    role: str = "unsplit",
) -> TabularDataset:
    """Builds a dataset from a data frame, moving the sensitive column out of the features.

    A `row_id` column, when present, becomes the dataset row ids.
    """
    required = [label_col] + ([sensitive_col] if sensitive_col else [])
    missing = [col for col in required if col not in frame.columns]
    if missing:
        raise SchemaError(f"Missing columns {missing}, available: {list(frame.columns)}")
    if frame.empty:
        raise DataError("No data rows")

    frame = frame.reset_index(drop=True)
    labels = _parse_labels(frame[label_col], label_col)

    incomplete = frame.isna().any(axis=1).to_numpy()
    if incomplete.any():
        first = int(np.flatnonzero(incomplete)[0])
        if not drop_missing:
            raise DataError(f"Missing values in {int(incomplete.sum())} rows, first at row {first}")
        log.warning("Dropping %d rows with missing values", int(incomplete.sum()))

    keep = ~incomplete
    if not keep.any():
        raise DataError("No complete rows left after dropping missing values")

    row_ids = frame[ROW_ID].to_numpy() if ROW_ID in frame.columns else np.arange(len(frame))
    drop = [label_col, ROW_ID] + ([sensitive_col] if sensitive_col else [])
    features = frame.drop(columns=[col for col in drop if col in frame.columns])[keep]
    for col in features.columns:
        if pd.api.types.is_numeric_dtype(features[col]):
            values = features[col].to_numpy(dtype=np.float64)
            if not np.isfinite(values).all():
                raise DataError(f"Column '{col}' contains non-finite values")

    return TabularDataset(
        features=features,
        labels=labels[keep].to_numpy(dtype=np.int64),
        role=role,
        sensitive=frame[sensitive_col][keep].astype(str).to_numpy(dtype=object)
        if sensitive_col
        else None,
        sensitive_name=sensitive_col if role != "main_train" else None,
        row_ids=row_ids[keep],
        label_name=label_col,
    )


def load_csv(
    path: Union[str, Path],
    label_col: str,
    sensitive_col: Optional[str] = None,
    *,
    drop_missing: bool = True,
    role: str = "unsplit",
) -> TabularDataset:
    """Reads a UTF-8, comma-delimited CSV with a header row."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"CSV file '{path}' does not exist")

    dtype = {sensitive_col: str} if sensitive_col else None
    try:
        frame = pd.read_csv(path, sep=",", decimal=".", encoding="utf-8", dtype=dtype)
    except pd.errors.EmptyDataError as err:
        raise DataError(f"CSV file '{path}' is empty") from err
    except (pd.errors.ParserError, UnicodeDecodeError) as err:
        raise DataError(f"Can't parse '{path}': {err}") from err

    ds = from_frame(frame, label_col, sensitive_col, drop_missing=drop_missing, role=role)
    log.info("Loaded %d rows and %d features from '%s'", ds.n_rows, ds.n_features, path)
    return ds


def dataset_to_frame(ds: TabularDataset) -> pd.DataFrame:
    """Inverse of :func:`from_frame`; row ids, features, sensitive column, label."""
    frame = ds.features.copy()
    frame.insert(0, ROW_ID, ds.row_ids)
    if ds.sensitive is not None and ds.sensitive_name is not None:
        frame[ds.sensitive_name] = ds.sensitive
    frame[ds.label_name] = ds.labels
    return frame


class SplitSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    # Fractions of the whole dataset. Defaults reproduce 23,145 / 8,501 / 20,942 of 52,588.
    # The metric default is 0.2686 of the training rows: 0.2686 * (1 - 0.39823) = 0.16165.
    metric_fraction: float = Field(0.16165, gt=0, lt=1)
    test_fraction: float = Field(0.39823, gt=0, lt=1)
    # Metric rows as a share of metric + main, replaces metric_fraction when set
    metric_share_of_train: Optional[float] = Field(None, gt=0, lt=1)
    seed: Optional[int] = None
    stratify_on_label: bool = True
    downsample_majority: bool = False

    @model_validator(mode="after")
    def _check_fractions(self) -> "SplitSpec":
        if self.metric_share_of_train is not None:
            self.metric_fraction = self.metric_share_of_train * (1.0 - self.test_fraction)
        if self.metric_fraction + self.test_fraction >= 1:
            raise ValueError("metric_fraction + test_fraction must be below 1")
        return self


def _round_half_up(value: float) -> int:
    return int(math.floor(value + 0.5))


def _allocate(total: int, sizes: np.ndarray, caps: np.ndarray) -> np.ndarray:
    """Splits `total` over strata proportionally to `sizes` by largest remainder."""
    quotas = total * sizes / sizes.sum()
    base = np.floor(quotas).astype(np.int64)
    order = np.argsort(-(quotas - base), kind="stable")
    base[order[: total - int(base.sum())]] += 1
    return np.minimum(base, caps)


def three_way_split(
    ds: TabularDataset, spec: SplitSpec
) -> Tuple[TabularDataset, TabularDataset, TabularDataset]:
    """Splits an unsplit dataset into (metric_train, main_train, test).

    Only metric_train and test keep the sensitive column; main_train never sees it.
    Each part is returned in original row order.
    """
    require_role(ds, ("unsplit",), "three_way_split")
    if ds.sensitive is None:
        raise DataError("three_way_split needs the sensitive column to isolate it")

    n_rows = ds.n_rows
    n_metric = _round_half_up(n_rows * spec.metric_fraction)
    n_test = _round_half_up(n_rows * spec.test_fraction)
    if n_metric + n_test > n_rows:
        raise DataError(f"{n_rows} rows can't hold {n_metric} metric and {n_test} test rows")

    rng = np.random.default_rng(spec.seed or 0)
    if spec.stratify_on_label:
        strata = [np.flatnonzero(ds.labels == label) for label in (0, 1)]
        strata = [stratum for stratum in strata if stratum.size]
    else:
        strata = [np.arange(n_rows)]

    sizes = np.array([stratum.size for stratum in strata], dtype=np.float64)
    counts = sizes.astype(np.int64)
    metric_counts = _allocate(n_metric, sizes, counts)
    test_counts = _allocate(n_test, sizes, counts - metric_counts)

    metric: List[np.ndarray] = []
    test: List[np.ndarray] = []
    main: List[np.ndarray] = []
    for stratum, n_m, n_t in zip(strata, metric_counts, test_counts):
        perm = rng.permutation(stratum)
        metric.append(perm[:n_m])
        test.append(perm[n_m : n_m + n_t])
        main.append(perm[n_m + n_t :])

    metric_pos = np.sort(np.concatenate(metric))
    test_pos = np.sort(np.concatenate(test))
    main_pos = np.sort(np.concatenate(main))

    if spec.downsample_majority:
        main_pos = _downsample(main_pos, ds.labels, rng)

    parts = (
        ds.take(metric_pos, "metric_train"),
        ds.take(main_pos, "main_train"),
        ds.take(test_pos, "test"),
    )
    log.info(
        "Split %d rows into %d metric / %d main / %d test",
        n_rows,
        *(part.n_rows for part in parts),
    )
    return parts


def _downsample(positions: np.ndarray, labels: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    pos = positions[labels[positions] == 1]
    neg = positions[labels[positions] == 0]
    if pos.size == 0 or neg.size == 0 or pos.size == neg.size:
        return positions

    minority, majority = (pos, neg) if pos.size < neg.size else (neg, pos)
    kept = rng.choice(majority, size=minority.size, replace=False)
    log.info("Downsampled main_train majority class from %d to %d rows", majority.size, kept.size)
    return np.sort(np.concatenate([minority, kept]))


class SplitManifest(BaseModel):
    """Record of a split, enough to rebuild it and to audit row isolation."""

    model_config = ConfigDict(extra="forbid")

    seed: int
    metric_fraction: float
    test_fraction: float
    stratify_on_label: bool
    downsample_majority: bool
    n_rows: int
    source_checksum: str
    indices: Dict[str, List[int]]
    dropped: List[int] = []

    def index_set(self, role: str) -> np.ndarray:
        return np.asarray(self.indices.get(role, []), dtype=np.int64)

    def check_isolation(self) -> None:
        """Raises :class:`IsolationError` unless the role index sets are pairwise disjoint."""
        check_index_sets(self.indices)

    def to_doc(self) -> Dict[str, Any]:
        return dict(seal(self.model_dump()))

    @classmethod
    def from_doc(cls, doc: Dict[str, Any]) -> "SplitManifest":
        # Isolation first, a tampered manifest with overlapping rows is an isolation failure
        check_index_sets(doc.get("indices", {}))
        return cls.model_validate(unseal(doc, what="split manifest"))


def check_index_sets(indices: Dict[str, Iterable[int]]) -> None:
    roles = sorted(indices)
    for i, first in enumerate(roles):
        for second in roles[i + 1 :]:
            shared = np.intersect1d(
                np.asarray(list(indices[first]), dtype=np.int64),
                np.asarray(list(indices[second]), dtype=np.int64),
            )
            if shared.size:
                raise IsolationError(
                    f"Rows shared between '{first}' and '{second}': {shared[:10].tolist()}"
                    + (" ..." if shared.size > 10 else "")
                )


def build_manifest(
    source: TabularDataset,
    spec: SplitSpec,
    parts: Tuple[TabularDataset, TabularDataset, TabularDataset],
) -> SplitManifest:
    indices = {part.role: part.row_ids.tolist() for part in parts}
    used = np.concatenate([part.row_ids for part in parts])
    return SplitManifest(
        seed=spec.seed or 0,
        metric_fraction=spec.metric_fraction,
        test_fraction=spec.test_fraction,
        stratify_on_label=spec.stratify_on_label,
        downsample_majority=spec.downsample_majority,
        n_rows=source.n_rows,
        source_checksum=source.checksum(),
        indices=indices,
        dropped=np.setdiff1d(source.row_ids, used).tolist(),
    )


class ColumnTransform(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: str
    kind: Literal["standardize", "one_hot", "passthrough"]
    mean: Optional[float] = None
    std: Optional[float] = None
    categories: List[str] = []

    @property
    def output_names(self) -> List[str]:
        if self.kind == "one_hot":
            return [f"{self.name}={category}" for category in self.categories]
        return [self.name]


class PreprocessRecipe(BaseModel):
    """Per-column transforms fitted on a training split.

    Applying a recipe is not idempotent: standardized columns are shifted and scaled again
    and one-hot columns no longer match their categories. Only passthrough columns survive
    a second application unchanged.
    """

    model_config = ConfigDict(extra="forbid")

    columns: List[ColumnTransform]
    fitted_on: str
    notes: List[str] = []

    @property
    def input_names(self) -> List[str]:
        return [col.name for col in self.columns]

    @property
    def output_names(self) -> List[str]:
        return [name for col in self.columns for name in col.output_names]

    def to_doc(self) -> Dict[str, Any]:
        return dict(seal(self.model_dump()))

    @classmethod
    def from_doc(cls, doc: Dict[str, Any]) -> "PreprocessRecipe":
        return cls.model_validate(unseal(doc, what="preprocess recipe"))


def _note(notes: List[str], message: str) -> None:
    notes.append(message)
    log.warning(message)
    warnings.warn(message, PreprocessWarning, stacklevel=3)


def fit_preprocess(
    ds: TabularDataset,
    *,
    categorical: Optional[Iterable[str]] = None,
    passthrough: Iterable[str] = (),
) -> PreprocessRecipe:
    """Fits standardization and one-hot statistics on a training split.

    Non-numeric columns and the ones named in `categorical` are one-hot encoded, the rest
    are standardized with the population standard deviation. Constant columns fall back to
    passthrough.
    """
    require_role(ds, ("metric_train", "main_train"), "fit_preprocess")
    categorical = set(categorical or ())
    passthrough = set(passthrough)
    unknown = (categorical | passthrough) - set(ds.feature_names)
    if unknown:
        raise SchemaError(f"Preprocess options name unknown columns {sorted(unknown)}")

    notes: List[str] = []
    columns: List[ColumnTransform] = []
    for name in ds.feature_names:
        series = ds.features[name]
        if name in passthrough:
            columns.append(ColumnTransform(name=name, kind="passthrough"))
        elif name in categorical or not pd.api.types.is_numeric_dtype(series):
            categories = sorted(series.astype(str).unique().tolist())
            columns.append(ColumnTransform(name=name, kind="one_hot", categories=categories))
        else:
            values = series.to_numpy(dtype=np.float64)
            mean = float(values.mean())
            std = float(values.std())
            if std == 0.0 or not math.isfinite(std):
                _note(notes, f"Column '{name}' is constant, kept as passthrough")
                columns.append(ColumnTransform(name=name, kind="passthrough"))
            else:
                columns.append(ColumnTransform(name=name, kind="standardize", mean=mean, std=std))

    return PreprocessRecipe(columns=columns, fitted_on=ds.role, notes=notes)


def apply_preprocess(recipe: PreprocessRecipe, ds: TabularDataset) -> TabularDataset:
    """Transforms any split with a fitted recipe; unseen categories encode as all zeros."""
    missing = [name for name in recipe.input_names if name not in ds.features.columns]
    if missing:
        raise SchemaError(f"Dataset lacks recipe columns {missing}")

    out: Dict[str, np.ndarray] = {}
    notes: List[str] = []
    for col in recipe.columns:
        series = ds.features[col.name]
        if col.kind == "one_hot":
            text = series.astype(str).to_numpy()
            unseen = ~np.isin(text, col.categories)
            if unseen.any():
                _note(
                    notes,
                    f"Column '{col.name}' has {int(unseen.sum())} rows with unseen categories, "
                    "encoded as all zeros",
                )
            for category, out_name in zip(col.categories, col.output_names):
                out[out_name] = (text == category).astype(np.float64)
            continue

        if not pd.api.types.is_numeric_dtype(series):
            raise SchemaError(f"Column '{col.name}' is not numeric but recipe says {col.kind}")
        values = series.to_numpy(dtype=np.float64)
        if col.kind == "standardize":
            values = (values - col.mean) / col.std
        out[col.name] = values

    frame = pd.DataFrame(out, columns=recipe.output_names)
    if not np.isfinite(frame.to_numpy(dtype=np.float64)).all():
        raise DataError("Preprocessing produced non-finite values")

    return dataclasses.replace(ds, features=frame)


def make_synthetic_credit(
    n_rows: int = 5000, seed: int = 0, *, spurious_strength: float = 1.5
) -> pd.DataFrame:
    """Credit-like table with a gender column and a feature that mostly encodes gender.

    `proxy_score` carries no signal about repayment beyond gender, while the historical
    default labels are shifted by gender, so a plain classifier learns to lean on it.
    """
    rng = np.random.default_rng(seed)
    male = rng.random(n_rows) < 0.5
    sign = np.where(male, 1.0, -1.0)

    income = rng.lognormal(mean=10.5, sigma=0.5, size=n_rows)
    debt_ratio = rng.beta(2.0, 5.0, size=n_rows)
    history = rng.gamma(shape=3.0, scale=3.0, size=n_rows)
    open_accounts = rng.poisson(4.0, size=n_rows)
    employment = rng.choice(
        ["salaried", "self_employed", "unemployed"], p=[0.7, 0.2, 0.1], size=n_rows
    )
    proxy = spurious_strength * sign + 0.5 * rng.normal(size=n_rows)

    logit = (
        -0.4
        + 4.0 * (debt_ratio - 0.28)
        - 1.2 * (np.log(income) - 10.5)
        - 0.08 * (history - 9.0)
        + 0.05 * (open_accounts - 4)
        + np.select([employment == "unemployed", employment == "self_employed"], [1.0, 0.3], 0.0)
        + 0.6 * sign
    )
    default = (rng.random(n_rows) < 1.0 / (1.0 + np.exp(-logit))).astype(np.int64)

    return pd.DataFrame(
        {
            "gender": np.where(male, "M", "F"),
            "income": np.round(income, 2),
            "debt_ratio": np.round(debt_ratio, 4),
            "credit_history_years": np.round(history, 2),
            "open_accounts": open_accounts,
            "employment": employment,
            "proxy_score": np.round(proxy, 4),
            "default": default,
        }
    )
