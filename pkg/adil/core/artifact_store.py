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
from typing import TYPE_CHECKING, Any, Dict, Iterable, List, Mapping, Sequence, Tuple

import numpy as np
import pandas as pd

from adil import dataset
from adil.command import Context
from adil.error import ArtifactExistsError, IntegrityError, IsolationError, MissingArtifactError
from adil.fair_metric import FairMetric, metric_from_doc
from adil.models.io import Model, ModelMeta, model_from_doc
from adil.util.misc import CHECKSUM_KEY, atomic_write, canonical_json

from .adil_mixin_base import MixinBase

if TYPE_CHECKING:
    from .adil_pipeline import Adil

# Relative artifact layout under the output directory
MANIFEST = "split/manifest.json"
RECIPE = "split/recipe.json"
SPLIT_FILES = {role: f"split/{role}.csv" for role in dataset.SPLIT_ROLES}
METRIC = "metric/metric.json"
METRIC_REPORT = "metric/report.json"
MODEL_DIR = "models"
REPORT = "report/report.json"


def model_file(method: str) -> str:
    return f"{MODEL_DIR}/{method}.json"


def model_log_file(method: str) -> str:
    return f"{MODEL_DIR}/{method}.log.jsonl"


class ArtifactStore(MixinBase):
    """Reads and writes the pipeline artifacts under a context's output directory.

    Every write goes through a temporary file and a rename. Nothing is overwritten
    unless the command runs with --force.
    """

    def artifact(self: "Adil", ctx: Context, relative: str) -> Path:
        return ctx.output / relative

    def claim(self: "Adil", ctx: Context, relatives: Iterable[str]) -> List[Path]:
        """Paths a command is about to write, refusing existing ones without --force."""
        paths = [self.artifact(ctx, rel) for rel in relatives]
        if not ctx.force:
            for path in paths:
                if path.exists():
                    raise ArtifactExistsError(path)
        return paths

    def write_json(self: "Adil", path: Path, doc: Any) -> None:
        atomic_write(path, canonical_json(doc))
        self.log.debug("Wrote %s", path)

    def write_lines(self: "Adil", path: Path, records: Sequence[Mapping[str, Any]]) -> None:
        lines = [json.dumps(rec, sort_keys=True, allow_nan=False) for rec in records]
        atomic_write(path, "".join(line + "\n" for line in lines))
        self.log.debug("Wrote %s", path)

    def write_frame(self: "Adil", path: Path, frame: pd.DataFrame) -> None:
        atomic_write(path, frame.to_csv(index=False, lineterminator="\n"))
        self.log.debug("Wrote %s (%d rows)", path, len(frame))

    def read_json(self: "Adil", ctx: Context, relative: str, what: str) -> Dict[str, Any]:
        path = self.artifact(ctx, relative)
        if not path.is_file():
            raise MissingArtifactError(f"{what} '{path}' not found, run the earlier stage first")
        try:
            return json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as err:
            raise IntegrityError(f"{what} '{path}' is corrupt: {err}") from err

    def load_manifest(self: "Adil", ctx: Context) -> Tuple[dataset.SplitManifest, str]:
        """The split manifest and its checksum. Overlapping index sets raise IsolationError."""
        doc = self.read_json(ctx, MANIFEST, "Split manifest")
        return dataset.SplitManifest.from_doc(doc), str(doc.get(CHECKSUM_KEY))

    def load_recipe(self: "Adil", ctx: Context) -> Tuple[dataset.PreprocessRecipe, str]:
        doc = self.read_json(ctx, RECIPE, "Preprocess recipe")
        return dataset.PreprocessRecipe.from_doc(doc), str(doc.get(CHECKSUM_KEY))

    def load_split(
        self: "Adil", ctx: Context, role: str, manifest: dataset.SplitManifest
    ) -> dataset.TabularDataset:
        """A split file, preprocessed with the stored recipe, checked against the manifest."""
        path = self.artifact(ctx, SPLIT_FILES[role])
        if not path.is_file():
            raise MissingArtifactError(f"Split file '{path}' not found, run 'split' first")

        data = ctx.config.data
        sensitive = None if role == "main_train" else (data.sensitive_column if data else None)
        raw = dataset.load_csv(
            path, data.label_column if data else "default", sensitive, role=role
        )
        if not np.array_equal(np.sort(raw.row_ids), np.sort(manifest.index_set(role))):
            raise IntegrityError(f"Rows of '{path}' differ from the manifest's {role} index set")

        recipe, _ = self.load_recipe(ctx)
        return dataset.apply_preprocess(recipe, raw)

    def load_fair_metric(self: "Adil", ctx: Context) -> Tuple[FairMetric, str]:
        doc = self.read_json(ctx, METRIC, "Fair metric")
        return metric_from_doc(doc), str(doc.get(CHECKSUM_KEY))

    def load_model_file(self: "Adil", path: Path) -> Tuple[Model, ModelMeta]:
        if not path.is_file():
            raise MissingArtifactError(f"Model '{path}' not found, run 'train' first")
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as err:
            raise IntegrityError(f"Model '{path}' is corrupt: {err}") from err
        return model_from_doc(doc)

    def verify_isolation(
        self: "Adil", manifest: dataset.SplitManifest, metric: FairMetric, train_rows: np.ndarray
    ) -> None:
        """The metric must come from the manifest's metric split and share no training row."""
        if metric.fitted_rows is None:
            raise IsolationError("The fair metric records no fitted rows, isolation can't be verified")

        fitted = np.sort(metric.fitted_rows)
        if not np.array_equal(fitted, np.sort(manifest.index_set("metric_train"))):
            raise IsolationError("The fair metric was not fitted on the manifest's metric split")

        shared = np.intersect1d(fitted, train_rows)
        if shared.size:
            raise IsolationError(
                f"The fair metric was fitted on {shared.size} training rows, "
                f"first {shared[:5].tolist()}"
            )
