"""Classifier training stage"""
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

import warnings
from typing import Any, Dict, List

import numpy as np
from pydantic import BaseModel

from adil.command import Context, arg, arguments
from adil.core.artifact_store import METRIC, model_file, model_log_file
from adil.core.metrics import TrainingSteps
from adil.error import AdilWarning, MissingArtifactError
from adil.ifgb import train_ifgb
from adil.models import ModelMeta, model_to_doc, train_boosted, train_smooth
from adil.sensr import train_sensr
from adil.stage import Stage
from adil.util.config import METHODS
from adil.util.misc import array_checksum

# Methods trained against the fair metric
FAIR_METHODS = ("sensr", "ifgb")


class Train(Stage):
    name = "Train"

    @arguments(
        arg("--method", required=True, choices=list(METHODS), help="classifier to train"),
    )
    def cmd_train(self, ctx: Context) -> None:
        """Train one classifier on the main split."""
        method: str = ctx.args.method
        cfg = ctx.config.train_config(method)
        model_path, log_path = self.pipeline.claim(
            ctx, [model_file(method), model_log_file(method)]
        )

        manifest, manifest_checksum = self.pipeline.load_manifest(ctx)
        main = self.pipeline.load_split(ctx, "main_train", manifest)
        provenance: Dict[str, Any] = {
            "manifest_checksum": manifest_checksum,
            "train_checksum": main.checksum(),
            "train_rows": main.n_rows,
            "train_rows_checksum": array_checksum(np.sort(main.row_ids)),
        }

        metric = None
        if method in FAIR_METHODS:
            if not self.pipeline.artifact(ctx, METRIC).is_file():
                raise MissingArtifactError(
                    f"Method '{method}' requires a fair metric, run 'learn-metric' first"
                )
            metric, metric_checksum = self.pipeline.load_fair_metric(ctx)
            self.pipeline.verify_isolation(manifest, metric, main.row_ids)
            provenance["metric_checksum"] = metric_checksum
            provenance["metric_rows_checksum"] = array_checksum(np.sort(metric.fitted_rows))

        records: List[Dict[str, Any]] = []

        def record(stats: BaseModel) -> None:
            records.append(stats.model_dump(by_alias=True))
            TrainingSteps.labels(method=method).inc()

        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", AdilWarning)
            if method == "baseline-nn":
                model = train_smooth(main, cfg, on_epoch=record)
            elif method == "sensr":
                model = train_sensr(main, metric, cfg, on_epoch=record)
            elif method == "baseline-gbt":
                model = train_boosted(main, cfg, on_round=record)
            else:
                model = train_ifgb(main, metric, cfg, on_round=record)

        for item in caught:
            if issubclass(item.category, AdilWarning):
                records.append({"warning": str(item.message)})

        meta = ModelMeta(method=method, config=cfg.model_dump(mode="json"), provenance=provenance)
        self.pipeline.write_json(model_path, model_to_doc(model, meta))
        self.pipeline.write_lines(log_path, records)
        self.log.info("Trained '%s' on %d rows", method, main.n_rows)
