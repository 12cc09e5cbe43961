"""Fairness audit stage"""
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

from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from adil import dataset
from adil.command import Context, arg, arguments
from adil.core.artifact_store import REPORT, model_file
from adil.core.metrics import AuditPairs
from adil.error import IntegrityError, MissingArtifactError, SchemaError
from adil.fair_metric import FairMetric
from adil.fairness_eval import (
    ModelAudit,
    audit_model,
    default_epsilon_grid,
    roc_points,
    tradeoff_summary,
)
from adil.models import ModelMeta
from adil.stage import Stage
from adil.util.config import METHODS
from adil.util.misc import array_checksum, seal

# (baseline, fair) pairs compared in the trade-off section
TRADEOFF_PAIRS = (("baseline-nn", "sensr"), ("baseline-gbt", "ifgb"))


class Evaluate(Stage):
    name = "Evaluate"

    def _resolve_models(self, ctx: Context, requested: Optional[Sequence[str]]) -> List[Path]:
        if requested:
            return [
                self.pipeline.artifact(ctx, model_file(item)) if item in METHODS else Path(item)
                for item in requested
            ]

        found = [self.pipeline.artifact(ctx, model_file(method)) for method in METHODS]
        found = [path for path in found if path.is_file()]
        if not found:
            raise MissingArtifactError("No trained models found, run 'train' first")
        return found

    def _verify_provenance(
        self,
        path: Path,
        meta: ModelMeta,
        manifest: Tuple[dataset.SplitManifest, str],
        metric: Tuple[FairMetric, str],
    ) -> None:
        split, split_checksum = manifest
        prov = meta.provenance
        if prov.get("manifest_checksum") != split_checksum:
            raise IntegrityError(f"Model '{path}' was trained on a different split")
        main_rows = np.sort(split.index_set("main_train"))
        if prov.get("train_rows_checksum") != array_checksum(main_rows):
            raise IntegrityError(f"Training rows of '{path}' differ from the manifest")

        if "metric_checksum" in prov:
            fair_metric, metric_checksum = metric
            if prov["metric_checksum"] != metric_checksum:
                raise IntegrityError(f"Model '{path}' was trained against a different fair metric")
            self.pipeline.verify_isolation(split, fair_metric, main_rows)

    @arguments(
        arg(
            "--models",
            nargs="*",
            metavar="MODEL",
            default=None,
            help="method names or model files, default every trained method",
        ),
    )
    def cmd_evaluate(self, ctx: Context) -> None:
        """Audit trained models on the test split."""
        opts = ctx.config.audit
        paths = self._resolve_models(ctx, getattr(ctx.args, "models", None))
        names = [path.stem for path in paths]
        if len(set(names)) != len(names):
            raise SchemaError(f"Model names collide: {names}")
        claimed = self.pipeline.claim(
            ctx,
            [REPORT]
            + [f"report/roc_{name}.csv" for name in names]
            + [f"report/ifm_{name}.csv" for name in names],
        )
        report_path = claimed[0]
        roc_paths = claimed[1 : 1 + len(names)]
        ifm_paths = claimed[1 + len(names) :]

        manifest = self.pipeline.load_manifest(ctx)
        test = self.pipeline.load_split(ctx, "test", manifest[0])
        metric = self.pipeline.load_fair_metric(ctx)
        fair_metric = metric[0]
        fair_metric.check_features(test.feature_names)

        epsilons = opts.epsilons or default_epsilon_grid(
            fair_metric,
            test,
            opts.n_epsilons,
            pair_budget=opts.pair_budget or 200_000,
            seed=opts.seed or 0,
        )

        audits: Dict[str, ModelAudit] = {}
        for path, name, roc_path, ifm_path in zip(paths, names, roc_paths, ifm_paths):
            model, meta = self.pipeline.load_model_file(path)
            if tuple(model.feature_names) != test.feature_names:
                raise SchemaError(
                    f"Model '{path}' expects features {list(model.feature_names)}, "
                    f"test split has {list(test.feature_names)}"
                )
            self._verify_provenance(path, meta, manifest, metric)

            audit = audit_model(
                model,
                fair_metric,
                test,
                method=meta.method,
                epsilons=epsilons,
                threshold=opts.threshold,
                reference_group=opts.reference_group,
                lipschitz_constant=opts.lipschitz_constant,
                pair_budget=opts.pair_budget,
                seed=opts.seed or 0,
                provenance=meta.provenance,
            )
            audits[name] = audit
            AuditPairs.labels(audit="ifm").inc(audit.ifm.sampling.count)
            AuditPairs.labels(audit="lipschitz").inc(audit.lipschitz.pairs)

            roc = roc_points(model, test, opts.roc_thresholds)
            self.pipeline.write_frame(roc_path, pd.DataFrame(roc, columns=["fpr", "tpr"]))
            self.pipeline.write_frame(
                ifm_path,
                pd.DataFrame(
                    {
                        "epsilon": audit.ifm.epsilons,
                        "ifm": audit.ifm.values,
                        "similar_pairs": audit.ifm.similar_pairs,
                        "agreeing_pairs": audit.ifm.agreeing_pairs,
                    }
                ),
            )
            self.log.info(
                "%s: AUC %s, accuracy %s, Lipschitz violations %.4f",
                name,
                _fmt(audit.auc),
                _fmt(audit.groups.overall.accuracy),
                audit.lipschitz.violation_rate,
            )

        by_method = {audit.method: audit for audit in audits.values()}
        tradeoffs = [
            tradeoff_summary(by_method[base], by_method[fair]).model_dump()
            for base, fair in TRADEOFF_PAIRS
            if base in by_method and fair in by_method
        ]
        report: Dict[str, Any] = {
            "test_checksum": test.checksum(),
            "manifest_checksum": manifest[1],
            "metric_checksum": metric[1],
            "epsilons": list(epsilons),
            "models": {name: audit.model_dump(mode="json") for name, audit in audits.items()},
            "tradeoffs": tradeoffs,
        }
        self.pipeline.write_json(report_path, seal(report))


def _fmt(value: Optional[float]) -> str:
    return "n/a" if value is None else f"{value:.4f}"
