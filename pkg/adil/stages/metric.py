"""Fair metric learning stage"""
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

from adil.command import Context
from adil.core.artifact_store import METRIC, METRIC_REPORT
from adil.error import AdilWarning
from adil.fair_metric import learn_sensitive_subspace, metric_to_doc
from adil.stage import Stage
from adil.util.misc import CHECKSUM_KEY, seal


class Metric(Stage):
    name = "Metric"

    def cmd_learn_metric(self, ctx: Context) -> None:
        """Learn the fair metric from the metric split."""
        cfg = ctx.config
        metric_path, report_path = self.pipeline.claim(ctx, [METRIC, METRIC_REPORT])
        manifest, manifest_checksum = self.pipeline.load_manifest(ctx)
        metric_split = self.pipeline.load_split(ctx, "metric_train", manifest)

        opts = cfg.metric
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            metric, report = learn_sensitive_subspace(
                metric_split,
                opts.k_extra,
                seed=opts.seed if opts.seed is not None else cfg.seed,
                l2_penalty=opts.l2_penalty,
                max_iter=opts.max_iter,
                holdout_fraction=opts.holdout_fraction,
                epsilon_percentile=opts.epsilon_percentile,
                pair_budget=opts.pair_budget,
            )

        notices = sorted({str(w.message) for w in caught if issubclass(w.category, AdilWarning)})
        metric_doc = metric_to_doc(metric)
        self.pipeline.write_json(metric_path, metric_doc)
        self.pipeline.write_json(
            report_path,
            seal(
                {
                    "fit": report.model_dump(),
                    "metric_checksum": metric_doc[CHECKSUM_KEY],
                    "manifest_checksum": manifest_checksum,
                    "feature_names": list(metric.feature_names),
                    "warnings": notices,
                }
            ),
        )
        self.log.info(
            "Fair metric: dimension %d, held-out sensitive accuracy %.4f",
            report.dimension,
            report.heldout_accuracy,
        )
