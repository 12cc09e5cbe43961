"""Dataset splitting and synthetic data stage"""
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

from adil import dataset
from adil.command import Context, arg, arguments
from adil.core.artifact_store import MANIFEST, RECIPE, SPLIT_FILES
from adil.core.metrics import SplitRows
from adil.error import ArtifactExistsError, ConfigError
from adil.stage import Stage
from adil.util.config import default_output_dir


class Split(Stage):
    name = "Split"

    def cmd_split(self, ctx: Context) -> None:
        """Split the data CSV into metric, main-train and test sets."""
        cfg = ctx.config
        if cfg.data is None:
            raise ConfigError("The config has no 'data' section")

        manifest_path, recipe_path, *split_paths = self.pipeline.claim(
            ctx, [MANIFEST, RECIPE] + [SPLIT_FILES[role] for role in dataset.SPLIT_ROLES]
        )
        source = dataset.load_csv(
            cfg.data.csv,
            cfg.data.label_column,
            cfg.data.sensitive_column,
            drop_missing=cfg.data.drop_missing,
        )
        parts = dataset.three_way_split(source, cfg.split)
        manifest = dataset.build_manifest(source, cfg.split, parts)
        manifest.check_isolation()

        main = parts[1]
        recipe = dataset.fit_preprocess(
            main, categorical=cfg.preprocess.categorical, passthrough=cfg.preprocess.passthrough
        )

        for part, path in zip(parts, split_paths):
            self.pipeline.write_frame(path, dataset.dataset_to_frame(part))
            SplitRows.labels(role=part.role).set(part.n_rows)
        self.pipeline.write_json(recipe_path, recipe.to_doc())
        self.pipeline.write_json(manifest_path, manifest.to_doc())

        self.log.info(
            "Split %d rows into %s",
            source.n_rows,
            ", ".join(f"{part.role}={part.n_rows}" for part in parts),
        )

    @arguments(
        arg("--rows", type=int, default=5000, help="number of rows"),
        arg("--out", metavar="PATH", default=None, help="CSV path, default <output>/synthetic.csv"),
        arg("--spurious-strength", type=float, default=1.5, help="gender signal of proxy_score"),
    )
    def cmd_synth(self, ctx: Context) -> None:
        """Write a synthetic credit-like CSV with a planted gender proxy feature."""
        if ctx.args.rows < 1:
            raise ConfigError("--rows must be positive")

        # Needs no config file
        out_dir = Path(getattr(ctx.args, "output", None) or default_output_dir())
        out = Path(ctx.args.out) if ctx.args.out else out_dir / "synthetic.csv"
        if out.exists() and not ctx.force:
            raise ArtifactExistsError(out)

        seed = getattr(ctx.args, "seed", None)
        frame = dataset.make_synthetic_credit(
            ctx.args.rows, 0 if seed is None else seed, spurious_strength=ctx.args.spurious_strength
        )
        self.pipeline.write_frame(out, frame)
        self.log.info("Wrote %d synthetic rows to '%s'", len(frame), out)
