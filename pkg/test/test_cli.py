#!/usr/bin/env python
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

import numpy as np
import pytest

from adil.core import Adil
from adil.models import load_model

from . import write_config

SMALL_RUN = {
    "seed": 3,
    "data": {"csv": "credit.csv"},
    "metric": {"pair_budget": 2000},
    "baseline_nn": {"epochs": 2, "hidden_layers": [8], "batch_size": 64},
    "sensr": {"epochs": 2, "hidden_layers": [8], "batch_size": 64, "adversary_steps": 3},
    "baseline_gbt": {"rounds": 3},
    "ifgb": {"rounds": 3, "candidate_cap": 10},
    "audit": {"n_epsilons": 4, "pair_budget": 5000},
}


def run(*argv: str) -> int:
    return Adil().dispatch(list(argv))


def workspace(directory: Path, **sections) -> Path:
    """Synthetic CSV plus a small config next to it, returns the config path."""
    assert run("synth", "--rows", "400", "--seed", "1", "--out", str(directory / "credit.csv")) == 0
    return write_config(directory, {**SMALL_RUN, **sections})


def snapshot(output: Path) -> dict:
    return {
        str(path.relative_to(output)): path.read_bytes()
        for path in sorted(output.rglob("*"))
        if path.is_file() and path.name != "metrics.prom"
    }


@pytest.fixture(scope="module")
def full_run(tmp_path_factory):
    directory = tmp_path_factory.mktemp("full")
    config = workspace(directory, ifgb={"rounds": 3, "candidate_cap": 10, "epsilon_lp": 0.0})
    output = directory / "out"
    code = run("run", "--config", str(config), "--output", str(output))
    return config, output, code


class TestFullRun:
    def test_every_artifact_is_written(self, full_run):
        _, output, code = full_run
        assert code == 0
        for relative in (
            "split/manifest.json",
            "split/recipe.json",
            "split/metric_train.csv",
            "split/main_train.csv",
            "split/test.csv",
            "metric/metric.json",
            "metric/report.json",
            "report/report.json",
            "metrics.prom",
        ):
            assert (output / relative).is_file(), relative
        for method in ("baseline-nn", "sensr", "baseline-gbt", "ifgb"):
            assert (output / "models" / f"{method}.json").is_file()
            assert (output / "report" / f"roc_{method}.csv").is_file()

    def test_main_split_has_no_sensitive_column(self, full_run):
        _, output, _ = full_run
        header = (output / "split" / "main_train.csv").read_text().splitlines()[0].split(",")
        assert "gender" not in header
        assert "gender" in (output / "split" / "test.csv").read_text().splitlines()[0]

    def test_report_compares_both_pairs(self, full_run):
        _, output, _ = full_run
        report = json.loads((output / "report" / "report.json").read_text())
        assert sorted(report["models"]) == ["baseline-gbt", "baseline-nn", "ifgb", "sensr"]
        assert [(t["baseline"], t["fair"]) for t in report["tradeoffs"]] == [
            ("baseline-nn", "sensr"),
            ("baseline-gbt", "ifgb"),
        ]
        assert len(report["epsilons"]) == 4

    def test_zero_budget_ifgb_equals_plain_boosting(self, full_run):
        _, output, _ = full_run
        plain, _ = load_model(output / "models" / "baseline-gbt.json")
        fair, meta = load_model(output / "models" / "ifgb.json")
        assert meta.provenance["metric_checksum"]
        X = np.random.default_rng(0).normal(size=(50, len(plain.feature_names)))
        assert np.array_equal(plain.margin(X), fair.margin(X))

    def test_rerun_is_byte_identical(self, full_run, tmp_path):
        config, output, _ = full_run
        again = tmp_path / "again"
        assert run("run", "--config", str(config), "--output", str(again)) == 0
        assert snapshot(again) == snapshot(output)

    def test_refuses_to_overwrite(self, full_run):
        config, output, _ = full_run
        before = (output / "split" / "manifest.json").read_bytes()
        assert run("split", "--config", str(config), "--output", str(output)) == 2
        assert (output / "split" / "manifest.json").read_bytes() == before


class TestStages:
    def test_sensr_needs_a_metric(self, tmp_path):
        flags = ["--config", str(workspace(tmp_path)), "--output", str(tmp_path / "out")]
        assert run("split", *flags) == 0
        assert run("train", "--method", "sensr", *flags) == 2
        assert run("train", "--method", "baseline-nn", *flags) == 0

    def test_overlapping_manifest_is_an_isolation_failure(self, tmp_path):
        config = workspace(tmp_path)
        output = tmp_path / "out"
        assert run("split", "--config", str(config), "--output", str(output)) == 0

        manifest = output / "split" / "manifest.json"
        doc = json.loads(manifest.read_text())
        doc["indices"]["main_train"].append(doc["indices"]["metric_train"][0])
        manifest.write_text(json.dumps(doc))

        code = run("learn-metric", "--config", str(config), "--output", str(output))
        assert code == 4

    def test_tampered_metric_is_rejected(self, tmp_path):
        config = workspace(tmp_path)
        output = tmp_path / "out"
        for step in (["split"], ["learn-metric"]):
            assert run(*step, "--config", str(config), "--output", str(output)) == 0

        metric = output / "metric" / "metric.json"
        doc = json.loads(metric.read_text())
        doc["epsilon_default"] = 0.5
        metric.write_text(json.dumps(doc))
        code = run("train", "--method", "ifgb", "--config", str(config), "--output", str(output))
        assert code == 3

    def test_missing_config(self, tmp_path):
        assert run("split", "--config", str(tmp_path / "none.json")) == 2

    def test_unknown_method(self, tmp_path):
        with pytest.raises(SystemExit):
            run("train", "--method", "svm", "--config", str(tmp_path / "adil.json"))

    def test_seed_flag_changes_the_split(self, tmp_path):
        config = workspace(tmp_path)
        first, second = tmp_path / "a", tmp_path / "b"
        assert run("split", "--config", str(config), "--output", str(first)) == 0
        assert run("split", "--config", str(config), "--output", str(second), "--seed", "8") == 0
        assert (first / "split" / "manifest.json").read_bytes() != (
            second / "split" / "manifest.json"
        ).read_bytes()
