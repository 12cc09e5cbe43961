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

import numpy as np
import pandas as pd
import pytest

from adil import dataset
from adil.error import (
    DataError,
    IntegrityError,
    IsolationError,
    PreprocessWarning,
    RoleError,
    SchemaError,
)

from . import toy_dataset


def credit_frame(n_rows: int = 10, seed: int = 0) -> pd.DataFrame:
    rng = np.random.default_rng(seed)
    return pd.DataFrame(
        {
            "gender": np.where(np.arange(n_rows) % 2 == 0, "M", "F"),
            "income": rng.normal(50.0, 10.0, size=n_rows),
            "employment": np.where(np.arange(n_rows) % 3 == 0, "salaried", "self_employed"),
            "default": np.arange(n_rows) % 2,
        }
    )


class TestIngestion:
    def test_sensitive_column_is_kept_apart(self):
        ds = dataset.from_frame(credit_frame(), "default", "gender")
        assert "gender" not in ds.feature_names
        assert ds.feature_names == ("income", "employment")
        assert ds.sensitive.tolist()[:2] == ["M", "F"]
        assert ds.labels.tolist() == [0, 1] * 5

    def test_missing_label_column(self):
        with pytest.raises(SchemaError):
            dataset.from_frame(credit_frame(), "target", "gender")

    def test_missing_values_dropped_or_rejected(self):
        frame = credit_frame()
        frame.loc[3, "income"] = np.nan
        ds = dataset.from_frame(frame, "default", "gender")
        assert ds.n_rows == 9
        assert 3 not in ds.row_ids.tolist()

        with pytest.raises(DataError):
            dataset.from_frame(frame, "default", "gender", drop_missing=False)

    def test_non_binary_label(self):
        frame = credit_frame()
        frame.loc[4, "default"] = 2
        with pytest.raises(DataError, match="row 4"):
            dataset.from_frame(frame, "default", "gender")

    def test_load_csv(self, tmp_path):
        path = tmp_path / "credit.csv"
        credit_frame().to_csv(path, index=False)
        ds = dataset.load_csv(path, "default", "gender")
        assert ds.n_rows == 10
        assert ds.role == "unsplit"

    def test_load_empty_csv(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("", encoding="utf-8")
        with pytest.raises(DataError):
            dataset.load_csv(path, "default", "gender")

    def test_main_train_never_holds_sensitive_data(self):
        with pytest.raises(RoleError):
            toy_dataset([[0.0], [1.0]], [0, 1], role="main_train", sensitive=["M", "F"])


class TestSplit:
    def test_ten_rows(self):
        ds = dataset.from_frame(credit_frame(), "default", "gender")
        spec = dataset.SplitSpec(metric_fraction=0.2, test_fraction=0.4, seed=3)
        metric, main, test = dataset.three_way_split(ds, spec)
        assert (metric.n_rows, main.n_rows, test.n_rows) == (2, 4, 4)

        ids = np.concatenate([metric.row_ids, main.row_ids, test.row_ids])
        assert sorted(ids.tolist()) == list(range(10))
        assert main.sensitive is None and main.sensitive_name is None
        assert metric.sensitive is not None and test.sensitive is not None

    @pytest.mark.parametrize("options", [{}, {"metric_share_of_train": 0.2686}])
    def test_reference_sizes(self, options):
        n_rows = 52_588
        rng = np.random.default_rng(0)
        frame = pd.DataFrame(
            {
                "gender": rng.choice(["M", "F"], size=n_rows),
                "x": rng.normal(size=n_rows),
                "default": (rng.random(n_rows) < 0.2).astype(int),
            }
        )
        ds = dataset.from_frame(frame, "default", "gender")
        metric, main, test = dataset.three_way_split(ds, dataset.SplitSpec(seed=1, **options))
        assert abs(main.n_rows - 23_145) <= 1
        assert abs(metric.n_rows - 8_501) <= 1
        assert abs(test.n_rows - 20_942) <= 1

    def test_deterministic(self):
        ds = dataset.from_frame(credit_frame(40), "default", "gender")
        spec = dataset.SplitSpec(metric_fraction=0.25, test_fraction=0.25, seed=11)
        first = dataset.build_manifest(ds, spec, dataset.three_way_split(ds, spec))
        second = dataset.build_manifest(ds, spec, dataset.three_way_split(ds, spec))
        assert first.to_doc() == second.to_doc()

    def test_stratified_on_label(self):
        ds = dataset.from_frame(credit_frame(40), "default", "gender")
        spec = dataset.SplitSpec(metric_fraction=0.25, test_fraction=0.25, seed=5)
        metric, main, test = dataset.three_way_split(ds, spec)
        for part in (metric, main, test):
            assert part.labels.sum() * 2 == part.n_rows

    def test_fractions_must_leave_training_rows(self):
        with pytest.raises(ValueError):
            dataset.SplitSpec(metric_fraction=0.5, test_fraction=0.5)

    def test_downsample_majority(self):
        frame = credit_frame(60)
        frame["default"] = (np.arange(60) % 4 == 0).astype(int)
        ds = dataset.from_frame(frame, "default", "gender")
        spec = dataset.SplitSpec(
            metric_fraction=0.2, test_fraction=0.2, seed=2, downsample_majority=True
        )
        _, main, _ = dataset.three_way_split(ds, spec)
        assert main.labels.sum() * 2 == main.n_rows


class TestManifest:
    def _manifest(self):
        ds = dataset.from_frame(credit_frame(20), "default", "gender")
        spec = dataset.SplitSpec(metric_fraction=0.25, test_fraction=0.25, seed=4)
        return dataset.build_manifest(ds, spec, dataset.three_way_split(ds, spec))

    def test_sealed_roundtrip(self):
        manifest = self._manifest()
        assert dataset.SplitManifest.from_doc(manifest.to_doc()) == manifest

    def test_tampering_detected(self):
        doc = self._manifest().to_doc()
        doc["seed"] = 99
        with pytest.raises(IntegrityError):
            dataset.SplitManifest.from_doc(doc)

    def test_overlap_is_isolation_failure(self):
        doc = self._manifest().to_doc()
        doc["indices"]["main_train"].append(doc["indices"]["metric_train"][0])
        with pytest.raises(IsolationError):
            dataset.SplitManifest.from_doc(doc)


class TestPreprocess:
    def test_standardize_population_std(self):
        ds = toy_dataset([[2.0], [4.0]], [0, 1], role="main_train")
        recipe = dataset.fit_preprocess(ds)
        out = dataset.apply_preprocess(recipe, ds)
        assert out.X[:, 0].tolist() == [-1.0, 1.0]

    def test_one_hot_and_unseen_category(self):
        frame = credit_frame().drop(columns="gender")
        train = dataset.from_frame(frame, "default", role="main_train")
        recipe = dataset.fit_preprocess(train)
        assert recipe.output_names == [
            "income",
            "employment=salaried",
            "employment=self_employed",
        ]

        frame = credit_frame(4)
        frame.loc[0, "employment"] = "retired"
        test = dataset.from_frame(frame, "default", "gender", role="test")
        with pytest.warns(PreprocessWarning):
            out = dataset.apply_preprocess(recipe, test)
        assert out.X[0, 1:].tolist() == [0.0, 0.0]
        assert out.sensitive is not None

    def test_constant_column_passthrough(self):
        ds = toy_dataset([[1.0, 0.0], [1.0, 2.0]], [0, 1], role="main_train")
        with pytest.warns(PreprocessWarning):
            recipe = dataset.fit_preprocess(ds)
        assert recipe.columns[0].kind == "passthrough"
        assert recipe.notes

    def test_recipe_not_fitted_on_test(self):
        ds = toy_dataset([[1.0], [2.0]], [0, 1], role="test", sensitive=["M", "F"])
        with pytest.raises(RoleError):
            dataset.fit_preprocess(ds)

    def test_missing_recipe_column(self):
        train = toy_dataset([[1.0, 2.0], [3.0, 5.0]], [0, 1], role="main_train")
        recipe = dataset.fit_preprocess(train)
        other = toy_dataset([[1.0], [2.0]], [0, 1], role="main_train")
        with pytest.raises(SchemaError):
            dataset.apply_preprocess(recipe, other)


class TestSynthetic:
    def test_schema(self):
        frame = dataset.make_synthetic_credit(500, seed=1)
        assert len(frame) == 500
        assert set(frame["gender"]) == {"M", "F"}
        assert set(frame["default"]) <= {0, 1}

    def test_proxy_tracks_gender(self):
        frame = dataset.make_synthetic_credit(2000, seed=2)
        male = frame["gender"] == "M"
        assert frame.loc[male, "proxy_score"].mean() > frame.loc[~male, "proxy_score"].mean() + 2

    def test_seeded(self):
        first = dataset.make_synthetic_credit(100, seed=3)
        second = dataset.make_synthetic_credit(100, seed=3)
        pd.testing.assert_frame_equal(first, second)
