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

import itertools

import numpy as np
import pytest

from adil.error import InvalidArgument, UndefinedMetricError
from adil.fair_metric import FairMetric, fair_distance
from adil.fairness_eval import (
    audit_model,
    auc_concordance,
    auc_trapezoid,
    default_epsilon_grid,
    ifm,
    lipschitz_audit,
    roc_from_scores,
    score_table,
    tradeoff_summary,
)
from adil.models import BoostedEnsemble, TreeNode, predict_label, predict_proba

from . import random_metric, toy_dataset


def stump(feature: int = 0, threshold: float = 0.0, n_features: int = 2) -> BoostedEnsemble:
    """Margin -2 left of the threshold, +2 right of it."""
    tree = TreeNode(
        feature=feature,
        threshold=threshold,
        left=TreeNode(leaf_value=-2.0),
        right=TreeNode(leaf_value=2.0),
    )
    return BoostedEnsemble((tree,), 1.0, 0.0, tuple(f"f{i}" for i in range(n_features)))


def constant(n_features: int = 2) -> BoostedEnsemble:
    return BoostedEnsemble((), 0.1, 0.3, tuple(f"f{i}" for i in range(n_features)))


def audit_split(n_rows: int = 40, seed: int = 0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n_rows, 2))
    return toy_dataset(
        X,
        (X[:, 0] + 0.5 * rng.normal(size=n_rows) > 0).astype(int),
        role="test",
        sensitive=rng.choice(["M", "F"], size=n_rows),
    )


class TestIfm:
    def test_matches_brute_force(self):
        ds = audit_split(30)
        model = stump()
        m = random_metric(2, 1, seed=1)
        grid = [0.1, 0.5, 1.0, 3.0]
        curve = ifm(model, m, ds, grid)

        pred = predict_label(model, ds.X)
        for k, eps in enumerate(grid):
            similar = agree = 0
            for i, j in itertools.combinations(range(ds.n_rows), 2):
                if fair_distance(m, ds.X[i], ds.X[j]) <= eps:
                    similar += 1
                    agree += int(pred[i] == pred[j])
            assert curve.similar_pairs[k] == similar
            assert curve.agreeing_pairs[k] == agree
        assert curve.sampling.mode == "exhaustive"

    def test_constant_model_is_perfectly_fair(self):
        curve = ifm(constant(), random_metric(2, 0), audit_split(), [0.5, 1.0, 2.0])
        assert curve.values == [1.0, 1.0, 1.0]

    def test_no_similar_pairs_is_undefined(self):
        ds = toy_dataset([[0.0, 0.0], [5.0, 0.0]], [0, 1], role="test")
        curve = ifm(stump(threshold=1.0), random_metric(2, 0), ds, [1.0, 6.0])
        assert curve.values == [None, 0.0]

    def test_sampled_pairs(self):
        curve = ifm(stump(), random_metric(2, 1), audit_split(60), [1.0], pair_budget=300, seed=2)
        assert curve.sampling.mode == "sampled"
        assert curve.similar_pairs[0] <= 300

    @pytest.mark.parametrize("grid", [[], [1.0, 0.5], [-1.0], [0.5, 0.5]])
    def test_invalid_grid(self, grid):
        with pytest.raises(InvalidArgument):
            ifm(stump(), random_metric(2, 0), audit_split(), grid)


class TestLipschitzAudit:
    def test_matches_brute_force(self):
        ds = audit_split(25, seed=3)
        model = stump()
        m = random_metric(2, 1, seed=3)
        result = lipschitz_audit(model, m, ds, 0.5)

        proba = predict_proba(model, ds.X)
        expected = sum(
            abs(proba[i] - proba[j]) > 0.5 * fair_distance(m, ds.X[i], ds.X[j])
            for i, j in itertools.combinations(range(ds.n_rows), 2)
        )
        assert result.violations == expected
        assert result.pairs == 25 * 24 // 2
        assert result.half_width is None

    def test_constant_model_never_violates(self):
        result = lipschitz_audit(constant(), random_metric(2, 1), audit_split(), 1.0)
        assert result.violations == 0
        assert result.empirical_constant == 0.0

    def test_sampled_audit_reports_interval(self):
        result = lipschitz_audit(stump(), random_metric(2, 0), audit_split(50), pair_budget=200)
        assert result.pairs == 200
        assert result.half_width is not None and result.half_width >= 0.0

    def test_budget_covering_every_pair_stays_exhaustive(self):
        ds = audit_split(20, seed=6)
        m = random_metric(2, 1, seed=6)
        full = lipschitz_audit(stump(), m, ds)
        budgeted = lipschitz_audit(stump(), m, ds, pair_budget=190)
        assert budgeted.sampling.mode == "exhaustive"
        assert budgeted.violation_rate == full.violation_rate

    def test_huge_constant_only_flags_zero_distance(self):
        ds = toy_dataset([[-1.0, 0.0], [1.0, 0.0], [1.0, 2.0]], [0, 1, 1], role="test")
        m = FairMetric(np.array([[1.0, 0.0]]), ["f0", "f1"])
        result = lipschitz_audit(stump(), m, ds, 1e12)
        assert result.violations == 1
        assert result.zero_distance_conflicts == 1

    def test_constant_must_be_positive(self):
        with pytest.raises(InvalidArgument):
            lipschitz_audit(stump(), random_metric(2, 0), audit_split(), 0.0)


class TestRoc:
    def test_hand_computed_auc(self):
        assert auc_concordance([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) == 0.75

    def test_trapezoid_matches_concordance(self):
        rng = np.random.default_rng(4)
        scores = np.round(rng.random(200), 2)
        labels = (rng.random(200) < scores).astype(int)
        points = roc_from_scores(scores, labels)
        assert points[0] == (0.0, 0.0)
        assert points[-1] == (1.0, 1.0)
        assert auc_trapezoid(points) == pytest.approx(auc_concordance(scores, labels), abs=1e-12)

    def test_curve_is_monotone(self):
        points = np.array(roc_from_scores([0.2, 0.9, 0.4, 0.4, 0.7], [0, 1, 1, 0, 1], 7))
        assert (np.diff(points, axis=0) >= 0).all()

    def test_perfect_classifier_reaches_the_corner(self):
        points = roc_from_scores([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1])
        assert (0.0, 1.0) in points

    def test_auc_ignores_monotone_transforms(self):
        rng = np.random.default_rng(6)
        scores = rng.random(100)
        labels = rng.integers(0, 2, size=100)
        assert auc_concordance(np.exp(3 * scores), labels) == pytest.approx(
            auc_concordance(scores, labels), abs=1e-12
        )

    def test_random_scores_are_near_half(self):
        rng = np.random.default_rng(7)
        auc = auc_trapezoid(roc_from_scores(rng.random(20000), rng.integers(0, 2, size=20000)))
        assert abs(auc - 0.5) <= 0.02

    def test_single_class(self):
        with pytest.raises(UndefinedMetricError):
            auc_concordance([0.1, 0.2], [1, 1])
        with pytest.raises(UndefinedMetricError):
            roc_from_scores([0.1, 0.2], [0, 0])


class TestGroupMetrics:
    SCORES = [0.1, 0.2, 0.9, 0.3, 0.6, 0.7]
    LABELS = [0, 0, 1, 1, 0, 1]
    GROUPS = ["M", "M", "M", "M", "F", "F"]

    def test_rates_per_group(self):
        table = score_table(self.SCORES, self.LABELS, self.GROUPS, reference_group="M")
        rows = {row.group: row for row in table.rows}
        assert (rows["M"].accuracy, rows["M"].fpr, rows["M"].fnr) == (0.75, 0.0, 0.5)
        assert (rows["F"].accuracy, rows["F"].fpr, rows["F"].fnr) == (0.5, 1.0, 0.0)
        assert table.overall.n == 6

    def test_diff_is_reference_minus_other(self):
        table = score_table(self.SCORES, self.LABELS, self.GROUPS, reference_group="M")
        (diff,) = table.diffs
        assert (diff.minuend, diff.subtrahend) == ("M", "F")
        assert diff.accuracy == 0.25
        assert diff.fpr == -1.0
        assert diff.fnr == 0.5

    def test_missing_reference_falls_back(self):
        table = score_table(self.SCORES, self.LABELS, self.GROUPS, reference_group="X")
        assert table.reference_group == "F"

    def test_single_group_matches_overall(self):
        table = score_table(self.SCORES, self.LABELS, ["M"] * 6)
        (row,) = table.rows
        assert row.model_dump(exclude={"group"}) == table.overall.model_dump(exclude={"group"})
        assert table.diffs == []

    def test_single_class_group_has_undefined_rates(self):
        table = score_table([0.2, 0.8, 0.6], [1, 0, 1], ["a", "b", "b"])
        row = table.rows[0]
        assert row.group == "a"
        assert row.fpr is None and row.auc is None
        assert row.fnr == 1.0


class TestAudit:
    def test_tradeoff_is_fair_minus_baseline(self):
        ds = audit_split(40, seed=5)
        m = random_metric(2, 1, seed=5)
        grid = default_epsilon_grid(m, ds, 5)
        base = audit_model(stump(), m, ds, method="baseline-gbt", epsilons=grid)
        fair = audit_model(constant(), m, ds, method="ifgb", epsilons=grid)
        summary = tradeoff_summary(base, fair)

        assert summary.fair == "ifgb"
        assert summary.violation_rate_change == pytest.approx(-base.lipschitz.violation_rate)
        assert summary.ifm_win_fraction == 1.0
        assert summary.accuracy_change == pytest.approx(
            fair.groups.overall.accuracy - base.groups.overall.accuracy
        )

    def test_grids_must_match(self):
        ds = audit_split()
        m = random_metric(2, 0)
        first = audit_model(stump(), m, ds, method="a", epsilons=[1.0])
        second = audit_model(stump(), m, ds, method="b", epsilons=[2.0])
        with pytest.raises(InvalidArgument):
            tradeoff_summary(first, second)

    def test_default_grid_is_ascending(self):
        grid = default_epsilon_grid(random_metric(2, 1), audit_split(), 10)
        assert len(grid) == 10
        assert grid[0] > 0
        assert all(a < b for a, b in zip(grid, grid[1:]))
