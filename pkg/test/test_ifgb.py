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
import pytest
from scipy.optimize import linprog

from adil.error import InvalidArgument
from adil.fair_metric import pairwise_fair_distances
from adil.fairness_eval import ifm
from adil.ifgb import (
    CandidateTable,
    IfgbConfig,
    build_candidates,
    solve_adversary_lp,
    train_ifgb,
)
from adil.models import train_boosted

from . import blobs, quick_train, random_metric, sensitive_axis, spurious_toy


def ifgb_config(**overrides) -> IfgbConfig:
    params = quick_train().model_dump()
    params.update(overrides)
    return IfgbConfig(**params)


def lp_oracle(losses: np.ndarray, sq: np.ndarray, epsilon: float) -> float:
    """Optimal objective of the transport program by a generic LP solver.

    Infinite distances forbid the pair.
    """
    n = losses.shape[0]
    allowed = np.isfinite(sq).reshape(-1)
    rows = np.kron(np.eye(n), np.ones(n))
    result = linprog(
        -np.tile(losses, n),
        A_ub=np.where(np.isfinite(sq), sq, 0.0).reshape(1, -1),
        b_ub=[epsilon],
        A_eq=rows,
        b_eq=np.full(n, 1.0 / n),
        bounds=[(0, None) if ok else (0, 0) for ok in allowed],
        method="highs",
    )
    assert result.status == 0
    return -result.fun


def dense_sq(m, X: np.ndarray, labels=None) -> np.ndarray:
    sq = pairwise_fair_distances(m, X) ** 2
    if labels is not None:
        sq[labels[:, None] != labels[None, :]] = np.inf
    return sq


class TestTransportLp:
    def test_zero_budget_is_identity(self):
        table = build_candidates(random_metric(2, 0), np.arange(8.0).reshape(4, 2), cap=4)
        losses = np.array([0.1, 2.0, 0.5, 0.3])
        plan = solve_adversary_lp(losses, table, 0.0)
        assert plan.primary.tolist() == [0, 1, 2, 3]
        assert np.array_equal(plan.column_mass(), np.ones(4))
        assert plan.objective == pytest.approx(losses.mean())
        assert plan.cost == 0.0
        assert plan.moved_mass_fraction() == 0.0

    def test_unbounded_budget_moves_everything_to_the_worst_row(self):
        table = CandidateTable(np.array([[0, 1], [0, 1]]), np.array([[0.0, 1.0], [1.0, 0.0]]))
        plan = solve_adversary_lp(np.array([0.0, 1.0]), table, np.inf)
        assert plan.objective == 1.0
        assert np.array_equal(plan.to_matrix(), [[0.0, 0.5], [0.0, 0.5]])

    @pytest.mark.parametrize("seed", range(100))
    def test_matches_generic_solver(self, seed):
        rng = np.random.default_rng(seed)
        n_rows = 1 + seed % 5
        epsilon = [0.0, 0.05, 0.3, 1.0, 5.0][(seed // 5) % 5]
        X = rng.normal(size=(n_rows, 3))
        m = random_metric(3, 1, seed=seed)
        losses = rng.exponential(size=n_rows)
        labels = rng.integers(0, 2, size=n_rows) if seed % 2 else None
        table = build_candidates(m, X, cap=n_rows, labels=labels)

        plan = solve_adversary_lp(losses, table, epsilon)
        expected = lp_oracle(losses, dense_sq(m, X, labels), epsilon)
        assert plan.objective == pytest.approx(expected, abs=1e-7)
        assert plan.cost <= epsilon + 1e-8
        assert np.allclose(plan.to_matrix().sum(axis=1), 1.0 / n_rows, atol=1e-10)
        assert np.count_nonzero((plan.alt_share > 0) & (plan.alt_share < 1)) <= 1

    def test_objective_grows_with_budget(self):
        rng = np.random.default_rng(21)
        table = build_candidates(random_metric(3, 1, seed=21), rng.normal(size=(30, 3)), cap=8)
        losses = rng.exponential(size=30)
        budgets = [0.0, 0.01, 0.05, 0.1, 0.5, 1.0, 5.0, np.inf]
        objectives = [solve_adversary_lp(losses, table, eps).objective for eps in budgets]
        assert all(b >= a - 1e-12 for a, b in zip(objectives, objectives[1:]))

    @pytest.mark.parametrize("epsilon", [0.0, 1.0, np.inf])
    def test_unreachable_rows_keep_their_mass(self, epsilon):
        sq = np.full((4, 4), np.inf)
        np.fill_diagonal(sq, 0.0)
        table = CandidateTable(np.tile(np.arange(4), (4, 1)), sq)
        plan = solve_adversary_lp(np.array([0.1, 3.0, 0.2, 1.0]), table, epsilon)
        assert plan.primary.tolist() == [0, 1, 2, 3]
        assert np.array_equal(plan.to_matrix(), np.eye(4) / 4)

    @pytest.mark.parametrize("epsilon", [0.0, 0.1, 0.3, 2.0])
    def test_no_single_row_reassignment_improves_the_lagrangian(self, epsilon):
        rng = np.random.default_rng(22)
        X = rng.normal(size=(6, 3))
        m = random_metric(3, 1, seed=22)
        losses = rng.exponential(size=6)
        table = build_candidates(m, X, cap=6)
        plan = solve_adversary_lp(losses, table, epsilon)

        value = losses[None, :] - plan.lambda_star * dense_sq(m, X)
        best = value.max(axis=1)
        rows = np.arange(6)
        assert np.all(value[rows, plan.primary] >= best - 1e-9)
        shared = plan.alt_share > 0
        assert np.all(value[rows[shared], plan.alt[shared]] >= best[shared] - 1e-9)

    def test_single_row(self):
        table = build_candidates(random_metric(2, 1), np.ones((1, 2)), cap=1)
        plan = solve_adversary_lp(np.array([0.4]), table, 1.0)
        assert plan.primary.tolist() == [0]
        assert plan.objective == pytest.approx(0.4)

    def test_equal_losses_stay_put(self):
        table = build_candidates(random_metric(2, 0), np.eye(3, 2), cap=3)
        plan = solve_adversary_lp(np.full(3, 0.7), table, 10.0)
        assert plan.primary.tolist() == [0, 1, 2]

    def test_invalid_input(self):
        table = build_candidates(random_metric(2, 0), np.eye(3, 2), cap=3)
        with pytest.raises(InvalidArgument):
            solve_adversary_lp(np.ones(3), table, -0.1)
        with pytest.raises(InvalidArgument):
            solve_adversary_lp(np.ones(4), table, 0.1)
        with pytest.raises(InvalidArgument):
            solve_adversary_lp(np.array([1.0, np.nan, 0.0]), table, 0.1)


class TestCandidates:
    def test_neighbors_include_self(self):
        X = np.random.default_rng(1).normal(size=(30, 3))
        m = random_metric(3, 1, seed=1)
        table = build_candidates(m, X, cap=5)
        exact = pairwise_fair_distances(m, X) ** 2
        assert table.index.shape == (30, 5)
        for row in range(30):
            assert row in table.index[row]
            assert list(table.index[row]) == sorted(table.index[row])
            assert np.allclose(table.sq_dist[row], exact[row, table.index[row]], atol=1e-9)

    def test_cache_is_reused(self, tmp_path):
        X = np.random.default_rng(2).normal(size=(12, 2))
        m = random_metric(2, 1, seed=2)
        first = build_candidates(m, X, cap=4, cache_dir=tmp_path)
        assert len(list(tmp_path.glob("candidates-*.npz"))) == 1
        second = build_candidates(m, X, cap=4, cache_dir=tmp_path)
        assert np.array_equal(first.index, second.index)
        assert np.array_equal(first.sq_dist, second.sq_dist)

    @pytest.mark.parametrize("cap", [3, 100])
    def test_labels_keep_mass_inside_each_class(self, cap):
        rng = np.random.default_rng(23)
        X = rng.normal(size=(40, 3))
        labels = rng.integers(0, 2, size=40)
        table = build_candidates(random_metric(3, 1, seed=23), X, cap=cap, labels=labels)
        listed = table.index >= 0
        own = np.broadcast_to(labels[:, None], table.index.shape)
        assert np.array_equal(labels[table.index[listed]], own[listed])
        assert np.all(np.isinf(table.sq_dist[~listed]))

        plan = solve_adversary_lp(rng.exponential(size=40), table, 1.0)
        mass = plan.column_mass()
        for value in (0, 1):
            assert mass[labels == value].sum() == pytest.approx(np.sum(labels == value))

    def test_capped_plan_respects_budget(self):
        rng = np.random.default_rng(3)
        table = build_candidates(random_metric(3, 1, seed=3), rng.normal(size=(40, 3)), cap=4)
        plan = solve_adversary_lp(rng.exponential(size=40), table, 0.2)
        assert plan.cost <= 0.2 + 1e-9
        assert plan.column_mass().sum() == pytest.approx(40.0)


class TestTrainIfgb:
    def test_zero_budget_matches_plain_boosting(self):
        ds = blobs(120, seed=4)
        plain = train_boosted(ds, quick_train())
        fair = train_ifgb(ds, random_metric(3, 1, seed=4), ifgb_config(epsilon_lp=0.0))
        assert np.array_equal(plain.margin(ds.X), fair.margin(ds.X))

    def test_adversary_reweights(self):
        rounds = []
        ds = blobs(80, seed=5)
        train_ifgb(
            ds, random_metric(3, 1, seed=5), ifgb_config(epsilon_lp=0.5), on_round=rounds.append
        )
        assert len(rounds) == 5
        assert all(r.adv_objective >= r.mean_loss - 1e-12 for r in rounds)
        assert any(r.moved_mass_fraction > 0 for r in rounds)
        assert all(r.train_loss is not None for r in rounds)

    def test_individual_fairness_beats_baseline(self):
        ds = spurious_toy(600, seed=12)
        test = spurious_toy(300, seed=13, role="test")
        m = sensitive_axis(epsilon_default=0.25)
        cfg = ifgb_config(rounds=30, epsilon_lp=0.1)

        baseline = ifm(train_boosted(ds, cfg), m, test, [m.epsilon_default])
        fair = ifm(train_ifgb(ds, m, cfg), m, test, [m.epsilon_default])
        assert fair.values[0] >= baseline.values[0]
