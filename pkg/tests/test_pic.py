# -*- coding: utf-8 -*-
#
# Copyright © 2024 Genome Research Ltd. All rights reserved.
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
#
# @author Keith James <kdj@sanger.ac.uk>


import numpy as np
import pytest
from pytest import mark as m

from helpers import CHAIN2_B, CHAIN2_DESIRED, random_instances
from npg_probctl.exception import ConfigurationError, DegenerateError
from npg_probctl.model import (
    CostModel,
    DiscreteProblem,
    RandomSpec,
    TabularPolicy,
    random_policy,
    random_problem,
)
from npg_probctl.pic import (
    closed_loop_equivalence_check,
    exact_smoothing,
    pic_policy_mc,
    pic_value_mc,
    smoothing_marginals,
)
from npg_probctl.projection import ProjectionKind, backward_pass
from npg_probctl.trajectory import desired_distribution


@m.describe("Path-integral value estimates")
class TestValueEstimate:
    @m.context("When the value of the two-state chain is estimated")
    @m.it("Lies within a few standard errors of the exact value")
    def test_chain2(self, chain2_problem, chain2_uniform):
        problem, cost = chain2_problem
        estimate = pic_value_mc(
            problem, chain2_uniform, cost, state=0, t=0, n_samples=10_000, seed=42
        )

        assert estimate.n_samples == 10_000
        assert estimate.seed == 42
        assert 0 < estimate.std_err < 0.05
        assert abs(estimate.value - CHAIN2_B) <= 4 * estimate.std_err

    @m.context("When the estimate is repeated over many seeds")
    @m.it("Covers the exact value within three standard errors")
    def test_coverage(self, chain2_problem, chain2_uniform):
        problem, cost = chain2_problem
        covered = 0
        for seed in range(100):
            estimate = pic_value_mc(
                problem, chain2_uniform, cost, 0, 0, n_samples=100_000, seed=seed
            )
            if abs(estimate.value - CHAIN2_B) <= 3 * estimate.std_err:
                covered += 1

        assert covered >= 95

    @m.context("When the sample size grows")
    @m.it("Shrinks the error as the inverse square root of the sample size")
    def test_error_rate(self, chain2_problem, chain2_uniform):
        problem, cost = chain2_problem

        def mean_error(n: int) -> float:
            values = [
                pic_value_mc(
                    problem, chain2_uniform, cost, 0, 0, n_samples=n, seed=seed
                ).value
                for seed in range(20)
            ]
            return float(np.mean(np.abs(np.array(values) - CHAIN2_B)))

        sizes = [100, 1000, 10_000, 100_000]
        errors = [mean_error(n) for n in sizes]
        slope, _ = np.polyfit(np.log(sizes), np.log(errors), 1)
        assert -0.65 <= slope <= -0.35

    @m.context("When the sample is drawn by several threads")
    @m.it("Gives the same estimate as one thread")
    def test_threads(self, stochastic_chain2_problem):
        problem, cost = stochastic_chain2_problem
        prior = TabularPolicy.uniform(problem)
        kwargs = dict(state=0, t=0, n_samples=5000, seed=7, chunk_size=512)

        single = pic_value_mc(problem, prior, cost, num_threads=1, **kwargs)
        multi = pic_value_mc(problem, prior, cost, num_threads=4, **kwargs)
        assert single == multi

    @m.context("When the start time is the horizon")
    @m.it("Returns the terminal cost exactly")
    def test_terminal(self, chain2_problem, chain2_uniform):
        problem, cost = chain2_problem
        estimate = pic_value_mc(
            problem, chain2_uniform, cost, state=1, t=1, n_samples=10, seed=1
        )
        assert estimate.value == 1.0
        assert estimate.std_err == 0.0

    @m.context("When every rollout has infinite cost")
    @m.it("Raises a degenerate error")
    def test_degenerate(self, chain2_problem, chain2_uniform):
        problem, _ = chain2_problem
        cost = CostModel(np.full((1, 2, 2), np.inf), [0.0, 1.0])
        with pytest.raises(DegenerateError):
            pic_value_mc(
                problem, chain2_uniform, cost, state=0, t=0, n_samples=10, seed=1
            )

    @m.context("When the arguments are out of range")
    @m.it("Raises a configuration error")
    def test_invalid(self, chain2_problem, chain2_uniform):
        problem, cost = chain2_problem
        for kwargs in (
            dict(state=0, t=0, n_samples=0),
            dict(state=2, t=0, n_samples=10),
            dict(state=0, t=2, n_samples=10),
        ):
            with pytest.raises(ConfigurationError):
                pic_value_mc(problem, chain2_uniform, cost, seed=1, **kwargs)


@m.describe("Path-integral policy estimates")
class TestPolicyEstimate:
    @m.context("When the policy of the two-state chain is estimated")
    @m.it("Approaches the M-projection policy")
    def test_chain2(self, stochastic_chain2_problem):
        problem, cost = stochastic_chain2_problem
        prior = TabularPolicy.uniform(problem)
        estimate = pic_policy_mc(problem, prior, cost, n_samples=20_000, seed=3)
        _, exact = backward_pass(problem, cost, prior, ProjectionKind.m())

        np.testing.assert_allclose(estimate.tables, exact.tables, atol=0.02)

    @m.context("When the transitions are deterministic")
    @m.it("Is exact")
    def test_deterministic(self, chain2_problem, chain2_uniform):
        problem, cost = chain2_problem
        estimate = pic_policy_mc(problem, chain2_uniform, cost, n_samples=5, seed=3)
        np.testing.assert_allclose(estimate[0][0], CHAIN2_DESIRED, rtol=1e-12)


@m.describe("Smoothing")
class TestSmoothing:
    @m.context("When the closed loop of the M-projection is enumerated")
    @m.it("Equals the desired distribution")
    def test_closed_loop(self):
        rng = np.random.default_rng(37)
        for problem, cost in random_instances(10, seed=37, max_horizon=4):
            prior = random_policy(problem, rng)
            assert closed_loop_equivalence_check(problem, prior, cost) < 1e-10

    @m.context("When the action posterior is computed")
    @m.it("Equals the M-projection policy")
    def test_smoothing_policy(self):
        rng = np.random.default_rng(41)
        for problem, cost in random_instances(50, seed=41):
            prior = random_policy(problem, rng)
            _, projected = backward_pass(problem, cost, prior, ProjectionKind.m())
            smoothed = exact_smoothing(problem, prior, cost)
            np.testing.assert_allclose(smoothed.tables, projected.tables, atol=1e-10)

    @m.context("When costs are large")
    @m.it("Keeps the messages finite")
    def test_scaling(self, chain2_problem, chain2_uniform):
        problem, _ = chain2_problem
        cost = CostModel(np.full((1, 2, 2), 1000.0), [1000.0, 1001.0])
        smoothed = exact_smoothing(problem, chain2_uniform, cost)
        np.testing.assert_allclose(smoothed[0][0], CHAIN2_DESIRED, rtol=1e-12)

    @m.context("When costs differ by hundreds across states")
    @m.it("Gives each state its own action posterior")
    def test_cost_spread(self):
        row = [[1.0, 0.0], [0.0, 1.0]]
        problem = DiscreteProblem.time_invariant([0.5, 0.5], [row, row], horizon=1)
        cost = CostModel([[[0.0, 0.0], [800.0, 801.0]]], np.zeros(2))
        prior = TabularPolicy.uniform(problem)

        smoothed = exact_smoothing(problem, prior, cost)
        np.testing.assert_allclose(smoothed[0][0], [0.5, 0.5], rtol=1e-12)
        np.testing.assert_allclose(smoothed[0][1], CHAIN2_DESIRED, rtol=1e-6)

        _, projected = backward_pass(problem, cost, prior, ProjectionKind.m())
        np.testing.assert_allclose(smoothed.tables, projected.tables, atol=1e-10)

        marginals = smoothing_marginals(problem, prior, cost)
        assert np.isfinite(marginals).all()
        np.testing.assert_allclose(marginals.sum(axis=1), 1.0, rtol=1e-12)

    @m.context("When costs are scaled into the thousands")
    @m.it("Equals the M-projection policy")
    def test_large_scale(self):
        problem, cost = random_problem(RandomSpec(3, 3, 2, 3, sigma=2000.0))
        prior = TabularPolicy.uniform(problem)
        _, projected = backward_pass(problem, cost, prior, ProjectionKind.m())
        smoothed = exact_smoothing(problem, prior, cost)

        assert np.isfinite(smoothed.tables).all()
        np.testing.assert_allclose(smoothed.tables, projected.tables, atol=1e-10)

    @m.context("When a state has no finite-cost continuation")
    @m.it("Keeps the prior row for that state")
    def test_dead_row(self):
        row = [[1.0, 0.0], [0.0, 1.0]]
        problem = DiscreteProblem.time_invariant([1.0, 0.0], [row, row], horizon=1)
        cost = CostModel([[[0.0, 1.0], [np.inf, np.inf]]], np.zeros(2))
        prior = TabularPolicy([[[0.5, 0.5], [0.25, 0.75]]])

        smoothed = exact_smoothing(problem, prior, cost)
        np.testing.assert_allclose(smoothed[0][0], CHAIN2_DESIRED, rtol=1e-6)
        np.testing.assert_allclose(smoothed[0][1], [0.25, 0.75], rtol=1e-12)

    @m.context("When every trajectory has infinite cost")
    @m.it("Raises a degenerate error")
    def test_zero_evidence(self, chain2_problem, chain2_uniform):
        problem, _ = chain2_problem
        cost = CostModel(np.full((1, 2, 2), np.inf), [0.0, 1.0])
        with pytest.raises(DegenerateError):
            exact_smoothing(problem, chain2_uniform, cost)
        with pytest.raises(DegenerateError):
            smoothing_marginals(problem, chain2_uniform, cost)

    @m.context("When the state marginals are smoothed")
    @m.it("Equal the marginals of the desired distribution")
    def test_marginals(self):
        rng = np.random.default_rng(43)
        for problem, cost in random_instances(10, seed=43, max_horizon=4):
            prior = random_policy(problem, rng)
            marginals = smoothing_marginals(problem, prior, cost)
            desired = desired_distribution(problem, prior, cost)

            assert marginals.shape == (problem.horizon + 1, problem.num_states)
            for t in range(problem.horizon + 1):
                np.testing.assert_allclose(
                    marginals[t],
                    desired.state_marginal(t, problem.num_states),
                    atol=1e-10,
                )
