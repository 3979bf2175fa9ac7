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

from helpers import grid_problem, scalar_lqg
from npg_probctl.exception import (
    BreakdownError,
    ConfigurationError,
    DomainError,
    NumericError,
)
from npg_probctl.lqg import (
    LinearGaussianDynamics,
    LinearGaussianPolicy,
    QuadraticCost,
    leqr,
    lqg_backward,
    lqg_expected_cost,
    lqg_moments,
    mm_lqg,
    random_lqg,
    riccati_lqr,
)
from npg_probctl.mm import MMConfig, Mode, extract_deterministic, mm_iterate

# Gains from a fixed number of MM iterations approach the Riccati gains
# sublinearly, so they are compared with a relative tolerance.
GAIN_TOLERANCE = 0.02


def _close_gains(actual, expected):
    return np.all(np.abs(actual - expected) <= GAIN_TOLERANCE * (1 + np.abs(expected)))


@m.describe("Linear-Gaussian models")
class TestModels:
    @m.context("When time-invariant dynamics are made")
    @m.it("Repeat over the horizon with default initial moments")
    def test_dynamics(self):
        dyn, cost = scalar_lqg(horizon=3)
        assert dyn.horizon == 3
        assert dyn.state_dim == 1
        assert dyn.action_dim == 1
        np.testing.assert_array_equal(dyn.x0_mean, [0.0])
        np.testing.assert_array_equal(dyn.x0_cov, [[1.0]])
        assert cost.R_xixi.shape == (3, 2, 2)

    @m.context("When there is no action")
    @m.it("Raises a configuration error")
    def test_no_action(self):
        with pytest.raises(ConfigurationError):
            LinearGaussianDynamics.time_invariant([[1.0]], [0.0], [[0.0]], 1)

    @m.context("When the noise covariance is not positive semi-definite")
    @m.it("Raises a configuration error")
    def test_noise(self):
        with pytest.raises(ConfigurationError) as info:
            LinearGaussianDynamics.time_invariant([[1.0, 1.0]], [0.0], [[-1.0]], 1)
        assert info.value.path == "P"

    @m.context("When the action cost is not positive semi-definite")
    @m.it("Raises a configuration error")
    def test_action_cost(self):
        with pytest.raises(ConfigurationError) as info:
            QuadraticCost.time_invariant(
                [[0.0, 0.0], [0.0, -1.0]], [0.0, 0.0], [[1.0]], [0.0], 1
            )
        assert info.value.path == "R_uu"

    @m.context("When a cost is not symmetric")
    @m.it("Raises a configuration error")
    def test_asymmetric(self):
        with pytest.raises(ConfigurationError):
            QuadraticCost.time_invariant(
                [[0.0, 1.0], [0.0, 1.0]], [0.0, 0.0], [[1.0]], [0.0], 1
            )

    @m.context("When the costs do not fit the dynamics")
    @m.it("Raises a configuration error")
    def test_check(self):
        dyn, _ = scalar_lqg(horizon=2)
        _, cost = scalar_lqg(horizon=1)
        with pytest.raises(ConfigurationError):
            cost.check(dyn)

    @m.context("When a policy covariance is not positive definite")
    @m.it("Raises a numeric error")
    def test_sigma(self):
        with pytest.raises(NumericError):
            LinearGaussianPolicy([[[0.0]]], [[0.0]], [[[0.0]]])


@m.describe("Linear-Gaussian projection")
class TestBackward:
    @m.context("When the scalar benchmark is projected from the default prior")
    @m.it("Returns the closed-form gain, covariance and value")
    def test_scalar(self, scalar_benchmark):
        dyn, cost = scalar_benchmark
        prior = LinearGaussianPolicy.default(dyn)
        policy, value = lqg_backward(dyn, cost, prior, 0.0)

        assert value.Q_uu[0, 0, 0] == pytest.approx(2.0)
        assert value.Q_ux[0, 0, 0] == pytest.approx(1.0)
        assert policy.Sigma[0, 0, 0] == pytest.approx(1 / 3)
        assert policy.K[0, 0, 0] == pytest.approx(-1 / 3)
        assert policy.k[0, 0] == pytest.approx(0.0)
        assert value.V_xx[0, 0, 0] == pytest.approx(2 / 3)

    @m.context("When there is no noise")
    @m.it("Gives the same result for every alpha")
    def test_alpha_independent(self, scalar_benchmark):
        dyn, cost = scalar_benchmark
        prior = LinearGaussianPolicy.default(dyn)
        base, _ = lqg_backward(dyn, cost, prior, 0.0)
        for alpha in (0.5, 1.0):
            policy, _ = lqg_backward(dyn, cost, prior, alpha)
            np.testing.assert_allclose(policy.K, base.K, atol=1e-14)
            np.testing.assert_allclose(policy.Sigma, base.Sigma, atol=1e-14)

    @m.context("When alpha lies outside [0, 1]")
    @m.it("Raises a domain error")
    def test_alpha_domain(self, scalar_benchmark):
        dyn, cost = scalar_benchmark
        with pytest.raises(DomainError):
            lqg_backward(dyn, cost, LinearGaussianPolicy.default(dyn), 1.5)

    @m.context("When the policy is repeatedly projected")
    @m.it("Follows the closed-form iterates")
    def test_iterates(self, scalar_benchmark):
        dyn, cost = scalar_benchmark
        trace = mm_lqg(dyn, cost, 0.0, MMConfig(max_iters=5))

        for k, policy in enumerate(trace.policies):
            assert policy.K[0, 0, 0] == pytest.approx(-k / (2 * k + 1))
            assert policy.Sigma[0, 0, 0] == pytest.approx(1 / (2 * k + 1))
        assert not trace.converged
        assert trace.iterations == 5


@m.describe("Riccati oracles")
class TestRiccati:
    @m.context("When the scalar benchmark is solved")
    @m.it("Returns the gain -1/2")
    def test_scalar(self, scalar_benchmark):
        solution = riccati_lqr(*scalar_benchmark)
        assert solution.K[0, 0, 0] == pytest.approx(-0.5)
        assert solution.value.V_xx[0, 0, 0] == pytest.approx(0.5)

    @m.context("When the horizon is two")
    @m.it("Chains the value Hessians backwards")
    def test_two_steps(self):
        solution = riccati_lqr(*scalar_lqg(horizon=2))
        np.testing.assert_allclose(solution.K[:, 0, 0], [-1 / 3, -1 / 2])
        np.testing.assert_allclose(solution.value.V_xx[:, 0, 0], [1 / 3, 1 / 2, 1])

    @m.context("When noise is added")
    @m.it("Leaves the expected-cost gains unchanged")
    def test_certainty_equivalence(self):
        quiet = riccati_lqr(*scalar_lqg(noise=0.0, horizon=3))
        noisy = riccati_lqr(*scalar_lqg(noise=0.5, horizon=3))
        np.testing.assert_allclose(quiet.K, noisy.K)

    @m.context("When the exponential-cost problem has noise")
    @m.it("Uses the resolvent of the value Hessian")
    def test_leqr(self):
        solution = leqr(*scalar_lqg(noise=0.1))
        assert solution.K[0, 0, 0] == pytest.approx(-1 / 2.1, abs=1e-6)
        assert solution.K[0, 0, 0] == pytest.approx(-0.47619, abs=1e-5)

    @m.context("When the terminal Hessian is indefinite and noise is large")
    @m.it("Raises a breakdown error naming the step")
    def test_breakdown(self):
        dyn, cost = scalar_lqg(noise=3.0, terminal=-0.5)
        with pytest.raises(BreakdownError) as info:
            leqr(dyn, cost)
        assert info.value.t == 0
        with pytest.raises(BreakdownError):
            mm_lqg(dyn, cost, 1.0, MMConfig(max_iters=2))

    @m.context("When the expected-cost problem has an indefinite terminal Hessian")
    @m.it("Is solved if the action Hessian stays positive")
    def test_no_breakdown_without_risk(self):
        dyn, cost = scalar_lqg(noise=3.0, terminal=-0.5)
        assert riccati_lqr(dyn, cost).K[0, 0, 0] == pytest.approx(1.0)


@m.describe("LQG MM iteration")
class TestMMLQG:
    @m.context("When the expected-cost iteration runs on the scalar benchmark")
    @m.it("Descends towards the Riccati gain")
    def test_scalar(self, scalar_benchmark):
        dyn, cost = scalar_benchmark
        trace = mm_lqg(dyn, cost, 0.0, MMConfig(max_iters=500))

        objective = [r.objective_A for r in trace.records]
        assert objective[0] == pytest.approx(1.5)
        assert all(b <= a + 1e-12 for a, b in zip(objective, objective[1:]))
        assert trace.policy.K[0, 0, 0] == pytest.approx(-0.5, abs=1e-3)
        assert trace.records[-1].sigma_max == pytest.approx(1 / 1001)

    @m.context("When random instances are solved")
    @m.it("Approaches the Riccati gains for alpha 0 and 1")
    def test_random(self):
        rng = np.random.default_rng(71)
        config = MMConfig(max_iters=2000)
        for seed in range(20):
            state_dim, action_dim = (int(d) for d in rng.integers(1, 4, size=2))
            horizon = int(rng.integers(1, 11))
            dyn, cost = random_lqg(seed, state_dim, action_dim, horizon)

            for alpha, oracle in ((0.0, riccati_lqr), (1.0, leqr)):
                solution = oracle(dyn, cost)
                trace = mm_lqg(dyn, cost, alpha, config, track_objective=False)
                assert _close_gains(trace.policy.K, solution.K), (seed, alpha)
                assert _close_gains(trace.policy.k, solution.k), (seed, alpha)

    @m.context("When the policy is repeatedly projected")
    @m.it("Shrinks the policy covariance in the positive semidefinite order")
    @m.parametrize("alpha", [0.0, 0.5, 1.0])
    def test_covariance_shrinks(self, alpha):
        dyn, cost = random_lqg(5, n=3, m=2, horizon=4)
        config = MMConfig(max_iters=50)
        trace = mm_lqg(dyn, cost, alpha, config, track_objective=False)

        for before, after in zip(trace.policies, trace.policies[1:]):
            assert np.linalg.eigvalsh(before.Sigma - after.Sigma).min() >= -1e-12

    @m.context("When a random instance is projected")
    @m.it("Keeps the value and covariance matrices symmetric")
    @m.parametrize("alpha", [0.0, 0.5, 1.0])
    def test_symmetric(self, alpha):
        dyn, cost = random_lqg(9, n=3, m=3, horizon=5)
        prior = LinearGaussianPolicy.default(dyn)
        policy, value = lqg_backward(dyn, cost, prior, alpha)

        np.testing.assert_array_equal(value.V_xx, np.swapaxes(value.V_xx, 1, 2))
        np.testing.assert_array_equal(policy.Sigma, np.swapaxes(policy.Sigma, 1, 2))
        assert np.linalg.eigvalsh(policy.Sigma).min() > 0

    @m.context("When the iteration tolerance is loose")
    @m.it("Converges")
    def test_converges(self, scalar_benchmark):
        dyn, cost = scalar_benchmark
        trace = mm_lqg(dyn, cost, 0.0, MMConfig(max_iters=500, tol_policy=1e-3))
        assert trace.converged
        assert trace.iterations < 500


@m.describe("Closed-loop moments")
class TestMoments:
    @m.context("When the default policy drives the scalar benchmark")
    @m.it("Adds the action variance to the state variance")
    def test_scalar(self, scalar_benchmark):
        dyn, cost = scalar_benchmark
        policy = LinearGaussianPolicy.default(dyn)
        moments = lqg_moments(dyn, policy)

        np.testing.assert_allclose(moments.x_cov[:, 0, 0], [1.0, 2.0])
        np.testing.assert_allclose(moments.xi_cov[0], [[1.0, 0.0], [0.0, 1.0]])
        assert lqg_expected_cost(dyn, cost, policy) == pytest.approx(1.5)

    @m.context("When the Riccati gain is applied deterministically")
    @m.it("Gives the optimal expected cost")
    def test_optimal(self, scalar_benchmark):
        dyn, cost = scalar_benchmark
        solution = riccati_lqr(dyn, cost)
        policy = LinearGaussianPolicy(solution.K, solution.k, [[[1e-12]]])
        # V_xx_0 = 1/2 and x_0 ~ N(0, 1)
        assert lqg_expected_cost(dyn, cost, policy) == pytest.approx(0.25, abs=1e-9)


@m.describe("Tabular cross-validation")
class TestTabular:
    @m.context("When the scalar benchmark is discretized and solved by MM")
    @m.it("Chooses actions within half a grid step of the Riccati gain")
    def test_grid(self):
        spacing = 0.25
        problem, cost, states, actions = grid_problem(spacing=spacing)
        trace = mm_iterate(problem, cost, Mode.SOC, MMConfig(max_iters=50))
        chosen = actions[extract_deterministic(trace.policy).actions[0]]

        dyn, quadratic = scalar_lqg()
        solution = riccati_lqr(dyn, quadratic)
        linear = solution.K[0, 0, 0] * states + solution.k[0, 0]

        inner = np.abs(states) <= 2.0 + 1e-12
        bound = spacing / 2 + 1e-12
        assert np.all(np.abs(chosen[inner] - linear[inner]) <= bound)
