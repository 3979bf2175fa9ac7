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

"""Helper functions and constants for testing."""

import math
from pathlib import Path

import numpy as np

from npg_probctl.lqg import LinearGaussianDynamics, QuadraticCost
from npg_probctl.model import CostModel, DiscreteProblem, RandomSpec, random_problem

PROBLEMS_DIR = Path(__file__).parents[2] / "problems"

# The two-state chain: x_0 = 0 surely, x_1 = u_0, terminal costs (0, 1). Under the
# uniform policy the two trajectories have probability 1/2 and costs 0 and 1.
CHAIN2_ETA = 0.5 + 0.5 * math.exp(-1)
CHAIN2_A = 0.5
CHAIN2_B = -math.log(CHAIN2_ETA)
CHAIN2_DESIRED = (0.5 / CHAIN2_ETA, 0.5 * math.exp(-1) / CHAIN2_ETA)

# The same chain with x_1 = u_0 with probability 3/4 and flipped otherwise
STOCHASTIC_CHAIN2_Q_I = 0.25
STOCHASTIC_CHAIN2_Q_M = -math.log(0.75 + 0.25 * math.exp(-1))
STOCHASTIC_CHAIN2_Q_RENYI_HALF = -2 * math.log(0.75 + 0.25 * math.exp(-0.5))


def chain2(flip: float = 0.0) -> tuple[DiscreteProblem, CostModel]:
    """Return the two-state chain whose successor is the action, flipped with the
    given probability."""
    row = [[1 - flip, flip], [flip, 1 - flip]]
    problem = DiscreteProblem.time_invariant([1.0, 0.0], [row, row], horizon=1)
    cost = CostModel(np.zeros((1, 2, 2)), np.array([0.0, 1.0]))
    return problem, cost


def mode_separation() -> tuple[DiscreteProblem, CostModel]:
    """Return a one-step problem where the expected cost prefers a safe action and
    the exponential utility prefers a gamble.

    From state 0, action 0 moves to state 1 (terminal cost 0.5) and action 1 moves
    to states 2 or 3 (terminal costs 0 and 1.2) with equal probability.
    """
    transitions = np.zeros((1, 4, 2, 4))
    transitions[0, :, 0, 1] = 1.0
    transitions[0, :, 1, 2] = 0.5
    transitions[0, :, 1, 3] = 0.5
    problem = DiscreteProblem([1.0, 0.0, 0.0, 0.0], transitions)
    cost = CostModel(np.zeros((1, 4, 2)), np.array([0.0, 0.5, 0.0, 1.2]))
    return problem, cost


def random_instances(
    count: int,
    seed: int = 0,
    max_states: int = 5,
    max_actions: int = 4,
    max_horizon: int = 5,
    deterministic: bool = False,
):
    """Yield (problem, cost) pairs of random sizes with pinned seeds."""
    rng = np.random.default_rng(seed)
    for i in range(count):
        spec = RandomSpec(
            seed=seed * 10_000 + i,
            num_states=int(rng.integers(1, max_states + 1)),
            num_actions=int(rng.integers(1, max_actions + 1)),
            horizon=int(rng.integers(1, max_horizon + 1)),
            deterministic=deterministic,
        )
        yield random_problem(spec)


def scalar_lqg(
    noise: float = 0.0, horizon: int = 1, terminal: float = 1.0
) -> tuple[LinearGaussianDynamics, QuadraticCost]:
    """Return x' = x + u + noise with stage cost u^2 / 2 and terminal cost
    terminal * x^2 / 2."""
    dyn = LinearGaussianDynamics.time_invariant(
        [[1.0, 1.0]], [0.0], [[noise]], horizon
    )
    cost = QuadraticCost.time_invariant(
        [[0.0, 0.0], [0.0, 1.0]], [0.0, 0.0], [[terminal]], [0.0], horizon
    )
    return dyn, cost


def grid_problem(
    spacing: float = 0.25, half_width: float = 4.0
) -> tuple[DiscreteProblem, CostModel, np.ndarray, np.ndarray]:
    """Return a one-step discretization of the scalar benchmark on a grid.

    States and actions lie on a grid with the given spacing; the successor of x
    under u is x + u clipped to the state grid. The initial distribution is uniform
    over |x| <= 2 and actions lie in [-2, 2].

    Returns:
        The problem, the costs, the state grid and the action grid.
    """
    states = np.arange(-half_width, half_width + spacing / 2, spacing)
    actions = np.arange(-2.0, 2.0 + spacing / 2, spacing)
    num_x, num_u = states.shape[0], actions.shape[0]

    initial = np.where(np.abs(states) <= 2.0 + 1e-12, 1.0, 0.0)
    initial = initial / initial.sum()

    transitions = np.zeros((1, num_x, num_u, num_x))
    for i, x in enumerate(states):
        for j, u in enumerate(actions):
            y = np.clip(x + u, states[0], states[-1])
            transitions[0, i, j, int(np.argmin(np.abs(states - y)))] = 1.0

    stage = np.broadcast_to(0.5 * actions**2, (1, num_x, num_u))
    terminal = 0.5 * states**2
    problem = DiscreteProblem(initial, transitions)
    return problem, CostModel(stage, terminal), states, actions
