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

"""Brute-force ground truth for deterministic policies.

Nothing here uses the solver modules; the only shared code is the data model.
The loops are written out state by state so that the oracles stay easy to audit.
"""

import itertools
import math
from dataclasses import dataclass
from enum import Enum, unique
from multiprocessing.pool import ThreadPool

import numpy as np
from structlog import get_logger

from npg_probctl.exception import CapacityError
from npg_probctl.model import CostModel, DiscreteProblem

log = get_logger(__name__)

DEFAULT_POLICY_SEARCH_CAP = 1_000_000


@unique
class Objective(Enum):
    A = "A"
    """Expected cost."""
    B = "B"
    """Exponential utility, -log E[exp(-R)]."""

    def __str__(self):
        return self.value


@dataclass(frozen=True, eq=False)
class OracleSolution:
    """An optimal deterministic policy with its values.

    Args:
        actions: The action chosen per (t, x), shape (T, X).
        values: The value of each state, shape (T + 1, X).
        q: The value of each state-action pair, shape (T, X, U).
        objective: The objective value at the initial distribution.
        kind: The objective.
    """

    actions: np.ndarray
    values: np.ndarray
    q: np.ndarray
    objective: float
    kind: Objective

    def gaps(self) -> np.ndarray:
        """Return the difference between the best and second-best action values in
        each (t, x), +inf where there is only one finite action value."""
        q = np.sort(self.q, axis=-1)
        if q.shape[-1] < 2:
            return np.full(q.shape[:-1], np.inf)
        with np.errstate(invalid="ignore"):
            gaps = q[..., 1] - q[..., 0]
        return np.where(np.isnan(gaps), np.inf, gaps)


def _expected(row: np.ndarray, values: np.ndarray) -> float:
    total = 0.0
    for y, p in enumerate(row):
        if p > 0:
            total += p * values[y]
    return total


def _soft_expected(row: np.ndarray, values: np.ndarray) -> float:
    support = [y for y, p in enumerate(row) if p > 0]
    low = min(values[y] for y in support)
    if math.isinf(low):
        return low
    total = sum(row[y] * math.exp(-(values[y] - low)) for y in support)
    return low - math.log(total)


def _combine(kind: Objective):
    return _expected if kind == Objective.A else _soft_expected


def _q_values(problem, cost, t, values, kind) -> np.ndarray:
    combine = _combine(kind)
    q = np.empty((problem.num_states, problem.num_actions))
    for x in range(problem.num_states):
        for u in range(problem.num_actions):
            q[x, u] = cost.stage[t, x, u] + combine(
                problem.transitions[t, x, u], values
            )
    return q


def _argmin(row: np.ndarray) -> int:
    best = 0
    for u in range(1, row.shape[0]):
        if row[u] < row[best]:
            best = u
    return best


def _dp(problem: DiscreteProblem, cost: CostModel, kind: Objective) -> OracleSolution:
    cost.check(problem)
    horizon, num_x = problem.horizon, problem.num_states
    values = np.empty((horizon + 1, num_x))
    q = np.empty((horizon, num_x, problem.num_actions))
    actions = np.zeros((horizon, num_x), dtype=int)
    values[horizon] = cost.terminal

    for t in reversed(range(horizon)):
        q[t] = _q_values(problem, cost, t, values[t + 1], kind)
        for x in range(num_x):
            actions[t, x] = _argmin(q[t, x])
            values[t, x] = q[t, x, actions[t, x]]

    objective = _combine(kind)(problem.initial, values[0])
    log.debug("Dynamic programming solution", kind=str(kind), objective=objective)
    return OracleSolution(actions, values, q, float(objective), kind)


def dp_soc(problem: DiscreteProblem, cost: CostModel) -> OracleSolution:
    """Solve min E[R] over deterministic policies by dynamic programming,
    V_t(x) = min_u [r_t(x, u) + E[V_{t+1}]], ties to the lowest action."""
    return _dp(problem, cost, Objective.A)


def dp_rsoc(problem: DiscreteProblem, cost: CostModel) -> OracleSolution:
    """Solve min -log E[exp(-R)] over deterministic policies by dynamic
    programming, V_t(x) = min_u [r_t(x, u) - log E[exp(-V_{t+1})]], ties to the
    lowest action."""
    return _dp(problem, cost, Objective.B)


def policy_values(
    problem: DiscreteProblem, cost: CostModel, actions: np.ndarray, kind: Objective
) -> tuple[np.ndarray, np.ndarray]:
    """Evaluate a deterministic policy.

    Returns:
        The state values, shape (T + 1, X), and the state-action values, shape
        (T, X, U), of the policy.
    """
    horizon = problem.horizon
    values = np.empty((horizon + 1, problem.num_states))
    q = np.empty((horizon, problem.num_states, problem.num_actions))
    values[horizon] = cost.terminal
    for t in reversed(range(horizon)):
        q[t] = _q_values(problem, cost, t, values[t + 1], kind)
        for x in range(problem.num_states):
            values[t, x] = q[t, x, actions[t, x]]
    return values, q


def _trajectories(problem: DiscreteProblem, cost: CostModel, actions: np.ndarray):
    """Yield (probability, total cost) for every trajectory of a deterministic
    policy, depth first."""

    def walk(t, x, p, r):
        if t == problem.horizon:
            yield p, r + cost.terminal[x]
            return
        u = actions[t, x]
        for y, py in enumerate(problem.transitions[t, x, u]):
            if py > 0:
                yield from walk(t + 1, y, p * py, r + cost.stage[t, x, u])

    for x0, p0 in enumerate(problem.initial):
        if p0 > 0:
            yield from walk(0, x0, p0, 0.0)


def _exact_objective(problem, cost, actions, kind: Objective) -> float:
    outcomes = list(_trajectories(problem, cost, actions))
    if kind == Objective.A:
        return sum(p * r for p, r in outcomes)
    low = min(r for _, r in outcomes)
    if math.isinf(low):
        return low
    return low - math.log(sum(p * math.exp(-(r - low)) for p, r in outcomes))


def exhaustive_policy_search(
    problem: DiscreteProblem,
    cost: CostModel,
    objective: Objective,
    cap: float = DEFAULT_POLICY_SEARCH_CAP,
    num_threads: int = 1,
) -> OracleSolution:
    """Evaluate every deterministic policy by trajectory enumeration and return the
    best, the lexicographically lowest under ties.

    Args:
        problem: The controlled Markov chain.
        cost: The costs.
        objective: The objective to minimize.
        cap: The largest number of policies that may be visited.
        num_threads: The number of threads evaluating ranges of policies.

    Returns:
        The best policy with its own values.
    """
    cost.check(problem)
    horizon, num_x, num_u = problem.horizon, problem.num_states, problem.num_actions
    num_policies = float(num_u) ** (num_x * horizon)
    if num_policies > cap:
        raise CapacityError(
            f"Searching {num_policies:.3g} deterministic policies exceeds the cap",
            observed=num_policies,
            limit=cap,
        )
    num_policies = int(num_policies)

    def search(start: int, stop: int) -> tuple[float, int]:
        best_value, best_index = math.inf, None
        choices = itertools.islice(
            itertools.product(range(num_u), repeat=num_x * horizon), start, stop
        )
        for i, choice in enumerate(choices, start):
            actions = np.array(choice, dtype=int).reshape(horizon, num_x)
            value = _exact_objective(problem, cost, actions, objective)
            if best_index is None or value < best_value:
                best_value, best_index = value, i
        return best_value, best_index

    num_ranges = max(1, num_threads)
    bounds = np.linspace(0, num_policies, num_ranges + 1).astype(int)
    ranges = [(a, b) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
    if num_threads > 1:
        with ThreadPool(num_threads) as tp:
            results = tp.starmap(search, ranges)
    else:
        results = [search(a, b) for a, b in ranges]

    # Ranges are in index order, so keeping the first strict improvement keeps the
    # lowest index under ties
    best_value, best_index = results[0]
    for value, index in results[1:]:
        if value < best_value:
            best_value, best_index = value, index

    choice = next(
        itertools.islice(
            itertools.product(range(num_u), repeat=num_x * horizon), best_index, None
        )
    )
    actions = np.array(choice, dtype=int).reshape(horizon, num_x)
    values, q = policy_values(problem, cost, actions, objective)
    log.debug(
        "Exhaustive policy search",
        kind=str(objective),
        num_policies=num_policies,
        objective=best_value,
    )
    return OracleSolution(actions, values, q, float(best_value), objective)


def bellman_residual(
    problem: DiscreteProblem, cost: CostModel, solution: OracleSolution
) -> float:
    """Return the largest violation of the Bellman optimality recursion by the
    values of a solution, re-evaluated from scratch."""
    worst = abs(solution.values[-1] - cost.terminal).max()
    for t in range(problem.horizon):
        q = _q_values(problem, cost, t, solution.values[t + 1], solution.kind)
        with np.errstate(invalid="ignore"):
            diff = np.abs(q.min(axis=-1) - solution.values[t])
        diff = np.where(np.isnan(diff), 0.0, diff)
        worst = max(worst, diff.max())
    return float(worst)


@dataclass(frozen=True)
class Agreement:
    """The outcome of comparing a deterministic action map with an oracle.

    Args:
        max_regret: The largest one-step regret Q*(x, a) - V*(x) over (t, x).
        num_near_ties: The number of (t, x) excused because the two best oracle
            action values lie within the gap tolerance.
        passed: True if every (t, x) has regret within the tolerance or is excused.
    """

    max_regret: float
    num_near_ties: int
    passed: bool


def action_regret(solution: OracleSolution, actions: np.ndarray) -> np.ndarray:
    """Return the one-step regret of taking actions[t, x] instead of the oracle
    action, shape (T, X). States where every action has infinite value have zero
    regret."""
    actions = np.asarray(actions, dtype=int)
    chosen = np.take_along_axis(solution.q, actions[..., None], axis=-1)[..., 0]
    with np.errstate(invalid="ignore"):
        regret = chosen - solution.values[:-1]
    return np.where(np.isnan(regret), 0.0, regret)


def compare_actions(
    solution: OracleSolution,
    actions: np.ndarray,
    tolerance: float = 1e-6,
    gap_tolerance: float = 0.0,
) -> Agreement:
    """Compare a deterministic action map with an oracle solution.

    An action is accepted if its regret is at most the tolerance. When
    gap_tolerance is positive, an action in a state whose two best oracle values
    lie within gap_tolerance of each other is also accepted if its regret is below
    gap_tolerance.
    """
    regret = action_regret(solution, actions)
    exact = regret <= tolerance
    near_tie = (solution.gaps() <= gap_tolerance) & (regret < gap_tolerance)
    excused = ~exact & near_tie
    passed = bool(np.all(exact | near_tie))
    return Agreement(float(regret.max()), int(np.count_nonzero(excused)), passed)
