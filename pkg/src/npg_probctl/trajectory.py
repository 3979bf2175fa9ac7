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

"""Exact trajectory distributions, divergences between them and the expected-cost
(A) and exponential-utility (B) objectives.

A trajectory is the sequence (x_0, u_0, x_1, u_1, ..., x_T). The support of every
distribution built here is the set of dynamically feasible trajectories, those with
p(x_0) > 0 and non-zero transition probabilities, over all actions. The support is
therefore independent of the policy, which lets any two distributions of the same
problem be compared entry by entry.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import entr, logsumexp, rel_entr
from structlog import get_logger

from npg_probctl.exception import (
    CapacityError,
    ConfigurationError,
    DegenerateError,
    DomainError,
)
from npg_probctl.model import CostModel, DiscreteProblem, TabularPolicy

log = get_logger(__name__)

DEFAULT_ENUMERATION_CAP = 10_000_000


@dataclass(frozen=True, eq=False)
class TrajectoryDistribution:
    """An exhaustively enumerated trajectory distribution.

    Args:
        paths: Integer array of shape (N, 2T + 1). Row i is the trajectory
            (x_0, u_0, ..., x_T), rows in lexicographic order.
        probabilities: Probability of each trajectory, shape (N,).
        costs: Total cost R of each trajectory, shape (N,).
        exact: True if the distribution was computed by exact enumeration.
    """

    paths: np.ndarray
    probabilities: np.ndarray
    costs: np.ndarray
    exact: bool = True

    def __len__(self):
        return self.probabilities.shape[0]

    @property
    def horizon(self) -> int:
        return (self.paths.shape[1] - 1) // 2

    def states(self, t: int) -> np.ndarray:
        """Return the state at time t of every trajectory."""
        return self.paths[:, 2 * t]

    def actions(self, t: int) -> np.ndarray:
        """Return the action at time t of every trajectory."""
        return self.paths[:, 2 * t + 1]

    def expectation(self, values: np.ndarray) -> float:
        """Return the expectation of per-trajectory values, ignoring values on
        zero-probability trajectories."""
        return float(expect(self.probabilities, values))

    def state_marginal(self, t: int, num_states: int) -> np.ndarray:
        """Return the marginal distribution of the state at time t."""
        return np.bincount(
            self.states(t), weights=self.probabilities, minlength=num_states
        )


@dataclass(frozen=True, eq=False)
class DesiredDistribution(TrajectoryDistribution):
    """The prior closed-loop distribution tilted by exp(-R) and renormalized.

    Args:
        eta: The normalizer, the sum over the support of p(xi; rho) exp(-R(xi)).
        log_eta: The logarithm of eta, kept separately because eta may underflow.
        truncated: True if part of the feasible support received zero weight
            because its cost is +inf.
    """

    eta: float = 1.0
    log_eta: float = 0.0
    truncated: bool = False


def expect(weights: np.ndarray, values: np.ndarray, axis=-1) -> np.ndarray:
    """Return the sum of weights * values along an axis, where zero weights
    contribute nothing even if the value is infinite."""
    weights, values = np.broadcast_arrays(weights, values)
    return np.where(weights > 0, weights * values, 0.0).sum(axis=axis)


def soft_expect(weights: np.ndarray, values: np.ndarray, axis=-1) -> np.ndarray:
    """Return -log sum(weights * exp(-values)) along an axis, using max-shift
    stabilization.

    Rows where every weighted value is +inf give +inf.
    """
    weights, values = np.broadcast_arrays(weights, values)
    with np.errstate(divide="ignore", invalid="ignore"):
        return -logsumexp(-values, b=weights, axis=axis)


def support_size(problem: DiscreteProblem) -> float:
    """Return the number of dynamically feasible trajectories of a problem without
    enumerating them.

    The count is returned as a float because it may be astronomically large.
    """
    feasible = (problem.transitions > 0).astype(float)
    count = np.ones(problem.num_states)
    for t in reversed(range(problem.horizon)):
        count = (feasible[t] @ count).sum(axis=-1)
    return float(count[problem.initial > 0].sum())


def reachable_states(problem: DiscreteProblem) -> np.ndarray:
    """Return a boolean array of shape (T + 1, X) marking the states that some
    sequence of actions reaches with non-zero probability."""
    reachable = np.zeros((problem.horizon + 1, problem.num_states), dtype=bool)
    reachable[0] = problem.initial > 0
    for t in range(problem.horizon):
        successors = problem.transitions[t][reachable[t]] > 0
        reachable[t + 1] = successors.reshape(-1, problem.num_states).any(axis=0)
    return reachable


def enumerate_trajectories(
    problem: DiscreteProblem,
    policy: TabularPolicy,
    cost: CostModel | None = None,
    cap: float = DEFAULT_ENUMERATION_CAP,
) -> TrajectoryDistribution:
    """Enumerate the closed-loop trajectory distribution of a policy.

    Args:
        problem: The controlled Markov chain.
        policy: The policy closing the loop.
        cost: Costs to total along each trajectory. If None, all costs are zero.
        cap: The largest support that may be enumerated.

    Returns:
        The exact distribution, in lexicographic order of (x_0, u_0, ..., x_T).
    """
    policy.check(problem)
    if cost is None:
        cost = CostModel.zero(problem)
    cost.check(problem)

    size = support_size(problem)
    if size > cap:
        raise CapacityError(
            f"The support of {size:.3g} trajectories exceeds the enumeration cap",
            observed=size,
            limit=cap,
        )

    start = np.flatnonzero(problem.initial > 0)
    paths = start[:, None]
    probabilities = problem.initial[start]
    costs = np.zeros(start.shape[0])

    for t in range(problem.horizon):
        x = paths[:, -1]
        tau = problem.transitions[t][x]  # (N, U, X)
        # np.nonzero yields indices in row-major order, which keeps the expansion
        # lexicographic
        n, u, y = np.nonzero(tau > 0)
        parent = x[n]
        paths = np.column_stack([paths[n], u, y])
        probabilities = probabilities[n] * policy[t][parent, u] * tau[n, u, y]
        costs = costs[n] + cost.stage[t][parent, u]

    costs = costs + cost.terminal[paths[:, -1]]
    log.debug(
        "Enumerated trajectories",
        num_trajectories=probabilities.shape[0],
        horizon=problem.horizon,
    )
    return TrajectoryDistribution(paths, probabilities, costs)


def desired_distribution(
    problem: DiscreteProblem,
    prior: TabularPolicy,
    cost: CostModel,
    cap: float = DEFAULT_ENUMERATION_CAP,
) -> DesiredDistribution:
    """Return the desired distribution, proportional to p(xi; prior) exp(-R(xi)).

    Trajectories with +inf cost receive weight exactly zero. If that removes part of
    the feasible support, the distribution is normalized over what remains and
    marked as truncated.

    Args:
        problem: The controlled Markov chain.
        prior: The prior policy.
        cost: The costs.
        cap: The largest support that may be enumerated.

    Returns:
        The normalized desired distribution with its normalizer.
    """
    dist = enumerate_trajectories(problem, prior, cost, cap=cap)
    p, r = dist.probabilities, dist.costs

    log_eta = -float(soft_expect(p, r))
    if not np.isfinite(log_eta):
        raise DegenerateError(
            "Every trajectory of the prior closed loop has infinite cost; "
            "the desired distribution does not exist"
        )
    with np.errstate(over="ignore", under="ignore"):
        weights = np.where(p > 0, p * np.exp(-(r + log_eta)), 0.0)
    weights = weights / weights.sum()

    truncated = bool(np.any((p > 0) & np.isinf(r)))
    if truncated:
        log.warning(
            "Desired distribution normalized over the finite-cost support",
            num_removed=int(np.count_nonzero((p > 0) & np.isinf(r))),
        )

    return DesiredDistribution(
        dist.paths,
        weights,
        r,
        eta=float(np.exp(log_eta)),
        log_eta=log_eta,
        truncated=truncated,
    )


def _check_aligned(p: TrajectoryDistribution, q: TrajectoryDistribution):
    if p.paths.shape != q.paths.shape or not np.array_equal(p.paths, q.paths):
        raise ConfigurationError(
            "Distributions must share the same support enumeration order"
        )


def kl(p: TrajectoryDistribution, q: TrajectoryDistribution) -> float:
    """Return the relative entropy D[p || q].

    Returns +inf, with a warning, if q is zero somewhere p is not.
    """
    _check_aligned(p, q)
    value = float(rel_entr(p.probabilities, q.probabilities).sum())
    if np.isinf(value):
        log.warning("Relative entropy is infinite; q vanishes on the support of p")
        return np.inf
    # Cancellation may leave a tiny negative value
    return max(value, 0.0)


def renyi(
    p: TrajectoryDistribution, q: TrajectoryDistribution, alpha: float
) -> float:
    """Return the Renyi divergence of order alpha,
    (1 / (alpha (alpha - 1))) log sum p^alpha q^(1 - alpha).

    As alpha tends to 1 this tends to D[p || q] and as alpha tends to 0 it tends to
    D[q || p]; those limits are computed by kl.

    Args:
        p: The first distribution.
        q: The second distribution.
        alpha: The order, strictly between 0 and 1.
    """
    if not 0 < alpha < 1:
        raise DomainError(
            f"The Renyi order must lie strictly inside (0, 1), but was {alpha!r}",
            observed=alpha,
            hint="use kl(q, p) for the alpha -> 0 limit and kl(p, q) for alpha -> 1",
        )
    _check_aligned(p, q)

    both = (p.probabilities > 0) & (q.probabilities > 0)
    if not both.any():
        return np.inf
    log_terms = alpha * np.log(p.probabilities[both]) + (1 - alpha) * np.log(
        q.probabilities[both]
    )
    value = float(logsumexp(log_terms) / (alpha * (alpha - 1)))
    return max(value, 0.0)


def total_variation(p: TrajectoryDistribution, q: TrajectoryDistribution) -> float:
    _check_aligned(p, q)
    return float(0.5 * np.abs(p.probabilities - q.probabilities).sum())


def entropy(p: TrajectoryDistribution) -> float:
    """Return the Shannon entropy -sum p log p of a trajectory distribution."""
    return float(entr(p.probabilities).sum())


def log_policy(dist: TrajectoryDistribution, policy: TabularPolicy) -> np.ndarray:
    """Return sum_t log pi_t(u_t | x_t) for every trajectory.

    Trajectories the policy cannot produce get -inf.
    """
    total = np.zeros(len(dist))
    with np.errstate(divide="ignore"):
        for t in range(dist.horizon):
            total = total + np.log(policy[t][dist.states(t), dist.actions(t)])
    return total


def objectives(
    problem: DiscreteProblem,
    policy: TabularPolicy,
    cost: CostModel,
    cap: float = DEFAULT_ENUMERATION_CAP,
) -> tuple[float, float]:
    """Return the expected cost A = E[R] and the exponential-utility objective
    B = -log E[exp(-R)] of a policy, by exact enumeration.

    Args:
        problem: The controlled Markov chain.
        policy: The policy to evaluate.
        cost: The costs, with any scale already applied.
        cap: The largest support that may be enumerated.

    Returns:
        The pair (A, B).
    """
    dist = enumerate_trajectories(problem, policy, cost, cap=cap)
    a = dist.expectation(dist.costs)
    b = float(soft_expect(dist.probabilities, dist.costs))
    return a, b


def evaluate_objectives(
    problem: DiscreteProblem, policy: TabularPolicy, cost: CostModel
) -> tuple[float, float]:
    """Return the objectives (A, B) of a policy by backward policy evaluation.

    This gives the same values as objectives() without enumerating the support.
    """
    policy.check(problem)
    cost.check(problem)

    va = vb = cost.terminal
    for t in reversed(range(problem.horizon)):
        tau = problem.transitions[t]
        qa = cost.stage[t] + expect(tau, va)
        qb = cost.stage[t] + soft_expect(tau, vb)
        va = expect(policy[t], qa)
        vb = soft_expect(policy[t], qb)

    a = float(expect(problem.initial, va))
    b = float(soft_expect(problem.initial, vb))
    return a, b


def log_likelihood(
    problem: DiscreteProblem, policy: TabularPolicy, cost: CostModel
) -> float:
    """Return log p(z = 1; policy) for artificial optimality observations with
    p(z_t = 1 | x_t, u_t) proportional to exp(-r_t(x_t, u_t)).

    Maximizing this likelihood is the same problem as minimizing B.
    """
    return -evaluate_objectives(problem, policy, cost)[1]
