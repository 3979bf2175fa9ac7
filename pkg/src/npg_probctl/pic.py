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

"""Path-integral estimates of the M-projection and its Bayesian smoothing form.

The M-projection value of a state is -log E[exp(-cost-to-go)] under the prior
closed loop, so it can be estimated from prior rollouts alone. The same policy is
the action posterior of a hidden Markov model whose binary observations have
likelihood exp(-r_t), which exact_smoothing computes with a log-space backward
filter.
"""

from dataclasses import dataclass
from multiprocessing.pool import ThreadPool
from typing import Callable

import numpy as np
from scipy.special import logsumexp
from structlog import get_logger

from npg_probctl.exception import ConfigurationError, DegenerateError
from npg_probctl.model import CostModel, DiscreteProblem, TabularPolicy
from npg_probctl.projection import ProjectionKind, backward_pass
from npg_probctl.trajectory import (
    DEFAULT_ENUMERATION_CAP,
    desired_distribution,
    enumerate_trajectories,
    reachable_states,
    total_variation,
)

log = get_logger(__name__)

DEFAULT_CHUNK_SIZE = 4096


@dataclass(frozen=True)
class McEstimate:
    """A Monte-Carlo estimate of -log E[exp(-C)] with its delta-method standard
    error."""

    value: float
    std_err: float
    n_samples: int
    seed: int
    t: int = 0
    x: int = 0


def _stream(seed: int, *key: int) -> np.random.Generator:
    """Return an independent counter-based random stream for a key."""
    return np.random.Generator(
        np.random.Philox(np.random.SeedSequence(seed, spawn_key=key))
    )


def _sample_categorical(rng: np.random.Generator, probs: np.ndarray) -> np.ndarray:
    """Draw one index per row of a (N, K) probability array.

    Zero-probability entries are never drawn.
    """
    c = np.cumsum(probs, axis=1)
    c = c / c[:, -1:]
    r = rng.random(probs.shape[0])
    return (c <= r[:, None]).sum(axis=1)


def _rollout_costs(
    problem: DiscreteProblem,
    prior: TabularPolicy,
    cost: CostModel,
    rng: np.random.Generator,
    n: int,
    t: int,
    x: int,
    first_action: int | None = None,
) -> np.ndarray:
    """Return the cost-to-go of n prior rollouts starting in state x at time t.

    If first_action is given, the action at time t is forced.
    """
    states = np.full(n, x)
    total = np.zeros(n)
    for s in range(t, problem.horizon):
        if s == t and first_action is not None:
            actions = np.full(n, first_action)
        else:
            actions = _sample_categorical(rng, prior[s][states])
        total = total + cost.stage[s][states, actions]
        states = _sample_categorical(rng, problem.transitions[s][states, actions])
    return total + cost.terminal[states]


def _chunked(
    fn: Callable[[int, int], np.ndarray],
    n_samples: int,
    chunk_size: int,
    num_threads: int,
) -> np.ndarray:
    """Evaluate fn(chunk_index, chunk_length) over the chunks of a sample and
    concatenate the results in chunk order."""
    starts = range(0, n_samples, chunk_size)
    args = [(i, min(chunk_size, n_samples - s)) for i, s in enumerate(starts)]
    if num_threads > 1 and len(args) > 1:
        with ThreadPool(num_threads) as tp:
            results = tp.starmap(fn, args)
    else:
        results = [fn(*a) for a in args]
    return np.concatenate(results)


def _soft_mean(costs: np.ndarray) -> tuple[float, float]:
    """Return -log E[exp(-C)] over a sample of costs C and its delta-method standard
    error."""
    n = costs.shape[0]
    finite = np.isfinite(costs)
    if not finite.any():
        return np.inf, np.inf
    shift = costs[finite].min()
    w = np.exp(-(costs - shift))
    mean = w.mean()
    std_err = float(w.std(ddof=1) / (np.sqrt(n) * mean)) if n > 1 else 0.0
    return float(shift - np.log(mean)), std_err


def _validate(problem, prior, cost, n_samples):
    cost.check(problem)
    prior.check(problem)
    if n_samples < 1:
        raise ConfigurationError(
            f"n_samples must be positive, but was {n_samples}", path="n_samples"
        )


def pic_value_mc(
    problem: DiscreteProblem,
    prior: TabularPolicy,
    cost: CostModel,
    state: int,
    t: int,
    n_samples: int,
    seed: int,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
    num_threads: int = 1,
) -> McEstimate:
    """Estimate the M-projection value V_t(x) = -log E[exp(-cost-to-go)] from
    rollouts of the prior closed loop.

    Samples are drawn in chunks, each from its own random stream keyed by the seed
    and the chunk index, so the estimate depends only on (seed, n_samples,
    chunk_size) and not on the number of threads.

    Args:
        problem: The controlled Markov chain.
        prior: The prior policy.
        cost: The costs.
        state: The starting state x.
        t: The starting time, from 0 to T inclusive.
        n_samples: The number of rollouts.
        seed: The random seed.
        chunk_size: The number of rollouts drawn from each random stream.
        num_threads: The number of threads drawing chunks.

    Returns:
        The estimate.
    """
    _validate(problem, prior, cost, n_samples)
    if not 0 <= t <= problem.horizon:
        raise ConfigurationError(f"t must lie in 0..{problem.horizon}", path="t")
    if not 0 <= state < problem.num_states:
        raise ConfigurationError(
            f"state must lie in 0..{problem.num_states - 1}", path="state"
        )

    if t == problem.horizon:
        return McEstimate(float(cost.terminal[state]), 0.0, n_samples, seed, t, state)

    def fn(chunk: int, n: int) -> np.ndarray:
        return _rollout_costs(problem, prior, cost, _stream(seed, chunk), n, t, state)

    costs = _chunked(fn, n_samples, chunk_size, num_threads)
    value, std_err = _soft_mean(costs)
    if not np.isfinite(value):
        raise DegenerateError(
            "All path weights are zero; every rollout has infinite cost", t=t, x=state
        )

    estimate = McEstimate(value, std_err, n_samples, seed, t, state)
    log.info("Estimated path-integral value", estimate=estimate)
    return estimate


def pic_policy_mc(
    problem: DiscreteProblem,
    prior: TabularPolicy,
    cost: CostModel,
    n_samples: int,
    seed: int,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
    num_threads: int = 1,
) -> TabularPolicy:
    """Estimate the M-projection policy from rollouts.

    For each (t, x, u) with prior mass, n_samples rollouts start in x at time t with
    the first action forced to u, estimating w = E[exp(-r_t(x, u) - cost-to-go)].
    The policy is prior * w, normalized over u. States that cannot be reached and
    have zero weight on every action keep the prior row.

    Args:
        problem: The controlled Markov chain.
        prior: The prior policy.
        cost: The costs.
        n_samples: The number of rollouts per (t, x, u).
        seed: The random seed.
        chunk_size: The number of rollouts drawn from each random stream.
        num_threads: The number of threads drawing chunks.

    Returns:
        The estimated policy.
    """
    _validate(problem, prior, cost, n_samples)
    reachable = reachable_states(problem)
    tables = np.empty_like(prior.tables)

    for t in range(problem.horizon):
        for x in range(problem.num_states):
            log_w = np.full(problem.num_actions, -np.inf)
            for u in np.flatnonzero(prior[t][x] > 0):

                def fn(chunk: int, n: int, u=int(u)) -> np.ndarray:
                    rng = _stream(seed, t, x, u, chunk)
                    return _rollout_costs(problem, prior, cost, rng, n, t, x, u)

                costs = _chunked(fn, n_samples, chunk_size, num_threads)
                log_w[u] = -_soft_mean(costs)[0]

            with np.errstate(divide="ignore"):
                logits = np.log(prior[t][x]) + log_w
            norm = logsumexp(logits)
            if not np.isfinite(norm):
                if reachable[t, x]:
                    raise DegenerateError(
                        f"All path weights are zero at t={t}, x={x}", t=t, x=x
                    )
                tables[t, x] = prior[t][x]
                continue
            row = np.exp(logits - norm)
            tables[t, x] = row / row.sum()

        log.debug("Estimated policy step", t=t, n_samples=n_samples)

    return TabularPolicy(tables)


def closed_loop_equivalence_check(
    problem: DiscreteProblem,
    prior: TabularPolicy,
    cost: CostModel,
    cap: float = DEFAULT_ENUMERATION_CAP,
) -> float:
    """Return the total-variation distance between the normalized desired
    distribution and the exact closed loop of the M-projection policy.

    The two coincide, so the distance is zero up to rounding.
    """
    desired = desired_distribution(problem, prior, cost, cap=cap)
    _, policy = backward_pass(problem, cost, prior, ProjectionKind.m())
    closed_loop = enumerate_trajectories(problem, policy, cost, cap=cap)
    distance = total_variation(desired, closed_loop)
    log.debug("Closed-loop equivalence", distance=distance)
    return distance


def _log(a: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(a)


def _lse(a: np.ndarray, b: np.ndarray | None = None, axis=-1) -> np.ndarray:
    """Return logsumexp, giving -inf where every weighted term is zero."""
    with np.errstate(divide="ignore", invalid="ignore"):
        return logsumexp(a, b=b, axis=axis)


def _backward_filter(
    problem: DiscreteProblem, prior: TabularPolicy, cost: CostModel
) -> tuple[np.ndarray, np.ndarray]:
    """Return the log backward messages log beta_t(x, u), shape (T, X, U), and
    log beta_t(x), shape (T + 1, X).

    beta_t(x, u) is the likelihood of the observations z_t..z_T = 1 given x_t and
    u_t, and beta_t(x) its average over the prior. Messages of states from which
    every continuation is forbidden are -inf.
    """
    horizon, num_x, num_u = problem.horizon, problem.num_states, problem.num_actions
    log_beta_xu = np.empty((horizon, num_x, num_u))
    log_beta_x = np.empty((horizon + 1, num_x))
    log_beta_x[horizon] = -cost.terminal

    for t in reversed(range(horizon)):
        tau = problem.transitions[t]
        successor = _lse(log_beta_x[t + 1], b=tau)
        log_beta_xu[t] = -cost.stage[t] + successor
        log_beta_x[t] = _lse(log_beta_xu[t], b=prior[t])

    return log_beta_xu, log_beta_x


def _log_evidence(problem: DiscreteProblem, log_beta_x: np.ndarray) -> float:
    evidence = float(_lse(log_beta_x[0], b=problem.initial))
    if evidence == -np.inf:
        raise DegenerateError(
            "The observations have zero likelihood under the prior", t=0
        )
    return evidence


def exact_smoothing(
    problem: DiscreteProblem, prior: TabularPolicy, cost: CostModel
) -> TabularPolicy:
    """Return the action posterior p(u_t | x_t, z = 1) of the hidden Markov model
    whose observations z_t = 1 have likelihood proportional to exp(-r_t).

    The backward messages beta_t(x, u) = exp(-r_t) E[beta_{t+1}] are propagated in
    log space, starting from log beta_T = -r_T. Each row is normalized in log space,
    so costs of any magnitude leave the posterior finite.

    A state whose every continuation has zero likelihood carries no posterior mass
    and keeps the prior row, as the M-projection does where its value is infinite.

    Args:
        problem: The controlled Markov chain.
        prior: The prior policy.
        cost: The costs.

    Returns:
        The smoothing policy, equal to the M-projection policy.

    Raises:
        DegenerateError: If the observations have zero likelihood.
    """
    cost.check(problem)
    prior.check(problem)

    log_beta_xu, log_beta_x = _backward_filter(problem, prior, cost)
    _log_evidence(problem, log_beta_x)

    log_weights = _log(prior.tables) + log_beta_xu
    norms = _lse(log_weights)[..., None]
    dead = np.isneginf(norms)
    if dead.any():
        log.debug(
            "States with no continuation keep the prior",
            num_rows=int(np.count_nonzero(dead)),
        )
    posterior = np.exp(log_weights - np.where(dead, 0.0, norms))
    tables = np.where(dead, prior.tables, posterior)
    return TabularPolicy(tables / tables.sum(axis=-1, keepdims=True))


def smoothing_marginals(
    problem: DiscreteProblem, prior: TabularPolicy, cost: CostModel
) -> np.ndarray:
    """Return the smoothed state marginals p(x_t | z = 1) for t = 0..T.

    Forward messages alpha_t(x) = p(x_t, z_0..z_{t-1} = 1) are combined with the
    backward messages, both in log space and normalized at each step.

    Returns:
        An array of shape (T + 1, X) whose rows are distributions.
    """
    cost.check(problem)
    prior.check(problem)
    _, log_beta_x = _backward_filter(problem, prior, cost)
    _log_evidence(problem, log_beta_x)

    horizon = problem.horizon
    log_alpha = np.empty((horizon + 1, problem.num_states))
    log_alpha[0] = _log(problem.initial)
    for t in range(horizon):
        joint = log_alpha[t][:, None] + _log(prior[t]) - cost.stage[t]
        tau = problem.transitions[t]
        nxt = _lse(joint[..., None], b=tau, axis=(0, 1))
        total = _lse(nxt)
        if total == -np.inf:
            raise DegenerateError(
                "The observations have zero likelihood under the prior", t=t
            )
        log_alpha[t + 1] = nxt - total

    log_marginals = log_alpha + log_beta_x
    return np.exp(log_marginals - _lse(log_marginals)[:, None])
