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

"""Data model for finite-horizon controlled Markov chains: the chain itself, its
cost tables and tabular (possibly uncertain) policies."""

from dataclasses import dataclass

import numpy as np
from structlog import get_logger

from npg_probctl.exception import ConfigurationError

log = get_logger(__name__)

ROW_TOLERANCE = 1e-12
"""Tolerance for the sum of a probability row."""


def _frozen(values, name: str, ndim: int) -> np.ndarray:
    try:
        a = np.array(values, dtype=float)
    except (TypeError, ValueError) as e:
        raise ConfigurationError(f"{name} is not numeric: {e}", path=name) from e
    if a.ndim != ndim:
        raise ConfigurationError(
            f"{name} must have {ndim} dimensions, but has {a.ndim} "
            f"(shape {a.shape})",
            path=name,
        )
    a.setflags(write=False)
    return a


def _check_stochastic(a: np.ndarray, name: str):
    if np.isnan(a).any() or (a < 0).any():
        raise ConfigurationError(
            f"{name} contains negative or NaN probabilities", path=name
        )
    sums = a.sum(axis=-1)
    bad = np.argwhere(np.abs(sums - 1) > ROW_TOLERANCE)
    if bad.size:
        index = tuple(int(i) for i in bad[0])
        raise ConfigurationError(
            f"{name} row {index} sums to {sums[index]!r}, not 1", path=name
        )


@dataclass(frozen=True, eq=False)
class DiscreteProblem:
    """A finite controlled Markov chain.

    Args:
        initial: The initial state distribution, shape (X,).
        transitions: The transition tables, shape (T, X, U, X), where
            transitions[t, x, u, y] is the probability of moving from state x to
            state y under action u at time t.
    """

    initial: np.ndarray
    transitions: np.ndarray

    def __post_init__(self):
        initial = _frozen(self.initial, "initial", 1)
        transitions = _frozen(self.transitions, "transitions", 4)
        object.__setattr__(self, "initial", initial)
        object.__setattr__(self, "transitions", transitions)

        num_t, num_x, num_u, num_y = transitions.shape
        if min(num_t, num_x, num_u) < 1:
            raise ConfigurationError(
                "The horizon and the numbers of states and actions must be positive",
                path="transitions",
            )
        if num_y != num_x or initial.shape[0] != num_x:
            raise ConfigurationError(
                f"Inconsistent numbers of states: initial {initial.shape[0]}, "
                f"transitions {transitions.shape}",
                path="transitions",
            )
        _check_stochastic(initial, "initial")
        _check_stochastic(transitions, "transitions")

    @property
    def num_states(self) -> int:
        return self.transitions.shape[1]

    @property
    def num_actions(self) -> int:
        return self.transitions.shape[2]

    @property
    def horizon(self) -> int:
        return self.transitions.shape[0]

    @property
    def is_deterministic(self) -> bool:
        """True if every transition row is a point mass."""
        return bool(np.all(np.isclose(self.transitions.max(axis=-1), 1.0)))

    @classmethod
    def time_invariant(
        cls, initial, transition, horizon: int
    ) -> "DiscreteProblem":
        """Return a problem repeating one (X, U, X) transition table for each step."""
        table = np.asarray(transition, dtype=float)
        return cls(initial, np.broadcast_to(table, (horizon, *table.shape)))

    def __repr__(self):
        return (
            f"<DiscreteProblem states={self.num_states} actions={self.num_actions} "
            f"horizon={self.horizon}>"
        )


@dataclass(frozen=True, eq=False)
class CostModel:
    """Stage and terminal costs of a controlled Markov chain.

    Costs are stored after multiplication by the scale factor sigma, which is kept
    only as metadata. Entries may be +inf to forbid a state or an action.

    Args:
        stage: Stage costs, shape (T, X, U).
        terminal: Terminal costs, shape (X,).
        sigma: The scale already applied to the costs.
    """

    stage: np.ndarray
    terminal: np.ndarray
    sigma: float = 1.0

    def __post_init__(self):
        stage = _frozen(self.stage, "stage_costs", 3)
        terminal = _frozen(self.terminal, "terminal_costs", 1)
        object.__setattr__(self, "stage", stage)
        object.__setattr__(self, "terminal", terminal)

        if not (np.isfinite(self.sigma) and self.sigma > 0):
            raise ConfigurationError(
                f"sigma must be positive and finite, but was {self.sigma!r}",
                path="sigma",
            )
        for name, a in (("stage_costs", stage), ("terminal_costs", terminal)):
            if np.isnan(a).any() or np.isneginf(a).any():
                raise ConfigurationError(
                    f"{name} must be finite or +inf", path=name
                )

    @classmethod
    def scaled(cls, stage, terminal, sigma: float = 1.0) -> "CostModel":
        """Return a cost model with sigma multiplied into every entry.

        The +inf sentinel is left unchanged by the scaling.
        """
        if not (np.isfinite(sigma) and sigma > 0):
            raise ConfigurationError(
                f"sigma must be positive and finite, but was {sigma!r}", path="sigma"
            )
        stage = np.asarray(stage, dtype=float)
        terminal = np.asarray(terminal, dtype=float)
        return cls(stage * sigma, terminal * sigma, sigma=sigma)

    @classmethod
    def zero(cls, problem: DiscreteProblem) -> "CostModel":
        t, x, u = problem.horizon, problem.num_states, problem.num_actions
        return cls(np.zeros((t, x, u)), np.zeros(x))

    @property
    def horizon(self) -> int:
        return self.stage.shape[0]

    def check(self, problem: DiscreteProblem):
        """Raise a ConfigurationError if the cost tables do not fit the problem."""
        expected = (problem.horizon, problem.num_states, problem.num_actions)
        if self.stage.shape != expected:
            raise ConfigurationError(
                f"stage_costs shape {self.stage.shape} does not match the problem "
                f"{expected}",
                path="stage_costs",
            )
        if self.terminal.shape != (problem.num_states,):
            raise ConfigurationError(
                f"terminal_costs shape {self.terminal.shape} does not match "
                f"{problem.num_states} states",
                path="terminal_costs",
            )


@dataclass(frozen=True, eq=False)
class TabularPolicy:
    """A time-varying conditional action distribution pi_t(u|x).

    Args:
        tables: Action probabilities, shape (T, X, U).
    """

    tables: np.ndarray

    def __post_init__(self):
        tables = _frozen(self.tables, "policy", 3)
        object.__setattr__(self, "tables", tables)
        _check_stochastic(tables, "policy")

    @property
    def horizon(self) -> int:
        return self.tables.shape[0]

    @property
    def num_states(self) -> int:
        return self.tables.shape[1]

    @property
    def num_actions(self) -> int:
        return self.tables.shape[2]

    def __getitem__(self, t: int) -> np.ndarray:
        return self.tables[t]

    @classmethod
    def uniform(cls, problem: DiscreteProblem) -> "TabularPolicy":
        shape = (problem.horizon, problem.num_states, problem.num_actions)
        return cls(np.full(shape, 1.0 / problem.num_actions))

    @classmethod
    def deterministic(cls, actions, num_actions: int) -> "TabularPolicy":
        """Return the point-mass policy choosing actions[t, x] in state x at time t."""
        actions = np.asarray(actions, dtype=int)
        if actions.ndim != 2:
            raise ConfigurationError("actions must have shape (T, X)", path="actions")
        if (actions < 0).any() or (actions >= num_actions).any():
            raise ConfigurationError(
                f"actions must lie in 0..{num_actions - 1}", path="actions"
            )
        return cls(np.eye(num_actions)[actions])

    @classmethod
    def normalized(cls, weights) -> "TabularPolicy":
        """Return a policy from non-negative weights, normalizing each row."""
        weights = np.asarray(weights, dtype=float)
        return cls(weights / weights.sum(axis=-1, keepdims=True))

    def check(self, problem: DiscreteProblem):
        """Raise a ConfigurationError if the policy does not fit the problem."""
        expected = (problem.horizon, problem.num_states, problem.num_actions)
        if self.tables.shape != expected:
            raise ConfigurationError(
                f"Policy shape {self.tables.shape} does not match the problem "
                f"{expected}",
                path="policy",
            )

    def sup_distance(self, other: "TabularPolicy") -> float:
        return float(np.max(np.abs(self.tables - other.tables)))


@dataclass(frozen=True)
class RandomSpec:
    """Parameters of a generated random discrete problem."""

    seed: int
    num_states: int
    num_actions: int
    horizon: int
    deterministic: bool = False
    sigma: float = 1.0
    concentration: float = 1.0
    """Dirichlet concentration of the generated transition rows."""

    def __post_init__(self):
        for name in ("num_states", "num_actions", "horizon"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be positive", path=name)


def random_problem(spec: RandomSpec) -> tuple[DiscreteProblem, CostModel]:
    """Generate a random problem with costs drawn from U[0, 1].

    Identical specs produce bit-identical problems.

    Args:
        spec: Sizes, seed and options.

    Returns:
        The problem and its costs.
    """
    rng = np.random.default_rng(spec.seed)
    x, u, t = spec.num_states, spec.num_actions, spec.horizon

    initial = rng.dirichlet(np.full(x, spec.concentration))
    if spec.deterministic:
        successors = rng.integers(0, x, size=(t, x, u))
        transitions = np.eye(x)[successors]
    else:
        transitions = rng.dirichlet(np.full(x, spec.concentration), size=(t, x, u))
    # Row sums may drift from one in the last place
    initial = initial / initial.sum()
    transitions = transitions / transitions.sum(axis=-1, keepdims=True)

    stage = rng.uniform(0.0, 1.0, size=(t, x, u))
    terminal = rng.uniform(0.0, 1.0, size=x)

    log.debug("Generated random problem", spec=spec)
    return DiscreteProblem(initial, transitions), CostModel.scaled(
        stage, terminal, spec.sigma
    )


def random_policy(
    problem: DiscreteProblem, rng: np.random.Generator, concentration: float = 1.0
) -> TabularPolicy:
    """Draw a random full-support policy for a problem."""
    shape = (problem.horizon, problem.num_states)
    weights = rng.dirichlet(np.full(problem.num_actions, concentration), size=shape)
    # Keep every action possible so that divergences to the prior stay finite
    weights = weights + 1e-6
    return TabularPolicy.normalized(weights)
