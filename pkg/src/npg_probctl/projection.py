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

"""Backward recursions for the policies closest to the desired distribution.

The three projections differ only in how the value of the successor state is
averaged over the transition model:

- I-projection: the expectation E[V].
- M-projection: the soft minimum -log E[exp(-V)].
- Renyi projection of order alpha: -(1 / alpha) log E[exp(-alpha V)], which
  approaches the I-projection as alpha -> 0 and the M-projection as alpha -> 1.

In every case the state value is V_t = -log E_prior[exp(-Q_t)] and the projected
policy is prior * exp(V_t - Q_t).
"""

from dataclasses import dataclass
from enum import Enum, unique

import numpy as np
from structlog import get_logger

from npg_probctl.exception import DegenerateError, DomainError, NumericError
from npg_probctl.model import CostModel, DiscreteProblem, TabularPolicy
from npg_probctl.trajectory import expect, soft_expect

log = get_logger(__name__)


@unique
class Variant(Enum):
    I = "i"
    M = "m"
    RENYI = "renyi"

    def __str__(self):
        return self.name


@dataclass(frozen=True)
class ProjectionKind:
    """The divergence a backward pass projects with.

    The I and M variants are the alpha -> 0 and alpha -> 1 limits of the Renyi
    family and are computed in closed form; the Renyi variant only accepts alpha
    strictly inside (0, 1).
    """

    variant: Variant
    alpha: float | None = None

    def __post_init__(self):
        if self.variant != Variant.RENYI:
            if self.alpha is not None:
                raise DomainError(
                    f"Projection {self.variant} takes no alpha", observed=self.alpha
                )
            return

        alpha = self.alpha
        if alpha is None or not 0 < alpha < 1:
            if alpha is not None and alpha <= 0:
                hint = "use the I-projection (kind i) for the alpha -> 0 limit"
            elif alpha is not None and alpha >= 1:
                hint = "use the M-projection (kind m) for the alpha -> 1 limit"
            else:
                hint = "supply an alpha strictly inside (0, 1)"
            raise DomainError(
                f"The Renyi order must lie strictly inside (0, 1), but was "
                f"{alpha!r}; {hint}",
                observed=alpha,
                hint=hint,
            )

    @classmethod
    def i(cls) -> "ProjectionKind":
        return cls(Variant.I)

    @classmethod
    def m(cls) -> "ProjectionKind":
        return cls(Variant.M)

    @classmethod
    def renyi(cls, alpha: float) -> "ProjectionKind":
        return cls(Variant.RENYI, float(alpha))

    @classmethod
    def parse(cls, name: str, alpha: float | None = None) -> "ProjectionKind":
        """Return a kind from its name (i, m or renyi) and an optional alpha."""
        try:
            variant = Variant(name.lower())
        except ValueError as e:
            raise DomainError(
                f"Unknown projection kind {name!r}; expected one of "
                f"{', '.join(v.value for v in Variant)}",
                observed=name,
            ) from e
        if variant == Variant.RENYI:
            return cls(variant, None if alpha is None else float(alpha))
        return cls(variant)

    def successor_value(self, tau: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Return the averaged successor value for each (x, u) of a transition table
        tau of shape (X, U, X), given successor values v of shape (X,)."""
        match self.variant:
            case Variant.I:
                return expect(tau, v)
            case Variant.M:
                return soft_expect(tau, v)
            case _:
                return soft_expect(tau, self.alpha * v) / self.alpha

    def __str__(self):
        if self.variant == Variant.RENYI:
            return f"Renyi({self.alpha})"
        return str(self.variant)


@dataclass(frozen=True, eq=False)
class ValueTables:
    """Value tables from a backward pass.

    Args:
        Q: State-action values, shape (T, X, U).
        V: State values, shape (T + 1, X), with V[T] equal to the terminal cost.
        kind: The projection that produced the tables.
    """

    Q: np.ndarray
    V: np.ndarray
    kind: ProjectionKind

    def initial_value(self, initial: np.ndarray) -> float:
        """Return -log E_{p(x_0)}[exp(-V_0)], the value at the initial
        distribution."""
        return float(soft_expect(initial, self.V[0]))


def _check_finite(a: np.ndarray, t: int, name: str):
    bad = np.argwhere(np.isnan(a) | np.isneginf(a))
    if bad.size:
        x = int(bad[0][0])
        raise NumericError(f"Non-finite {name} at t={t}, x={x}", t=t, x=x)


def policy_from_values(prior: TabularPolicy, values: ValueTables) -> TabularPolicy:
    """Return the policy prior * exp(V - Q), with rows renormalized.

    Rows where V is +inf, that is where every action the prior allows has infinite
    cost, keep the prior row.

    Args:
        prior: The prior the values were computed against.
        values: The value tables.

    Returns:
        A new policy.
    """
    rho = prior.tables
    tables = np.empty_like(rho)
    for t in range(rho.shape[0]):
        v = values.V[t][:, None]
        q = values.Q[t]
        _check_finite(values.V[t], t, "state value")

        forbidden = np.isinf(values.V[t])
        with np.errstate(invalid="ignore", over="ignore"):
            weights = np.where(rho[t] > 0, rho[t] * np.exp(v - q), 0.0)
        weights[forbidden] = rho[t][forbidden]
        if np.isnan(weights).any():
            x = int(np.argwhere(np.isnan(weights))[0][0])
            raise NumericError(f"Non-finite policy weight at t={t}, x={x}", t=t, x=x)

        sums = weights.sum(axis=-1, keepdims=True)
        if (sums == 0).any():
            x = int(np.argwhere(sums[:, 0] == 0)[0][0])
            raise DegenerateError(f"Zero policy row mass at t={t}, x={x}", t=t, x=x)
        tables[t] = weights / sums

    return TabularPolicy(tables)


def backward_pass(
    problem: DiscreteProblem,
    cost: CostModel,
    prior: TabularPolicy,
    kind: ProjectionKind,
) -> tuple[ValueTables, TabularPolicy]:
    """Compute the projection of the desired distribution onto the closed-loop
    distributions of the problem.

    Starting with V_T = r_T, for t = T - 1 down to 0:

        Q_t = r_t + phi(V_{t+1})
        V_t = -log E_prior[exp(-Q_t)]

    where phi averages over the transition model as the kind prescribes.

    Args:
        problem: The controlled Markov chain.
        cost: The costs.
        prior: The prior policy.
        kind: The projection.

    Returns:
        The value tables and the projected policy.
    """
    cost.check(problem)
    prior.check(problem)

    horizon = problem.horizon
    q = np.empty((horizon, problem.num_states, problem.num_actions))
    v = np.empty((horizon + 1, problem.num_states))
    v[horizon] = cost.terminal

    for t in reversed(range(horizon)):
        q[t] = cost.stage[t] + kind.successor_value(problem.transitions[t], v[t + 1])
        _check_finite(q[t], t, "state-action value")
        v[t] = soft_expect(prior[t], q[t])
        _check_finite(v[t], t, "state value")

        if np.isinf(v[t]).any():
            log.warning(
                "Every action is forbidden; keeping the prior",
                t=t,
                states=np.flatnonzero(np.isinf(v[t])).tolist(),
                kind=str(kind),
            )
        log.debug("Backward pass step", t=t, kind=str(kind))

    values = ValueTables(q, v, kind)
    if np.isinf(values.initial_value(problem.initial)):
        raise DegenerateError(
            "Every initial state has infinite value; the desired distribution "
            "does not exist",
            t=0,
        )

    return values, policy_from_values(prior, values)
