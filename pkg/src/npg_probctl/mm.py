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

"""Majorize-minimize fixed-point iterations over tabular policies.

Projecting the desired distribution of the current policy and feeding the result
back in as the next prior drives the expected cost A downhill when the projection
is the I-projection (SOC mode) and the exponential-utility objective B downhill
when it is the M-projection (RSOC mode). The EM mode forms the same M-projection
step as the smoothing posterior of the optimality observations.

The module also provides the decompositions that prove those descent properties,
in a form that can be checked numerically on any set of probe policies.
"""

import math
from dataclasses import dataclass, field
from enum import Enum, unique

import numpy as np
from structlog import get_logger

from npg_probctl.config import SolverConfig
from npg_probctl.exception import ConfigurationError, ConsistencyError
from npg_probctl.model import CostModel, DiscreteProblem, TabularPolicy
from npg_probctl.pic import exact_smoothing
from npg_probctl.projection import ProjectionKind, backward_pass
from npg_probctl.trajectory import (
    DEFAULT_ENUMERATION_CAP,
    desired_distribution,
    enumerate_trajectories,
    evaluate_objectives,
    kl,
    log_policy,
    objectives,
    support_size,
)

log = get_logger(__name__)

MONITOR_TOLERANCE = 1e-10


@unique
class Mode(Enum):
    """The objective an MM iteration minimizes."""

    SOC = "soc"
    """Expected cost A, by repeated I-projection."""
    RSOC = "rsoc"
    """Exponential utility B, by repeated M-projection."""
    EM = "em"
    """Exponential utility B, by repeated exact smoothing."""

    def __str__(self):
        return self.value


@unique
class Init(Enum):
    UNIFORM = "uniform"
    CUSTOM = "custom"


@dataclass(frozen=True)
class MMConfig:
    """Stopping rules and initialization of an MM iteration.

    The iteration has converged when both the sup-norm policy change and the change
    in the monitored objective fall below their tolerances.
    """

    max_iters: int = 500
    tol_policy: float = 1e-9
    tol_objective: float = 1e-12
    init: Init = Init.UNIFORM
    init_policy: TabularPolicy | None = field(default=None, compare=False)
    descent_slack: float = 1e-10
    exact_monitor_cap: float = 1_000_000
    mass_tol: float = 1e-6

    def __post_init__(self):
        if self.max_iters < 1:
            raise ConfigurationError("max_iters must be at least 1", path="max_iters")
        if not (self.tol_policy > 0 and self.tol_objective > 0):
            raise ConfigurationError("Tolerances must be positive", path="tol_policy")
        if (self.init == Init.CUSTOM) != (self.init_policy is not None):
            raise ConfigurationError(
                "A custom initialization requires an initial policy and only a "
                "custom initialization accepts one",
                path="init",
            )

    @classmethod
    def custom(cls, policy: TabularPolicy, **kwargs) -> "MMConfig":
        return cls(init=Init.CUSTOM, init_policy=policy, **kwargs)

    @classmethod
    def from_solver_config(cls, config: SolverConfig, **kwargs) -> "MMConfig":
        """Return an MM configuration taking limits from a solver configuration.
        Keyword arguments override."""
        values = dict(
            max_iters=config.max_iters,
            tol_policy=config.tol_policy,
            tol_objective=config.tol_objective,
            descent_slack=config.descent_slack,
            exact_monitor_cap=config.exact_monitor_cap,
            mass_tol=config.mass_tol,
        )
        values.update(kwargs)
        return cls(**values)


@dataclass(frozen=True)
class MMRecord:
    """One row of an MM trace. Row 0 describes the initial policy."""

    iteration: int
    objective_A: float
    objective_B: float
    policy_delta: float
    stable: bool
    """True if the argmax actions did not change in this iteration."""
    residual_mass: float


@dataclass(frozen=True, eq=False)
class MMTrace:
    mode: Mode
    records: list[MMRecord]
    policy: TabularPolicy
    converged: bool
    iterations: int

    @property
    def objective(self) -> list[float]:
        """The monitored objective of each record."""
        if self.mode == Mode.SOC:
            return [r.objective_A for r in self.records]
        return [r.objective_B for r in self.records]


@dataclass(frozen=True, eq=False)
class DeterministicPolicy:
    """The argmax read-off of a tabular policy.

    Args:
        actions: Chosen action per (t, x), shape (T, X).
        residuals: 1 - the largest action probability per (t, x).
        max_residual: The largest residual.
        collapsed: True if max_residual is below the mass tolerance.
    """

    actions: np.ndarray
    residuals: np.ndarray
    max_residual: float
    collapsed: bool


def extract_deterministic(
    policy: TabularPolicy, mass_tol: float = 1e-6
) -> DeterministicPolicy:
    """Return the most probable action in each (t, x), ties broken by the lowest
    action index, with the probability mass left on other actions."""
    actions = np.argmax(policy.tables, axis=-1)
    residuals = 1.0 - np.max(policy.tables, axis=-1)
    max_residual = float(residuals.max())
    return DeterministicPolicy(
        actions, residuals, max_residual, collapsed=max_residual < mass_tol
    )


class _Monitor:
    """Evaluates (A, B) exactly by the policy-evaluation recursion.

    When the support is no larger than the cap, the values of the first and last
    policies of a run are also computed by enumeration and must agree.
    """

    def __init__(self, problem: DiscreteProblem, cost: CostModel, cap: float):
        self.problem = problem
        self.cost = cost
        self.enumerable = support_size(problem) <= cap
        self.cap = cap

    def __call__(self, policy: TabularPolicy) -> tuple[float, float]:
        return evaluate_objectives(self.problem, policy, self.cost)

    def verify(self, policy: TabularPolicy, monitored: tuple[float, float]):
        if not self.enumerable:
            return
        exact = objectives(self.problem, policy, self.cost, cap=self.cap)
        for name, m, e in zip(("A", "B"), monitored, exact):
            if not math.isclose(
                m, e, rel_tol=MONITOR_TOLERANCE, abs_tol=MONITOR_TOLERANCE
            ):
                raise ConsistencyError(
                    f"Monitored objective {name} differs from its enumerated value",
                    observed=m,
                    expected=e,
                )


def _step(
    problem: DiscreteProblem, cost: CostModel, prior: TabularPolicy, mode: Mode
) -> TabularPolicy:
    match mode:
        case Mode.SOC:
            return backward_pass(problem, cost, prior, ProjectionKind.i())[1]
        case Mode.RSOC:
            return backward_pass(problem, cost, prior, ProjectionKind.m())[1]
        case _:
            return exact_smoothing(problem, prior, cost)


def mm_iterate(
    problem: DiscreteProblem,
    cost: CostModel,
    mode: Mode,
    config: MMConfig = MMConfig(),
) -> MMTrace:
    """Run the MM fixed-point iteration, feeding each projected policy back in as
    the next prior.

    The monitored objective (A in SOC mode, B otherwise) must not increase by more
    than the configured slack in any iteration; if it does, a ConsistencyError is
    raised. Running out of iterations is not an error: the returned trace is marked
    as not converged and a warning is logged.

    Args:
        problem: The controlled Markov chain.
        cost: The costs.
        mode: The objective to minimize.
        config: Stopping rules and initialization.

    Returns:
        The trace of the iteration, including the final policy.
    """
    cost.check(problem)
    if config.init == Init.CUSTOM:
        policy = config.init_policy
        policy.check(problem)
    else:
        policy = TabularPolicy.uniform(problem)

    monitor = _Monitor(problem, cost, config.exact_monitor_cap)
    a, b = monitor(policy)
    monitor.verify(policy, (a, b))
    current = extract_deterministic(policy, config.mass_tol)
    records = [MMRecord(0, a, b, np.nan, False, current.max_residual)]
    objective = a if mode == Mode.SOC else b

    converged = False
    iteration = 0
    for iteration in range(1, config.max_iters + 1):
        updated = _step(problem, cost, policy, mode)
        delta = updated.sup_distance(policy)
        a, b = monitor(updated)
        value = a if mode == Mode.SOC else b

        if value > objective + config.descent_slack:
            raise ConsistencyError(
                f"The {mode} objective increased in iteration {iteration}",
                observed=value,
                expected=objective,
            )

        extracted = extract_deterministic(updated, config.mass_tol)
        stable = bool(np.array_equal(extracted.actions, current.actions))
        records.append(
            MMRecord(iteration, a, b, delta, stable, extracted.max_residual)
        )
        log.debug(
            "MM iteration",
            mode=str(mode),
            iteration=iteration,
            objective=value,
            policy_delta=delta,
        )

        change = abs(objective - value)
        policy, current, objective = updated, extracted, value
        if delta < config.tol_policy and change < config.tol_objective:
            converged = True
            break

    monitor.verify(policy, (records[-1].objective_A, records[-1].objective_B))

    if converged:
        log.info(
            "MM iteration converged",
            mode=str(mode),
            iterations=iteration,
            objective=objective,
        )
    else:
        log.warning(
            "MM iteration did not converge",
            mode=str(mode),
            iterations=iteration,
            objective=objective,
            policy_delta=records[-1].policy_delta,
        )

    return MMTrace(mode, records, policy, converged, iteration)


@dataclass(frozen=True)
class IdentityReport:
    """The outcome of checking that a decomposition is constant over probes.

    Args:
        name: What was checked.
        constant: The value the decomposition should take for every probe.
        deviation: The largest absolute departure of any probe from the constant.
        dominated: True if the surrogate dominated the objective at every probe, or
            None if not applicable.
        tangency_gap: |objective - surrogate| at the prior, or None if not
            applicable.
        num_probes: The number of probes evaluated.
        num_skipped: The number of probes skipped because a term was infinite.
        tolerance: The tolerance applied to the deviation and gap.
    """

    name: str
    constant: float
    deviation: float
    dominated: bool | None
    tangency_gap: float | None
    num_probes: int
    num_skipped: int
    tolerance: float

    @property
    def passed(self) -> bool:
        ok = self.num_probes > 0 and self.deviation < self.tolerance
        if self.dominated is not None:
            ok = ok and self.dominated
        if self.tangency_gap is not None:
            ok = ok and self.tangency_gap < self.tolerance
        return ok


@dataclass(frozen=True)
class MajorizationReport:
    soc: IdentityReport
    rsoc: IdentityReport

    @property
    def passed(self) -> bool:
        return self.soc.passed and self.rsoc.passed


def _report(name, constant, terms, tangency_gap, dominated, tolerance):
    finite = [v for v in terms if np.isfinite(v)]
    deviation = max((abs(v - constant) for v in finite), default=np.inf)
    report = IdentityReport(
        name,
        constant,
        deviation,
        dominated,
        tangency_gap,
        len(finite),
        len(terms) - len(finite),
        tolerance,
    )
    if report.passed:
        log.info("Identity check passed", report=report)
    else:
        log.error("Identity check failed", report=report)
    return report


def majorization_report(
    problem: DiscreteProblem,
    cost: CostModel,
    prior: TabularPolicy,
    probes: list[TabularPolicy],
    tolerance: float = 1e-9,
    cap: float = DEFAULT_ENUMERATION_CAP,
) -> MajorizationReport:
    """Check the surrogates that make the MM iterations descend.

    For SOC, with p* the normalized desired distribution of the prior,

        A[pi] + D[p_pi || p_prior] - D[p_pi || p*] = -log eta[prior]

    for every probe, so A[pi] <= D[p_pi || p*] - log eta[prior] with equality at
    pi = prior.

    For RSOC, with p*_pi the normalized desired distribution of pi,

        B[pi] - D[p*_prior || p_pi] + D[p*_prior || p*_pi] = E_{p*_prior}[R]

    so B[pi] <= D[p*_prior || p_pi] + E_{p*_prior}[R] with equality at pi = prior.

    Args:
        problem: The controlled Markov chain.
        cost: The costs.
        prior: The policy at which the surrogates are built.
        probes: Policies at which the decompositions are evaluated.
        tolerance: The largest acceptable deviation.
        cap: The largest support that may be enumerated.

    Returns:
        One report for each decomposition.
    """
    slack = tolerance
    p_prior = enumerate_trajectories(problem, prior, cost, cap=cap)
    desired = desired_distribution(problem, prior, cost, cap=cap)
    soc_constant = -desired.log_eta
    rsoc_constant = desired.expectation(desired.costs)

    a_prior, b_prior = objectives(problem, prior, cost, cap=cap)
    soc_gap = abs(a_prior - (kl(p_prior, desired) + soc_constant))
    rsoc_gap = abs(b_prior - (kl(desired, p_prior) + rsoc_constant))

    soc_terms, rsoc_terms = [], []
    soc_dominated = rsoc_dominated = True
    for probe in probes:
        p_pi = enumerate_trajectories(problem, probe, cost, cap=cap)
        a = p_pi.expectation(p_pi.costs)
        div = kl(p_pi, desired)
        soc_terms.append(a + kl(p_pi, p_prior) - div)
        if np.isfinite(div) and a > div + soc_constant + slack:
            soc_dominated = False

        desired_pi = desired_distribution(problem, probe, cost, cap=cap)
        b = -desired_pi.log_eta
        cover = kl(desired, p_pi)
        rsoc_terms.append(b - cover + kl(desired, desired_pi))
        if np.isfinite(cover) and b > cover + rsoc_constant + slack:
            rsoc_dominated = False

    return MajorizationReport(
        _report(
            "SOC majorization",
            soc_constant,
            soc_terms,
            soc_gap,
            soc_dominated,
            tolerance,
        ),
        _report(
            "RSOC majorization",
            rsoc_constant,
            rsoc_terms,
            rsoc_gap,
            rsoc_dominated,
            tolerance,
        ),
    )


def merl_identity_check(
    problem: DiscreteProblem,
    cost: CostModel,
    probes: list[TabularPolicy],
    tolerance: float = 1e-9,
    cap: float = DEFAULT_ENUMERATION_CAP,
) -> IdentityReport:
    """Check the maximum-entropy identification of the I-projection objective.

    With nu the uniform policy and p*_nu its normalized desired distribution,

        D[p_pi || p*_nu] - (A[pi] + E_{p_pi}[sum_t log pi_t(u_t | x_t)])
            = T log |U| + log eta[nu]

    for every probe pi.
    """
    nu = TabularPolicy.uniform(problem)
    desired = desired_distribution(problem, nu, cost, cap=cap)
    constant = problem.horizon * np.log(problem.num_actions) + desired.log_eta

    terms = []
    for probe in probes:
        p_pi = enumerate_trajectories(problem, probe, cost, cap=cap)
        a = p_pi.expectation(p_pi.costs)
        log_likelihood = p_pi.expectation(log_policy(p_pi, probe))
        terms.append(kl(p_pi, desired) - (a + log_likelihood))

    return _report("MERL identity", constant, terms, None, None, tolerance)
