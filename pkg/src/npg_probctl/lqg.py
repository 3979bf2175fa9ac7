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

"""Projections and MM iterations in the linear-Gaussian-quadratic family, with
the classical Riccati oracles.

The stacked state-action vector is xi = [x; u]. Dynamics are
x' ~ N(F_xi xi + f, P) and stage costs are 1/2 xi' R_xixi xi + R_xi' xi, with
terminal cost 1/2 x' R_xx_T x + R_x_T' x. Value functions are tracked up to
additive constants, which no policy depends on.

The parameter alpha selects the projection: 0 for the I-projection, 1 for the
M-projection and values in between for the Renyi family. The value of the successor
enters through the resolvent (V_xx^-1 + alpha P)^-1, computed by linear solves.
"""

from dataclasses import dataclass

import numpy as np
from scipy import linalg
from structlog import get_logger

from npg_probctl.exception import (
    BreakdownError,
    ConfigurationError,
    DomainError,
    InstabilityError,
    NumericError,
)
from npg_probctl.mm import MMConfig

log = get_logger(__name__)

SYMMETRY_TOLERANCE = 1e-12
BREAKDOWN_TOLERANCE = 1e-9
MAX_GAIN_NORM = 1e8


def _sym(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + np.swapaxes(a, -1, -2))


def _array(values, name: str, shape: tuple) -> np.ndarray:
    """Return values as a read-only float array of the given shape, broadcasting a
    time-invariant value over the leading (time) dimension."""
    try:
        a = np.array(values, dtype=float)
        if a.shape != shape:
            a = np.array(np.broadcast_to(a, shape))
    except (TypeError, ValueError) as e:
        raise ConfigurationError(
            f"{name} cannot be read with shape {shape}: {e}", path=name
        ) from e
    if not np.isfinite(a).all():
        raise ConfigurationError(f"{name} must be finite", path=name)
    a.setflags(write=False)
    return a


def _check_symmetric(a: np.ndarray, name: str, psd: bool = False):
    if np.abs(a - np.swapaxes(a, -1, -2)).max(initial=0) > SYMMETRY_TOLERANCE:
        raise ConfigurationError(f"{name} must be symmetric", path=name)
    if psd and a.size and np.linalg.eigvalsh(_sym(a)).min() < -SYMMETRY_TOLERANCE:
        raise ConfigurationError(f"{name} must be positive semi-definite", path=name)


@dataclass(frozen=True, eq=False)
class LinearGaussianDynamics:
    """Linear-Gaussian dynamics x_{t+1} ~ N(F_xi[t] [x; u] + f[t], P[t]).

    Args:
        F_xi: State-action Jacobians, shape (T, n, n + m).
        f: Offsets, shape (T, n).
        P: Noise covariances, shape (T, n, n).
        x0_mean: Mean of the initial state, default zero.
        x0_cov: Covariance of the initial state, default the identity.
    """

    F_xi: np.ndarray
    f: np.ndarray
    P: np.ndarray
    x0_mean: np.ndarray | None = None
    x0_cov: np.ndarray | None = None

    def __post_init__(self):
        F_xi = np.asarray(self.F_xi, dtype=float)
        if F_xi.ndim != 3 or F_xi.shape[2] <= F_xi.shape[1]:
            raise ConfigurationError(
                f"F_xi must have shape (T, n, n + m) with m > 0, not {F_xi.shape}",
                path="F_xi",
            )
        horizon, n, nm = F_xi.shape
        object.__setattr__(self, "F_xi", _array(F_xi, "F_xi", (horizon, n, nm)))
        object.__setattr__(self, "f", _array(self.f, "f", (horizon, n)))
        object.__setattr__(self, "P", _array(self.P, "P", (horizon, n, n)))
        mean = np.zeros(n) if self.x0_mean is None else self.x0_mean
        cov = np.eye(n) if self.x0_cov is None else self.x0_cov
        object.__setattr__(self, "x0_mean", _array(mean, "x0_mean", (n,)))
        object.__setattr__(self, "x0_cov", _array(cov, "x0_cov", (n, n)))

        _check_symmetric(self.P, "P", psd=True)
        _check_symmetric(self.x0_cov, "x0_cov", psd=True)

    @classmethod
    def time_invariant(cls, F_xi, f, P, horizon: int, **kwargs):
        F_xi = np.asarray(F_xi, dtype=float)
        return cls(np.broadcast_to(F_xi, (horizon, *F_xi.shape)), f, P, **kwargs)

    @property
    def horizon(self) -> int:
        return self.F_xi.shape[0]

    @property
    def state_dim(self) -> int:
        return self.F_xi.shape[1]

    @property
    def action_dim(self) -> int:
        return self.F_xi.shape[2] - self.F_xi.shape[1]


@dataclass(frozen=True, eq=False)
class QuadraticCost:
    """Quadratic stage and terminal costs.

    Args:
        R_xixi: Stage Hessians, shape (T, n + m, n + m), symmetric with a positive
            semi-definite action block.
        R_xi: Stage gradients, shape (T, n + m).
        R_xx_T: Terminal Hessian, shape (n, n), symmetric.
        R_x_T: Terminal gradient, shape (n,).
    """

    R_xixi: np.ndarray
    R_xi: np.ndarray
    R_xx_T: np.ndarray
    R_x_T: np.ndarray

    def __post_init__(self):
        R_xx_T = np.asarray(self.R_xx_T, dtype=float)
        R_xixi = np.asarray(self.R_xixi, dtype=float)
        if R_xx_T.ndim != 2 or R_xixi.ndim not in (2, 3):
            raise ConfigurationError(
                "R_xx_T must be a matrix and R_xixi a matrix or a stack of matrices",
                path="R_xixi",
            )
        n = R_xx_T.shape[0]
        nm = R_xixi.shape[-1]
        horizon = R_xixi.shape[0] if R_xixi.ndim == 3 else 1
        object.__setattr__(self, "R_xixi", _array(R_xixi, "R_xixi", (horizon, nm, nm)))
        object.__setattr__(self, "R_xi", _array(self.R_xi, "R_xi", (horizon, nm)))
        object.__setattr__(self, "R_xx_T", _array(R_xx_T, "R_xx_T", (n, n)))
        object.__setattr__(self, "R_x_T", _array(self.R_x_T, "R_x_T", (n,)))

        _check_symmetric(self.R_xixi, "R_xixi")
        _check_symmetric(self.R_xx_T, "R_xx_T")
        _check_symmetric(self.R_xixi[:, n:, n:], "R_uu", psd=True)

    @classmethod
    def time_invariant(cls, R_xixi, R_xi, R_xx_T, R_x_T, horizon: int):
        R_xixi = np.asarray(R_xixi, dtype=float)
        R_xi = np.asarray(R_xi, dtype=float)
        return cls(
            np.broadcast_to(R_xixi, (horizon, *R_xixi.shape)),
            np.broadcast_to(R_xi, (horizon, *R_xi.shape)),
            R_xx_T,
            R_x_T,
        )

    def check(self, dyn: LinearGaussianDynamics):
        n, m, horizon = dyn.state_dim, dyn.action_dim, dyn.horizon
        expected = (horizon, n + m, n + m)
        if self.R_xixi.shape != expected or self.R_xx_T.shape != (n, n):
            raise ConfigurationError(
                f"Cost shapes {self.R_xixi.shape}, {self.R_xx_T.shape} do not match "
                f"the dynamics (T={horizon}, n={n}, m={m})",
                path="R_xixi",
            )


@dataclass(frozen=True, eq=False)
class LinearGaussianPolicy:
    """The policy u ~ N(K[t] x + k[t], Sigma[t])."""

    K: np.ndarray
    k: np.ndarray
    Sigma: np.ndarray

    def __post_init__(self):
        K = np.asarray(self.K, dtype=float)
        if K.ndim != 3:
            raise ConfigurationError("K must have shape (T, m, n)", path="K")
        horizon, m, n = K.shape
        object.__setattr__(self, "K", _array(K, "K", (horizon, m, n)))
        object.__setattr__(self, "k", _array(self.k, "k", (horizon, m)))
        object.__setattr__(self, "Sigma", _array(self.Sigma, "Sigma", (horizon, m, m)))
        _check_symmetric(self.Sigma, "Sigma")
        if np.linalg.eigvalsh(self.Sigma).min() <= 0:
            raise NumericError("Sigma must be positive definite")

    @classmethod
    def default(cls, dyn: LinearGaussianDynamics) -> "LinearGaussianPolicy":
        """Return the prior K = 0, k = 0, Sigma = I."""
        horizon, n, m = dyn.horizon, dyn.state_dim, dyn.action_dim
        return cls(
            np.zeros((horizon, m, n)),
            np.zeros((horizon, m)),
            np.broadcast_to(np.eye(m), (horizon, m, m)),
        )

    def gain_distance(self, other: "LinearGaussianPolicy") -> float:
        """Return the sup-norm distance between the gains and offsets."""
        return float(
            max(np.abs(self.K - other.K).max(), np.abs(self.k - other.k).max())
        )


@dataclass(frozen=True, eq=False)
class QuadraticValue:
    """Quadratic value coefficients, constants dropped.

    Args:
        V_xx: Shape (T + 1, n, n).
        V_x: Shape (T + 1, n).
        Q_xixi: Shape (T, n + m, n + m).
        Q_xi: Shape (T, n + m).
    """

    V_xx: np.ndarray
    V_x: np.ndarray
    Q_xixi: np.ndarray
    Q_xi: np.ndarray

    @property
    def n(self) -> int:
        return self.V_xx.shape[1]

    @property
    def Q_xx(self) -> np.ndarray:
        return self.Q_xixi[:, : self.n, : self.n]

    @property
    def Q_ux(self) -> np.ndarray:
        return self.Q_xixi[:, self.n :, : self.n]

    @property
    def Q_uu(self) -> np.ndarray:
        return self.Q_xixi[:, self.n :, self.n :]

    @property
    def Q_x(self) -> np.ndarray:
        return self.Q_xi[:, : self.n]

    @property
    def Q_u(self) -> np.ndarray:
        return self.Q_xi[:, self.n :]


def _successor(
    S: np.ndarray, s: np.ndarray, P: np.ndarray, alpha: float, t: int
) -> tuple[np.ndarray, np.ndarray]:
    """Return the resolvent M = (S^-1 + alpha P)^-1 and (I + alpha S P)^-1 s.

    Both are computed without inverting S, which may be singular.
    """
    if alpha == 0 or not P.any():
        return S, s

    if np.linalg.eigvalsh(S).min() < -SYMMETRY_TOLERANCE:
        raise BreakdownError(
            f"Indefinite value Hessian entering step t={t}; the risk-sensitive "
            f"resolvent is undefined",
            t=t,
        )
    G = np.eye(S.shape[0]) + alpha * S @ P
    if np.linalg.eigvals(G).real.min() <= BREAKDOWN_TOLERANCE:
        raise BreakdownError(f"Resolvent breakdown at t={t}", t=t)
    try:
        M = linalg.solve(G, S)
        ms = linalg.solve(G, s)
    except linalg.LinAlgError as e:
        raise BreakdownError(f"Singular resolvent at t={t}", t=t) from e
    return _sym(M), ms


def _q_coefficients(dyn, cost, t, S, s, alpha):
    F, f = dyn.F_xi[t], dyn.f[t]
    M, ms = _successor(S, s, dyn.P[t], alpha, t)
    Q_xixi = _sym(cost.R_xixi[t] + F.T @ M @ F)
    Q_xi = cost.R_xi[t] + F.T @ (ms + M @ f)
    return Q_xixi, Q_xi


def _check_alpha(alpha: float):
    if not 0 <= alpha <= 1:
        raise DomainError(
            f"alpha must lie in [0, 1], but was {alpha!r}", observed=alpha
        )


def lqg_backward(
    dyn: LinearGaussianDynamics,
    cost: QuadraticCost,
    prior: LinearGaussianPolicy,
    alpha: float,
) -> tuple[LinearGaussianPolicy, QuadraticValue]:
    """Project the desired distribution of a linear-Gaussian prior policy.

    For t = T - 1 down to 0, with S, s the value coefficients at t + 1:

        Q_xixi = R_xixi + F' M F
        Q_xi = R_xi + F' ((I + alpha S P)^-1 s + M f)
        Lambda = Sigma^-1 + Q_uu
        Sigma* = Lambda^-1
        K* = Lambda^-1 (Sigma^-1 K - Q_ux)
        k* = Lambda^-1 (Sigma^-1 k - Q_u)
        V_xx = Q_xx + K' Sigma^-1 K - K*' Lambda K*
        V_x = Q_x + K' Sigma^-1 k - K*' Lambda k*

    where M = (S^-1 + alpha P)^-1.

    Args:
        dyn: The dynamics.
        cost: The costs.
        prior: The prior policy.
        alpha: 0 for the I-projection, 1 for the M-projection.

    Returns:
        The projected policy and the value coefficients.
    """
    _check_alpha(alpha)
    cost.check(dyn)
    horizon, n, m = dyn.horizon, dyn.state_dim, dyn.action_dim

    V_xx = np.empty((horizon + 1, n, n))
    V_x = np.empty((horizon + 1, n))
    Q_xixi = np.empty((horizon, n + m, n + m))
    Q_xi = np.empty((horizon, n + m))
    K_out = np.empty((horizon, m, n))
    k_out = np.empty((horizon, m))
    Sigma_out = np.empty((horizon, m, m))
    V_xx[horizon], V_x[horizon] = cost.R_xx_T, cost.R_x_T

    for t in reversed(range(horizon)):
        Q_xixi[t], Q_xi[t] = _q_coefficients(
            dyn, cost, t, V_xx[t + 1], V_x[t + 1], alpha
        )
        Q_xx, Q_ux, Q_uu = Q_xixi[t, :n, :n], Q_xixi[t, n:, :n], Q_xixi[t, n:, n:]
        Q_x, Q_u = Q_xi[t, :n], Q_xi[t, n:]

        K, k = prior.K[t], prior.k[t]
        try:
            prior_factor = linalg.cho_factor(prior.Sigma[t])
            Sigma_inv = _sym(linalg.cho_solve(prior_factor, np.eye(m)))
            Lambda = _sym(Sigma_inv + Q_uu)
            factor = linalg.cho_factor(Lambda)
        except linalg.LinAlgError as e:
            raise NumericError(
                f"Policy covariance is not positive definite at t={t}", t=t
            ) from e

        Sigma_out[t] = _sym(linalg.cho_solve(factor, np.eye(m)))
        K_out[t] = linalg.cho_solve(factor, Sigma_inv @ K - Q_ux)
        k_out[t] = linalg.cho_solve(factor, Sigma_inv @ k - Q_u)

        V_xx[t] = _sym(Q_xx + K.T @ Sigma_inv @ K - K_out[t].T @ Lambda @ K_out[t])
        V_x[t] = Q_x + K.T @ Sigma_inv @ k - K_out[t].T @ Lambda @ k_out[t]
        log.debug("LQG backward step", t=t, alpha=alpha)

    policy = LinearGaussianPolicy(K_out, k_out, Sigma_out)
    return policy, QuadraticValue(V_xx, V_x, Q_xixi, Q_xi)


@dataclass(frozen=True)
class LQGRecord:
    iteration: int
    objective_A: float
    gain_delta: float
    sigma_max: float
    """The largest policy covariance eigenvalue over all steps."""


@dataclass(frozen=True, eq=False)
class LQGTrace:
    alpha: float
    records: list[LQGRecord]
    policies: list[LinearGaussianPolicy]
    """The policy after each iteration; element 0 is the initial prior."""
    converged: bool
    iterations: int

    @property
    def policy(self) -> LinearGaussianPolicy:
        return self.policies[-1]


def mm_lqg(
    dyn: LinearGaussianDynamics,
    cost: QuadraticCost,
    alpha: float,
    config: MMConfig = MMConfig(),
    prior: LinearGaussianPolicy | None = None,
    track_objective: bool = True,
) -> LQGTrace:
    """Iterate lqg_backward, feeding each projected policy back in as the prior.

    The policy covariance contracts towards zero and the gains approach those of
    the Riccati (alpha = 0) or exponential-cost Riccati (alpha = 1) solution. The
    approach is sublinear, so tight gain tolerances need many iterations.

    Args:
        dyn: The dynamics.
        cost: The costs.
        alpha: The projection parameter in [0, 1].
        config: Stopping rules; tol_policy applies to the sup-norm gain change.
        prior: The initial policy, by default K = 0, k = 0, Sigma = I.
        track_objective: Record the expected cost of each iterate.

    Returns:
        The trace of policies.
    """
    _check_alpha(alpha)
    policy = LinearGaussianPolicy.default(dyn) if prior is None else prior

    def record(i, p, delta):
        a = lqg_expected_cost(dyn, cost, p) if track_objective else np.nan
        sigma_max = float(np.linalg.eigvalsh(p.Sigma).max())
        return LQGRecord(i, a, delta, sigma_max)

    records = [record(0, policy, np.nan)]
    policies = [policy]
    converged = False
    iteration = 0
    for iteration in range(1, config.max_iters + 1):
        updated, _ = lqg_backward(dyn, cost, policy, alpha)
        gain_norm = float(np.abs(updated.K).max(initial=0))
        if not np.isfinite(gain_norm) or gain_norm > MAX_GAIN_NORM:
            raise InstabilityError(
                f"Gain norm {gain_norm:.3g} exceeds {MAX_GAIN_NORM:.0e} in "
                f"iteration {iteration}"
            )
        delta = updated.gain_distance(policy)
        records.append(record(iteration, updated, delta))
        policies.append(updated)
        policy = updated
        if delta < config.tol_policy:
            converged = True
            break

    if converged:
        log.info("LQG MM iteration converged", alpha=alpha, iterations=iteration)
    else:
        log.warning(
            "LQG MM iteration did not converge",
            alpha=alpha,
            iterations=iteration,
            gain_delta=records[-1].gain_delta,
        )
    return LQGTrace(alpha, records, policies, converged, iteration)


@dataclass(frozen=True, eq=False)
class RiccatiSolution:
    """Deterministic gains u = K[t] x + k[t] with the quadratic value."""

    K: np.ndarray
    k: np.ndarray
    value: QuadraticValue


def _riccati(dyn: LinearGaussianDynamics, cost: QuadraticCost, alpha: float):
    cost.check(dyn)
    horizon, n, m = dyn.horizon, dyn.state_dim, dyn.action_dim
    V_xx = np.empty((horizon + 1, n, n))
    V_x = np.empty((horizon + 1, n))
    Q_xixi = np.empty((horizon, n + m, n + m))
    Q_xi = np.empty((horizon, n + m))
    K = np.empty((horizon, m, n))
    k = np.empty((horizon, m))
    V_xx[horizon], V_x[horizon] = cost.R_xx_T, cost.R_x_T

    for t in reversed(range(horizon)):
        Q_xixi[t], Q_xi[t] = _q_coefficients(
            dyn, cost, t, V_xx[t + 1], V_x[t + 1], alpha
        )
        Q_xx, Q_ux, Q_uu = Q_xixi[t, :n, :n], Q_xixi[t, n:, :n], Q_xixi[t, n:, n:]
        Q_x, Q_u = Q_xi[t, :n], Q_xi[t, n:]
        try:
            factor = linalg.cho_factor(Q_uu)
        except linalg.LinAlgError as e:
            error = BreakdownError if alpha > 0 else NumericError
            raise error(f"Q_uu is not positive definite at t={t}", t=t) from e

        K[t] = -linalg.cho_solve(factor, Q_ux)
        k[t] = -linalg.cho_solve(factor, Q_u)
        V_xx[t] = _sym(Q_xx + Q_ux.T @ K[t])
        V_x[t] = Q_x + Q_ux.T @ k[t]

    return RiccatiSolution(K, k, QuadraticValue(V_xx, V_x, Q_xixi, Q_xi))


def riccati_lqr(dyn: LinearGaussianDynamics, cost: QuadraticCost) -> RiccatiSolution:
    """Solve the expected-cost problem by the discrete-time Riccati recursion.

    The solution is certainty-equivalent: noise shifts only the dropped
    constants.
    """
    return _riccati(dyn, cost, 0.0)


def leqr(dyn: LinearGaussianDynamics, cost: QuadraticCost) -> RiccatiSolution:
    """Solve the risk-seeking exponential-cost problem by the Riccati recursion with
    the successor Hessian replaced by (S^-1 + P)^-1.

    Raises BreakdownError naming the step where the resolvent loses positivity.
    """
    return _riccati(dyn, cost, 1.0)


@dataclass(frozen=True, eq=False)
class ClosedLoopMoments:
    """Means and covariances of the closed loop.

    Args:
        xi_mean: Shape (T, n + m).
        xi_cov: Shape (T, n + m, n + m).
        x_mean: Shape (T + 1, n).
        x_cov: Shape (T + 1, n, n).
    """

    xi_mean: np.ndarray
    xi_cov: np.ndarray
    x_mean: np.ndarray
    x_cov: np.ndarray


def lqg_moments(
    dyn: LinearGaussianDynamics, policy: LinearGaussianPolicy
) -> ClosedLoopMoments:
    """Propagate the state-action mean and covariance forward under a policy."""
    horizon, n, m = dyn.horizon, dyn.state_dim, dyn.action_dim
    xi_mean = np.empty((horizon, n + m))
    xi_cov = np.empty((horizon, n + m, n + m))
    x_mean = np.empty((horizon + 1, n))
    x_cov = np.empty((horizon + 1, n, n))
    x_mean[0], x_cov[0] = dyn.x0_mean, dyn.x0_cov

    for t in range(horizon):
        K, k, Sigma = policy.K[t], policy.k[t], policy.Sigma[t]
        mu, C = x_mean[t], x_cov[t]
        xi_mean[t] = np.concatenate([mu, K @ mu + k])
        xi_cov[t] = np.block([[C, C @ K.T], [K @ C, K @ C @ K.T + Sigma]])
        F = dyn.F_xi[t]
        x_mean[t + 1] = F @ xi_mean[t] + dyn.f[t]
        x_cov[t + 1] = _sym(F @ xi_cov[t] @ F.T + dyn.P[t])

    return ClosedLoopMoments(xi_mean, xi_cov, x_mean, x_cov)


def lqg_expected_cost(
    dyn: LinearGaussianDynamics, cost: QuadraticCost, policy: LinearGaussianPolicy
) -> float:
    """Return the expected total cost A of a linear-Gaussian policy."""
    moments = lqg_moments(dyn, policy)

    def quadratic(H, g, mean, cov):
        return 0.5 * np.trace(H @ cov) + 0.5 * mean @ H @ mean + g @ mean

    total = sum(
        quadratic(cost.R_xixi[t], cost.R_xi[t], moments.xi_mean[t], moments.xi_cov[t])
        for t in range(dyn.horizon)
    )
    total += quadratic(cost.R_xx_T, cost.R_x_T, moments.x_mean[-1], moments.x_cov[-1])
    return float(total)


def random_lqg(
    seed: int, n: int, m: int, horizon: int, noise: float = 0.1
) -> tuple[LinearGaussianDynamics, QuadraticCost]:
    """Generate a random stabilizable instance with positive definite action
    costs.

    Args:
        seed: The random seed.
        n: The state dimension.
        m: The action dimension.
        horizon: The horizon T.
        noise: The scale of the noise covariance.

    Returns:
        The dynamics and the costs.
    """
    rng = np.random.default_rng(seed)
    A = np.eye(n) + 0.2 * rng.standard_normal((n, n))
    B = rng.standard_normal((n, m))
    L = rng.standard_normal((n, n))
    P = noise * (L @ L.T) / n

    Cx = rng.standard_normal((n, n))
    Cu = rng.standard_normal((m, m))
    R_xixi = np.zeros((n + m, n + m))
    R_xixi[:n, :n] = Cx @ Cx.T / n
    R_xixi[n:, n:] = Cu @ Cu.T / m + np.eye(m)
    R_xixi = _sym(R_xixi)
    R_xi = 0.1 * rng.standard_normal(n + m)
    Ct = rng.standard_normal((n, n))
    R_xx_T = _sym(Ct @ Ct.T / n + np.eye(n))
    R_x_T = 0.1 * rng.standard_normal(n)

    dyn = LinearGaussianDynamics.time_invariant(
        np.hstack([A, B]), rng.standard_normal(n) * 0.1, P, horizon
    )
    cost = QuadraticCost.time_invariant(R_xixi, R_xi, R_xx_T, R_x_T, horizon)
    return dyn, cost
