"""Ising-class rate functional on magnetisation profiles and its minimisers.

A profile ``m`` with ``|m| <= 1`` has cost

    I(m) = int rho(u) { -(beta/2) m(u) (J * (rho m))(u) + I_cw(m(u)) } du

where ``I_cw`` is :func:`kacprofile.meanfield.binary_entropy`. Minimisers
solve ``m = tanh(beta J * (rho m))``; the non-negative one is unique, so the
minimiser set is either ``{0}`` or a symmetric pair ``{m+, -m+}``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy.optimize import minimize_scalar

from . import _kernels
from .errors import ConfigurationError, ContractError, DomainError, NonConvergenceError
from .meanfield import binary_entropy, cw_fixed_point, local_potential
from .torus import DensityProfile, GridField, InteractionKernel, _convolve_values

log = logging.getLogger(__name__)

ProfileLike = Union[GridField, np.ndarray, float]


def _values(m: ProfileLike, grid) -> np.ndarray:
    if isinstance(m, GridField):
        if m.grid != grid:
            raise ContractError(f"profile lives on {m.grid}, expected {grid}")
        return np.asarray(m.values)
    arr = np.asarray(m, dtype=float)
    if arr.ndim == 0:
        return np.full(grid.shape, float(arr))
    if arr.size != grid.size:
        raise ContractError(f"profile of size {arr.size} does not fit {grid}")
    return arr.reshape(grid.shape)


def _check_pair(rho: DensityProfile, J: InteractionKernel):
    if rho.grid != J.grid:
        raise ContractError(f"density on {rho.grid} but kernel on {J.grid}")
    return rho.grid


def _check_ball(m: np.ndarray):
    if np.any(np.abs(m) > 1.0):
        raise DomainError("magnetisation profile leaves [-1, 1]")


def _field(rho, J, m):
    """``(J * (rho m))`` on the grid."""
    return _convolve_values(J.values, rho.values * m, rho.grid)


def local_temperature(rho: DensityProfile, beta: float, J: InteractionKernel) -> GridField:
    """``b(u) = beta (J * rho)(u)``."""
    grid = _check_pair(rho, J)
    if beta < 0:
        raise DomainError("inverse temperature must be non-negative")
    return GridField(beta * _convolve_values(J.values, rho.values, grid), grid)


def rate_functional(rho: DensityProfile, beta: float, J: InteractionKernel, m: ProfileLike) -> float:
    grid = _check_pair(rho, J)
    mv = _values(m, grid)
    _check_ball(mv)
    integrand = rho.values * (-0.5 * beta * mv * _field(rho, J, mv) + binary_entropy(mv))
    return float(grid.h * integrand.sum())


def rate_functional_parts(rho: DensityProfile, beta: float, J: InteractionKernel, m: ProfileLike) -> tuple[float, float]:
    """Inhomogeneity penalty and local Curie-Weiss part of the rate.

    The penalty ``(beta/4) int int rho rho (m(u) - m(v))^2 J(u - v)`` is
    evaluated as an explicit double sum, independently of the convolution
    used by :func:`rate_functional`.
    """
    grid = _check_pair(rho, J)
    mv = _values(m, grid)
    _check_ball(mv)
    pair_sum = _kernels.pairwise_penalty(
        np.ascontiguousarray(J.flat),
        np.ascontiguousarray(rho.flat),
        np.ascontiguousarray(mv.reshape(-1)),
        grid.coords,
        grid.N,
    )
    penalty = 0.25 * beta * grid.h**2 * pair_sum
    b = local_temperature(rho, beta, J).values
    local = grid.h * float(np.sum(rho.values * local_potential(b, mv)))
    return float(penalty), local


def rate_functional_split(rho: DensityProfile, beta: float, J: InteractionKernel, m: ProfileLike) -> float:
    penalty, local = rate_functional_parts(rho, beta, J, m)
    return penalty + local


def directional_derivative(
    rho: DensityProfile, beta: float, J: InteractionKernel, m1: ProfileLike, m2: ProfileLike, t: float = 0.0
) -> float:
    """``d/ds I(m1 + s m2)`` at ``s = t``.

    Raises :class:`DomainError` unless ``m1 + t m2`` is strictly inside the unit ball.
    """
    grid = _check_pair(rho, J)
    a, d = _values(m1, grid), _values(m2, grid)
    point = a + t * d
    if np.any(np.abs(point) >= 1.0):
        raise DomainError("derivative needs a profile strictly inside the unit ball")
    bracket = -beta * _field(rho, J, point) + np.arctanh(point)
    return float(grid.h * np.sum(rho.values * d * bracket))


def tanh_map(rho: DensityProfile, beta: float, J: InteractionKernel, m: ProfileLike) -> GridField:
    """``u -> tanh(beta (J * (rho m))(u))``."""
    grid = _check_pair(rho, J)
    return GridField(np.tanh(beta * _field(rho, J, _values(m, grid))), grid)


def stationarity_residual(rho: DensityProfile, beta: float, J: InteractionKernel, m: ProfileLike) -> float:
    """``sup_u |m(u) - tanh(beta (J * (rho m))(u))|``."""
    grid = _check_pair(rho, J)
    mv = _values(m, grid)
    _check_ball(mv)
    return float(np.max(np.abs(mv - np.tanh(beta * _field(rho, J, mv)))))


@dataclass(frozen=True)
class SolverOptions:
    """Settings of the damped fixed-point iteration.

    ``init`` is ``"one"``, ``"constant"`` (uses ``init_value``) or an array of
    initial values.
    """

    theta: float = 1.0
    tol: float = 1e-10
    max_iter: int = 100_000
    init: object = "one"
    init_value: float = 1.0
    auto_damp: bool = True

    def __post_init__(self):
        if not 0.0 < self.theta <= 1.0:
            raise ConfigurationError(f"damping must lie in (0, 1], got {self.theta}")
        if not self.tol > 0:
            raise ConfigurationError("tolerance must be positive")
        if self.max_iter < 1:
            raise ConfigurationError("need at least one iteration")

    def initial(self, grid) -> np.ndarray:
        if isinstance(self.init, str):
            if self.init == "one":
                return np.ones(grid.shape)
            if self.init == "constant":
                return np.full(grid.shape, float(self.init_value))
            raise ConfigurationError(f"unknown initial profile {self.init!r}")
        return _values(self.init, grid).copy()


@dataclass(frozen=True)
class StationarySolution:
    profile: GridField
    residual: float
    iterations: int
    theta: float
    near_critical: bool
    residuals: np.ndarray = field(repr=False)


def solve_stationary(
    rho: DensityProfile, beta: float, J: InteractionKernel, opts: Optional[SolverOptions] = None
) -> StationarySolution:
    """Damped iteration ``m <- (1 - theta) m + theta tanh(beta J * (rho m))``.

    Returns the first iterate whose stationarity residual is below
    ``opts.tol``. With ``theta = 1`` and the constant-one start the iterates
    decrease pointwise to the maximal non-negative fixed point. If the
    residual keeps growing, damping falls back to ``theta = 0.5``.
    """
    opts = opts or SolverOptions()
    grid = _check_pair(rho, J)
    if beta < 0:
        raise DomainError("inverse temperature must be non-negative")
    m = opts.initial(grid)
    _check_ball(m)
    theta = opts.theta
    history = []
    for it in range(opts.max_iter + 1):
        image = np.tanh(beta * _field(rho, J, m))
        res = float(np.max(np.abs(m - image)))
        history.append(res)
        if res < opts.tol:
            ratio = history[-1] / history[-2] if len(history) > 1 and history[-2] > 0 else 0.0
            near = it > 10_000 or ratio > 0.999
            if near:
                log.warning("stationary solve converged slowly (%d iterations); near-critical parameters", it)
            return StationarySolution(GridField(m, grid), res, it, theta, near, np.array(history))
        if it == opts.max_iter:
            break
        if opts.auto_damp and theta > 0.5 and len(history) >= 6:
            recent = np.diff(history[-6:])
            if np.count_nonzero(recent > 0) >= 3:
                log.info("oscillation detected after %d iterations; damping to 0.5", it)
                theta = 0.5
        m = (1.0 - theta) * m + theta * image
    raise NonConvergenceError(
        f"stationary iteration did not reach {opts.tol:g} in {opts.max_iter} iterations (residual {res:.3e})",
        residual=res,
        iterations=opts.max_iter,
    )


@dataclass(frozen=True)
class MinimizerSet:
    """Either ``TrivialZero`` (unique minimiser 0) or ``SymmetricPair`` ``{m+, -m+}``."""

    kind: str
    profile: GridField
    rate: float
    rate_at_zero: float
    solution: StationarySolution = field(repr=False)

    @property
    def trivial(self) -> bool:
        return self.kind == "TrivialZero"

    @property
    def near_critical(self) -> bool:
        return self.solution.near_critical

    @property
    def minimizers(self) -> tuple[GridField, ...]:
        if self.trivial:
            return (self.profile,)
        return (self.profile, GridField(-self.profile.values, self.profile.grid))


def find_minimizers(
    rho: DensityProfile, beta: float, J: InteractionKernel, tol: float = 1e-10, max_iter: int = 100_000
) -> MinimizerSet:
    """Classify the minimiser set from the maximal non-negative stationary profile."""
    sol = solve_stationary(rho, beta, J, SolverOptions(tol=tol, max_iter=max_iter))
    grid = rho.grid
    m_plus = sol.profile.values
    zero_rate = rate_functional(rho, beta, J, 0.0)
    if float(np.max(m_plus)) < 10.0 * tol:
        zero = GridField(np.zeros(grid.shape), grid)
        return MinimizerSet("TrivialZero", zero, zero_rate, zero_rate, sol)
    rate = rate_functional(rho, beta, J, m_plus)
    return MinimizerSet("SymmetricPair", sol.profile, rate, zero_rate, sol)


def linear_growth_rate(rho: DensityProfile, beta: float, J: InteractionKernel) -> float:
    """Spectral radius of the linearisation ``v -> beta J * (rho v)`` at ``m = 0``.

    The trivial profile is the only non-negative stationary point iff this is ``<= 1``.
    """
    grid = _check_pair(rho, J)
    root = np.sqrt(rho.flat)
    kmat = _kernels.pair_matrix(np.ascontiguousarray(J.flat), grid.coords, grid.coords, grid.N)
    sym = beta * grid.h * root[:, None] * kmat * root[None, :]
    return float(np.linalg.eigvalsh(sym)[-1])


def local_profile_mloc(rho: DensityProfile, beta: float, J: InteractionKernel) -> GridField:
    """Site-wise minimiser of the local potential on ``[0, 1]``: ``cw_fixed_point(b(u))``."""
    b = local_temperature(rho, beta, J)
    return GridField(cw_fixed_point(b.values), b.grid)


def flat_level(rho: DensityProfile, beta: float, J: InteractionKernel, grid_points: int = 1001) -> float:
    """Constant ``c`` in ``[0, 1]`` minimising ``int rho(u) Phi(b(u), c) du``."""
    b = local_temperature(rho, beta, J).values
    h = rho.grid.h
    weights = rho.values

    def objective(c):
        return h * float(np.sum(weights * local_potential(b, c)))

    cs = np.linspace(0.0, 1.0, grid_points)
    vals = np.array([objective(c) for c in cs])
    k = int(np.argmin(vals))
    lo, hi = cs[max(k - 1, 0)], cs[min(k + 1, grid_points - 1)]
    res = minimize_scalar(objective, bounds=(lo, hi), method="bounded", options={"xatol": 1e-10})
    best = float(res.x) if res.fun <= vals[k] else float(cs[k])
    return 0.0 if best < 1e-9 else best


def flat_profile_mflat(rho: DensityProfile, beta: float, J: InteractionKernel) -> GridField:
    return GridField(np.full(rho.grid.shape, flat_level(rho, beta, J)), rho.grid)


def comparison_profiles(
    rho: DensityProfile, beta: float, J: InteractionKernel, tol: float = 1e-10, max_iter: int = 100_000
) -> dict[str, GridField]:
    """``b``, ``m_loc``, ``m_flat`` and ``m_stat`` on the grid of ``rho``."""
    sol = solve_stationary(rho, beta, J, SolverOptions(tol=tol, max_iter=max_iter))
    return {
        "b": local_temperature(rho, beta, J),
        "m_loc": local_profile_mloc(rho, beta, J),
        "m_flat": flat_profile_mflat(rho, beta, J),
        "m_stat": sol.profile,
    }
