"""Limiting single-site kernels of the fuzzy Kac-Potts model and the Gibbs classifier."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence, Union

import numpy as np

from . import _kernels
from .errors import ContractError, DomainError
from .meanfield import homogeneous_potts_minimizers, potts_beta_c
from .simulator import ColorProfile, FuzzyPartition, site_index, torus_point_to_site
from .torus import DensityProfile, GridField, InteractionKernel, integrate
from .variational import find_minimizers

log = logging.getLogger(__name__)

EMPTY_MASS = 1e-12
BOUNDARY_BAND = 1e-9

Layers = Union[np.ndarray, Sequence[GridField]]


class NonGibbsWarning(UserWarning):
    """Kernel formula evaluated outside the regime where it is the limit."""


@lru_cache(maxsize=None)
def critical_beta(r: int) -> float:
    return potts_beta_c(r)


@dataclass(frozen=True)
class KernelVector:
    """Probability vector over fuzzy classes ``1..s``."""

    probabilities: np.ndarray
    log_weights: np.ndarray
    non_gibbs: bool = False
    details: dict = field(default_factory=dict)

    def __post_init__(self):
        p = np.asarray(self.probabilities, dtype=float)
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
            raise ContractError("kernel vector is not a probability vector")

    def __len__(self):
        return int(self.probabilities.size)

    def __getitem__(self, k):
        return float(self.probabilities[k])


def _normalise_log(logw: np.ndarray) -> np.ndarray:
    p = np.exp(logw - logw.max())
    return p / p.sum()


@dataclass(frozen=True)
class GibbsVerdict:
    verdict: str
    rule: str
    r_star: int | None
    beta_c: float | None
    boundary: bool = False

    @property
    def gibbs(self) -> bool:
        return self.verdict == "Gibbs"

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "rule": self.rule,
            "r_star": self.r_star,
            "beta_c": self.beta_c,
            "boundary": self.boundary,
        }


def classify_gibbs(beta: float, partition: FuzzyPartition | Sequence[int]) -> GibbsVerdict:
    """Sequential Gibbsianness of the fuzzy model at ``beta``.

    Rule (a): all classes have size at most 2, Gibbs for every beta.
    Rule (b): ``beta < beta_c(r*)`` with ``r*`` the smallest class size >= 3, Gibbs.
    Rule (c): ``beta >= beta_c(r*)``, non-Gibbs; within ``1e-9`` of the
    threshold the verdict is flagged as boundary.
    """
    if beta < 0:
        raise DomainError("inverse temperature must be non-negative")
    if not isinstance(partition, FuzzyPartition):
        partition = FuzzyPartition.from_sizes(partition)
    large = [r for r in partition.sizes if r >= 3]
    if not large:
        return GibbsVerdict("Gibbs", "a", None, None)
    r_star = min(large)
    bc = critical_beta(r_star)
    boundary = abs(beta - bc) <= BOUNDARY_BAND
    if boundary or beta >= bc:
        return GibbsVerdict("NonGibbs", "c", r_star, bc, bool(boundary))
    return GibbsVerdict("Gibbs", "b", r_star, bc)


# --- A functional -----------------------------------------------------------------


def _layer_convolutions_at(layers: np.ndarray, J: InteractionKernel, u) -> np.ndarray:
    """``(J * layer)(u)`` for stacked grid densities of shape ``(r, *grid.shape)``."""
    grid = J.grid
    if layers.shape[1:] != grid.shape:
        raise ContractError(f"layers of shape {layers.shape[1:]} do not fit {grid}")
    k = site_index(grid.index_of(u), grid.N, grid.d)
    row = _kernels.pair_matrix(np.ascontiguousarray(J.flat), grid.coords[[k]], grid.coords, grid.N)[0]
    return grid.h * layers.reshape(layers.shape[0], -1) @ row


def _stack(layers: Layers) -> np.ndarray:
    if isinstance(layers, np.ndarray):
        return np.asarray(layers, dtype=float)
    return np.stack([np.asarray(f.values) for f in layers])


def a_functional(profile: ColorProfile | Layers, u, beta: float, J: InteractionKernel, r: int | None = None) -> float:
    """``A_r(pi, u, beta) = sum_i exp(2 beta (J * pi[i])(u))``.

    ``profile`` is an empirical :class:`ColorProfile` (``J`` on its lattice)
    or colour-layer densities on the grid of ``J``. ``u`` is a torus point.
    """
    if beta < 0:
        raise DomainError("inverse temperature must be non-negative")
    if isinstance(profile, ColorProfile):
        conv = profile.layer_convolutions(J, torus_point_to_site(u, profile.volume.n, profile.volume.d))
        layers = profile.q
    else:
        stacked = _stack(profile)
        conv = _layer_convolutions_at(stacked, J, u)
        layers = stacked.shape[0]
    if r is not None and r != layers:
        raise ContractError(f"profile has {layers} colour layers, expected {r}")
    return float(np.exp(2.0 * beta * conv).sum())


# --- D factor and Ising-class weights ------------------------------------------------------


def local_magnetization(rho: DensityProfile | None, beta: float, J: InteractionKernel, u) -> float:
    """``m_{rho, beta}(u)``: non-negative minimiser at ``u``; 0 for a massless class."""
    if rho is None:
        return 0.0
    mins = find_minimizers(rho, beta, J, tol=1e-13)
    if mins.near_critical:
        log.warning("minimiser near the critical surface; D-factor is ill-conditioned")
    return mins.profile.at(u)


def d_factor(r: int, u, rho: DensityProfile | None, beta: float, J: InteractionKernel) -> float:
    """``1`` unless ``r == 2``, where it is ``1/sqrt(1 - m(u)^2)``."""
    if r < 1:
        raise DomainError("class size must be positive")
    if r != 2:
        return 1.0
    m = local_magnetization(rho, beta, J, u)
    return float(1.0 / np.sqrt(1.0 - m * m))


def ising_weight_closed_form(rho: DensityProfile, beta: float, u, J: InteractionKernel) -> float:
    """``2 exp(beta (J * rho)(u)) / sqrt(1 - m(u)^2)``."""
    conv = _layer_convolutions_at(np.asarray(rho.values)[None], J, u)[0]
    return float(2.0 * np.exp(beta * conv) * d_factor(2, u, rho, beta, J))


def ising_weight_two_point(rho: DensityProfile, beta: float, u, J: InteractionKernel) -> float:
    """``(A_2(phi+) + A_2(phi-))/2`` with layers ``rho (1 +- m)/2``."""
    m = find_minimizers(rho, beta, J, tol=1e-13).profile.values
    plus = np.stack([rho.values * (1 + m) / 2, rho.values * (1 - m) / 2])
    return 0.5 * (a_functional(plus, u, beta, J) + a_functional(plus[::-1], u, beta, J))


# --- limiting kernel ---------------------------------------------------------------


def limiting_kernel(
    nu: Layers, u, beta: float, partition: FuzzyPartition, J: InteractionKernel
) -> KernelVector:
    """Limiting single-site kernel at a fuzzy profile given by class densities.

    Class ``k`` gets weight ``r_k exp(2 beta (J * nu[k])(u) / r_k) D_{r_k}(u, nu~_k, beta~_k)``
    with ``nu~_k = nu[k]/mass_k`` and ``beta~_k = mass_k beta``. Classes with
    mass below ``1e-12`` get weight ``r_k``. Outside the Gibbs regime the
    result is still returned but flagged (and a :class:`NonGibbsWarning` is issued).
    """
    if beta < 0:
        raise DomainError("inverse temperature must be non-negative")
    layers = _stack(nu)
    if layers.shape[0] != partition.s:
        raise ContractError(f"{layers.shape[0]} class densities for {partition.s} classes")
    if np.any(layers < 0) or not np.all(np.isfinite(layers)):
        raise DomainError("class densities must be finite and non-negative")
    grid = J.grid
    conv = _layer_convolutions_at(layers, J, u)
    logw = np.empty(partition.s)
    d_factors, mags, masses = [], [], []
    for k, r in enumerate(partition.sizes):
        mass = integrate(GridField(layers[k], grid))
        masses.append(mass)
        if mass < EMPTY_MASS:
            logw[k] = np.log(r)
            d_factors.append(1.0)
            mags.append(0.0)
            continue
        m = 0.0
        if r == 2:
            m = local_magnetization(DensityProfile(layers[k] / mass, grid, mass=mass), mass * beta, J, u)
        dk = 1.0 / np.sqrt(1.0 - m * m) if r == 2 else 1.0
        logw[k] = np.log(r) + 2.0 * beta * conv[k] / r + np.log(dk)
        d_factors.append(float(dk))
        mags.append(float(m))
    verdict = classify_gibbs(beta, partition)
    if not verdict.gibbs:
        warnings.warn(f"beta={beta} is outside the Gibbs regime (rule {verdict.rule})", NonGibbsWarning, stacklevel=2)
    details = {"masses": masses, "d_factors": d_factors, "magnetizations": mags, "verdict": verdict.to_dict()}
    return KernelVector(_normalise_log(logw), logw, not verdict.gibbs, details)


# --- weight jump at the first-order transition ----------------------------------------------


@dataclass(frozen=True)
class WeightJumpScan:
    r: int
    betas: np.ndarray
    weights: np.ndarray
    symmetric: np.ndarray
    beta_c: float
    left_limit: float
    right_limit: float

    @property
    def gap(self) -> float:
        return self.right_limit - self.left_limit

    @property
    def relative_gap(self) -> float:
        return self.gap / self.left_limit


def homogeneous_class_weight(alpha: np.ndarray, beta: float) -> float:
    """``sum_i exp(2 beta alpha_i)``: the class weight at a spatially constant profile."""
    return float(np.exp(2.0 * beta * np.asarray(alpha)).sum())


def weight_jump_scan(r: int, betas: Sequence[float]) -> WeightJumpScan:
    """Class weight along the homogeneous minimiser of the r-state problem.

    The left limit at ``beta_c(r)`` uses the equidistribution and the right
    limit the asymmetric minimiser, which tie in free energy there.
    """
    if r < 3:
        raise DomainError("the weight jump needs a class of size at least 3")
    betas = np.asarray(betas, dtype=float)
    weights, symmetric = np.empty(betas.size), np.empty(betas.size, dtype=bool)
    for i, b in enumerate(betas):
        res = homogeneous_potts_minimizers(r, b)
        # at a tie report the asymmetric branch, matching the >= rule
        alpha = res.minimizers[-1]
        weights[i] = homogeneous_class_weight(alpha, b)
        symmetric[i] = res.n_minimizers == 1 and res.includes_equidistribution
    bc = critical_beta(r)
    at_c = homogeneous_potts_minimizers(r, bc)
    left = homogeneous_class_weight(np.full(r, 1.0 / r), bc)
    right = homogeneous_class_weight(at_c.off_centre_point, bc)
    return WeightJumpScan(r, betas, weights, symmetric, bc, left, right)
