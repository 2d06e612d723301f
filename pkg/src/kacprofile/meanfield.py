"""Scalar mean-field layer: entropies, the local Curie-Weiss potential and
homogeneous Potts minimisers.

Conventions follow the ordered-pair Potts energy without a factor 1/2, so the
homogeneous r-state functional is ``g(alpha) = -b * sum(alpha**2) + S(alpha|eq)``
and the Curie-Weiss equation reads ``m = tanh(b m)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import xlogy

from .errors import DomainError

SIMPLEX_TOL = 1e-12
# Largest magnetisation returned by the fixed-point solver.
M_CEILING = 1.0 - 1e-15
# Off-centre and centre values closer than this count as a tie.
TIE_TOL = 1e-10


def binary_entropy(x):
    """Curie-Weiss entropy ``((1+x)/2) log(1+x) + ((1-x)/2) log(1-x)``.

    Accepts scalars or arrays; equals ``log 2`` at ``x = +-1``.
    """
    arr = np.asarray(x, dtype=float)
    if np.any(np.abs(arr) > 1.0) or np.any(np.isnan(arr)):
        raise DomainError("binary entropy needs |x| <= 1")
    out = 0.5 * (xlogy(1.0 + arr, 1.0 + arr) + xlogy(1.0 - arr, 1.0 - arr))
    return float(out) if out.ndim == 0 else out


def binary_entropy_derivative(x):
    """``arctanh(x)``, defined on the open interval only."""
    arr = np.asarray(x, dtype=float)
    if np.any(np.abs(arr) >= 1.0):
        raise DomainError("entropy derivative needs |x| < 1")
    out = np.arctanh(arr)
    return float(out) if out.ndim == 0 else out


def check_simplex(alpha) -> np.ndarray:
    a = np.asarray(alpha, dtype=float)
    if a.ndim != 1 or a.size < 1:
        raise DomainError("simplex vector must be one-dimensional")
    if np.any(a < -SIMPLEX_TOL) or abs(a.sum() - 1.0) > SIMPLEX_TOL:
        raise DomainError(f"{a} is not on the probability simplex")
    return np.clip(a, 0.0, None)


def relative_entropy(alpha) -> float:
    """``S(alpha | eq) = sum_a alpha_a log(r alpha_a)`` with ``0 log 0 = 0``."""
    a = check_simplex(alpha)
    return float(np.sum(xlogy(a, a.size * a)))


def local_potential(b, m):
    """``Phi(m) = -b m^2 / 2 + I(m)``, the Curie-Weiss rate at inverse temperature ``b``."""
    if np.any(np.asarray(b) < 0):
        raise DomainError("local inverse temperature must be non-negative")
    return -0.5 * np.asarray(b) * np.asarray(m) ** 2 + binary_entropy(m)


def cw_fixed_point(b):
    """Largest non-negative root of ``m = tanh(b m)``.

    Vectorised bisection; returns 0 wherever ``b <= 1 + 1e-12``. Results
    stay below ``1 - 1e-15`` so that ``arctanh`` is finite.
    """
    barr = np.asarray(b, dtype=float)
    if np.any(barr < 0) or np.any(np.isnan(barr)):
        raise DomainError("inverse temperature must be non-negative")
    flat = barr.reshape(-1)
    out = np.zeros_like(flat)
    live = flat > 1.0 + 1e-12
    if np.any(live):
        bl = flat[live]
        # tanh(b m) - m > 0 on (0, m*); near b = 1 the root is ~ sqrt(3(b - 1)).
        lo = np.minimum(0.5 * np.sqrt(3.0 * (bl - 1.0)), 0.5)
        while True:
            bad = np.tanh(bl * lo) - lo <= 0
            if not np.any(bad):
                break
            lo[bad] *= 0.5
        hi = np.full_like(bl, M_CEILING)
        saturated = np.tanh(bl * hi) - hi >= 0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            up = np.tanh(bl * mid) - mid > 0
            lo = np.where(up, mid, lo)
            hi = np.where(up, hi, mid)
            if np.all(hi - lo <= 4e-16 * hi):
                break
        res = 0.5 * (lo + hi)
        res[saturated] = M_CEILING
        out[live] = res
    out = out.reshape(barr.shape)
    return float(out) if out.ndim == 0 else out


# --- homogeneous r-state Potts problem -------------------------------------------


def potts_free_energy(alpha, b: float) -> float:
    """``g(alpha) = -b sum alpha_a^2 + S(alpha | eq)``."""
    a = check_simplex(alpha)
    return float(-b * np.sum(a * a) + np.sum(xlogy(a, a.size * a)))


def family_point(r: int, x: float) -> np.ndarray:
    """``(x, (1-x)/(r-1), ..., (1-x)/(r-1))``."""
    rest = (1.0 - x) / (r - 1)
    return np.array([x] + [rest] * (r - 1))


def _family_energy(x, r: int, b: float):
    """``g`` along the one-parameter family, vectorised in ``x``."""
    x = np.asarray(x, dtype=float)
    y = 1.0 - x
    quad = x * x + y * y / (r - 1)
    ent = xlogy(x, r * x) + xlogy(y, r * y / (r - 1))
    return -b * quad + ent


def _centre_curvature(r: int, b: float) -> float:
    """Second derivative of ``g`` along the family at the equidistribution."""
    return (r * r - 2.0 * b * r) / (r - 1)


def _off_centre_minimum(r: int, b: float, grid_points: int = 4001) -> tuple[float, float]:
    """Best point of the family with ``x`` away from ``1/r``: grid search then refinement."""
    centre = 1.0 / r
    xs = np.linspace(centre, 1.0, grid_points)[1:]
    vals = _family_energy(xs, r, b)
    k = int(np.argmin(vals))
    lo = xs[max(k - 1, 0)] if k > 0 else centre
    hi = xs[min(k + 1, xs.size - 1)]
    res = minimize_scalar(
        lambda t: float(_family_energy(t, r, b)), bounds=(lo, hi), method="bounded", options={"xatol": 1e-13}
    )
    x_best, v_best = float(res.x), float(res.fun)
    if vals[k] < v_best:
        x_best, v_best = float(xs[k]), float(vals[k])
    return x_best, v_best


@dataclass(frozen=True)
class HomogeneousMinimizers:
    """Global minimisers of the homogeneous r-state problem at one ``b``."""

    r: int
    b: float
    minimizers: tuple[np.ndarray, ...]
    value: float
    includes_equidistribution: bool
    centre_value: float
    off_centre_value: float
    off_centre_point: np.ndarray

    @property
    def n_minimizers(self) -> int:
        return len(self.minimizers)

    def order_parameter(self) -> float:
        """``(r max(alpha) - 1)/(r - 1)`` of the least symmetric minimiser (``|m|`` for r = 2)."""
        top = max(float(np.max(a)) for a in self.minimizers)
        return (self.r * top - 1.0) / (self.r - 1)


def homogeneous_potts_minimizers(r: int, b: float) -> HomogeneousMinimizers:
    """Global minimisers of ``g`` restricted to the family ``(x, (1-x)/(r-1), ...)``.

    Minimisers are reported with all their distinct coordinate permutations.
    At a tie (within ``1e-10``) both the equidistribution and the
    asymmetric minimisers are returned.
    """
    if int(r) != r or r < 2:
        raise DomainError(f"need r >= 2 colours, got {r}")
    if b < 0:
        raise DomainError("inverse temperature must be non-negative")
    r = int(r)
    centre_value = -b / r
    x_off, v_off = _off_centre_minimum(r, b)
    asymmetric = x_off > 1.0 / r + 1e-7
    unstable_centre = _centre_curvature(r, b) < 0
    if not asymmetric:
        keep_centre, keep_off = True, False
    elif unstable_centre:
        keep_centre, keep_off = False, True
    elif abs(v_off - centre_value) <= TIE_TOL:
        keep_centre, keep_off = True, True
    else:
        keep_centre, keep_off = v_off > centre_value, v_off < centre_value
    mins: list[np.ndarray] = []
    if keep_centre:
        mins.append(np.full(r, 1.0 / r))
    point = family_point(r, x_off)
    if keep_off:
        # distinct permutations of the family point: position of the large coordinate
        for i in range(r):
            mins.append(np.roll(point, i))
    value = min(centre_value, v_off) if keep_off else centre_value
    return HomogeneousMinimizers(
        r=r,
        b=float(b),
        minimizers=tuple(mins),
        value=float(value),
        includes_equidistribution=keep_centre,
        centre_value=float(centre_value),
        off_centre_value=float(v_off),
        off_centre_point=point,
    )


def _centre_not_minimal(r: int, b: float) -> bool:
    if _centre_curvature(r, b) < 0:
        return True
    x_off, v_off = _off_centre_minimum(r, b)
    return x_off > 1.0 / r + 1e-7 and v_off < -b / r - 1e-14


def potts_beta_c(r: int, tol: float = 1e-12) -> float:
    """Critical inverse temperature of the homogeneous r-state problem.

    Smallest ``b`` at which the equidistribution stops being the unique
    global minimiser, located by bisection on that predicate.
    """
    if int(r) != r or r < 2:
        raise DomainError(f"need r >= 2 colours, got {r}")
    r = int(r)
    lo, hi = 0.0, r / 2.0 + 1e-9  # the centre is a saddle beyond r/2
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if _centre_not_minimal(r, mid):
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def potts_beta_c_closed_form(r: int) -> float:
    """``1`` for r = 2, ``((r-1)/(r-2)) log(r-1)`` otherwise. Cross-check only."""
    if r == 2:
        return 1.0
    return (r - 1) / (r - 2) * np.log(r - 1)
