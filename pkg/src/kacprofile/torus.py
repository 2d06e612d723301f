"""Uniform grids on the unit torus, midpoint quadrature and periodic convolution."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Mapping

import numpy as np

from . import _kernels
from .errors import ConfigurationError, ContractError, DomainError

MAX_DIMENSION = 2


@dataclass(frozen=True)
class TorusGrid:
    """The lattice ``{k/N : k = 0..N-1}^d`` on the unit torus.

    Every site carries the quadrature weight ``h = N**-d``.
    """

    d: int
    N: int

    def __post_init__(self):
        if not isinstance(self.d, (int, np.integer)) or not 1 <= self.d <= MAX_DIMENSION:
            raise ConfigurationError(f"dimension must be 1 or 2, got {self.d!r}")
        if not isinstance(self.N, (int, np.integer)) or self.N < 2:
            raise ConfigurationError(f"need at least 2 points per axis, got {self.N!r}")

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.N,) * self.d

    @property
    def size(self) -> int:
        return self.N**self.d

    @property
    def h(self) -> float:
        return float(self.N) ** (-self.d)

    @property
    def axis(self) -> np.ndarray:
        return np.arange(self.N) / self.N

    @cached_property
    def coords(self) -> np.ndarray:
        """Integer site coordinates, shape ``(size, d)``, C order."""
        idx = np.indices(self.shape).reshape(self.d, -1).T
        return np.ascontiguousarray(idx, dtype=np.int64)

    @property
    def points(self) -> np.ndarray:
        """Site locations in ``[0, 1)^d``, shape ``(size, d)``."""
        return self.coords / self.N

    def mesh(self) -> list[np.ndarray]:
        """Per-axis coordinate arrays broadcast to :attr:`shape`."""
        return np.meshgrid(*([self.axis] * self.d), indexing="ij")

    def index_of(self, point) -> tuple[int, ...]:
        """Grid index of the site nearest to a torus point (scalar or length-d)."""
        p = np.atleast_1d(np.asarray(point, dtype=float))
        if p.shape != (self.d,):
            raise ContractError(f"point {point!r} is not a {self.d}-d torus point")
        return tuple(int(k) for k in np.rint(p * self.N).astype(int) % self.N)

    def field(self, values) -> GridField:
        return GridField(values, self)

    def header(self) -> dict:
        return {"d": self.d, "N": self.N}


def make_grid(d: int, N: int) -> TorusGrid:
    return TorusGrid(d, N)


@dataclass(frozen=True, eq=False)
class GridField:
    """Real values sampled at every site of a :class:`TorusGrid`."""

    values: np.ndarray
    grid: TorusGrid

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.shape != self.grid.shape:
            if vals.size == self.grid.size:
                vals = vals.reshape(self.grid.shape)
            else:
                raise ContractError(f"values of shape {vals.shape} do not fit grid {self.grid.shape}")
        if not np.all(np.isfinite(vals)):
            raise DomainError("grid field has non-finite values")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)

    def at(self, point) -> float:
        return float(self.values[self.grid.index_of(point)])

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)

    def __len__(self):
        return self.grid.size


@dataclass(frozen=True, eq=False)
class InteractionKernel(GridField):
    """Samples of a symmetric, non-negative interaction function with unit integral."""

    def __post_init__(self):
        super().__post_init__()
        if np.any(self.values < 0):
            raise DomainError("interaction kernel must be non-negative")
        if not np.allclose(self.values, reflect(self.values), rtol=0, atol=1e-12):
            raise DomainError("interaction kernel must satisfy J(v) = J(-v)")
        if abs(integrate(self) - 1.0) > 1e-10:
            raise DomainError("interaction kernel must integrate to 1")

    @property
    def strictly_positive(self) -> bool:
        return bool(np.all(self.values > 0))


@dataclass(frozen=True, eq=False)
class DensityProfile(GridField):
    """A probability density ``rho~`` on the torus together with the raw mass ``N_rho``."""

    mass: float = 1.0

    def __post_init__(self):
        super().__post_init__()
        if np.any(self.values < 0):
            raise DomainError("density must be non-negative")
        if not self.mass > 0:
            raise DomainError(f"density mass must be positive, got {self.mass}")
        if abs(integrate(self) - 1.0) > 1e-10:
            raise DomainError("normalised density must integrate to 1")


def reflect(values: np.ndarray) -> np.ndarray:
    """``v -> values(-v)`` on the periodic lattice."""
    out = values
    for axis in range(values.ndim):
        out = np.roll(np.flip(out, axis=axis), 1, axis=axis)
    return out


def sample(grid: TorusGrid, func: Callable) -> np.ndarray:
    """Evaluate ``func(*axes)`` on the grid; scalars broadcast."""
    vals = np.asarray(func(*grid.mesh()), dtype=float)
    return np.broadcast_to(vals, grid.shape).copy()


def make_kernel(grid: TorusGrid, source) -> InteractionKernel:
    """Sample an interaction function on ``grid`` and renormalise it.

    ``source`` is a callable of the per-axis coordinates, an array of
    samples, or a :class:`GridField`. The samples are symmetrised by
    averaging ``J(v)`` and ``J(-v)``; round-off negatives down to ``-1e-12``
    are clipped to zero; the result is scaled to integrate to exactly 1.
    """
    if isinstance(source, GridField):
        if source.grid != grid:
            raise ContractError("kernel samples live on a different grid")
        vals = np.array(source.values)
    elif callable(source):
        vals = sample(grid, source)
    else:
        vals = np.array(source, dtype=float).reshape(grid.shape)
    if np.any(vals < -1e-12):
        raise DomainError("interaction function takes negative values")
    vals = np.clip(vals, 0.0, None)
    vals = 0.5 * (vals + reflect(vals))
    total = grid.h * vals.sum()
    if not total > 0:
        raise DomainError("interaction function has zero integral")
    return InteractionKernel(vals / total, grid)


def integrate(f: GridField) -> float:
    """Midpoint rule ``h * sum(f)``."""
    return float(f.grid.h * np.sum(f.values))


def _check_same_grid(*fields: GridField):
    grid = fields[0].grid
    for f in fields[1:]:
        if f.grid != grid:
            raise ContractError(f"grid mismatch: {grid} vs {f.grid}")
    return grid


def convolve(J: GridField, f: GridField, method: str = "fft") -> GridField:
    """Periodic convolution ``(J * f)(u_k) = h * sum_j J(u_k - u_j) f(u_j)``.

    ``method="direct"`` is the O(N^2d) reference sum; ``"fft"`` is the
    spectral fast path.
    """
    grid = _check_same_grid(J, f)
    return GridField(_convolve_values(J.values, f.values, grid, method), grid)


def _convolve_values(jv: np.ndarray, fv: np.ndarray, grid: TorusGrid, method: str = "fft") -> np.ndarray:
    if method == "fft":
        out = np.fft.ifftn(np.fft.fftn(jv) * np.fft.fftn(fv)).real
    elif method == "direct":
        out = _kernels.circular_direct(
            np.ascontiguousarray(jv.reshape(-1)), np.ascontiguousarray(fv.reshape(-1)), grid.coords, grid.N
        ).reshape(grid.shape)
    else:
        raise ConfigurationError(f"unknown convolution method {method!r}")
    return grid.h * out


def normalize_density(raw: GridField) -> DensityProfile:
    """Scale a non-negative field to unit integral, recording the original mass."""
    if np.any(raw.values < 0):
        raise DomainError("density must be non-negative")
    mass = integrate(raw)
    if not mass > 0:
        raise DomainError("density must have positive mass")
    return DensityProfile(raw.values / mass, raw.grid, mass=mass)


def uniform_density(grid: TorusGrid) -> DensityProfile:
    return DensityProfile(np.ones(grid.shape), grid, mass=1.0)


# --- serialisation ------------------------------------------------------------


def _coordinate_columns(grid: TorusGrid) -> list[str]:
    return ["u"] if grid.d == 1 else [f"u{a + 1}" for a in range(grid.d)]


def fields_to_csv(fields: Mapping[str, GridField], meta: dict | None = None) -> str:
    """CSV text with one row per site: coordinates followed by each field.

    The first line is a ``#`` comment carrying the grid ``(d, N)`` and any
    extra metadata as JSON.
    """
    grids = [f.grid for f in fields.values()]
    grid = grids[0]
    if any(g != grid for g in grids):
        raise ContractError("all fields must share a grid")
    buf = io.StringIO()
    header = {"grid": grid.header()}
    if meta:
        header.update(meta)
    buf.write("# " + json.dumps(header, sort_keys=True) + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(_coordinate_columns(grid) + list(fields))
    columns = [f.flat for f in fields.values()]
    for k, point in enumerate(grid.points):
        writer.writerow([repr(float(x)) for x in point] + [repr(float(c[k])) for c in columns])
    return buf.getvalue()


def fields_from_csv(text: str, d: int | None = None) -> tuple[TorusGrid, dict[str, GridField]]:
    """Inverse of :func:`fields_to_csv`; the ``#`` header line is optional."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    meta = {}
    if lines and lines[0].startswith("#"):
        meta = json.loads(lines[0][1:])
        lines = lines[1:]
    rows = list(csv.reader(lines))
    names, body = rows[0], np.array(rows[1:], dtype=float)
    if "grid" in meta:
        grid = TorusGrid(int(meta["grid"]["d"]), int(meta["grid"]["N"]))
    else:
        dim = d or sum(1 for c in names if c == "u" or (c.startswith("u") and c[1:].isdigit()))
        N = int(round(len(body) ** (1.0 / dim)))
        grid = TorusGrid(dim, N)
    if len(body) != grid.size:
        raise ContractError(f"CSV has {len(body)} rows, grid {grid} needs {grid.size}")
    ncoord = grid.d
    index = np.rint(body[:, :ncoord] * grid.N).astype(int) % grid.N
    order = np.ravel_multi_index(index.T, grid.shape)
    out = {}
    for c, name in enumerate(names[ncoord:], start=ncoord):
        vals = np.empty(grid.size)
        vals[order] = body[:, c]
        out[name] = GridField(vals, grid)
    return grid, out


def field_to_json(f: GridField) -> dict:
    return {"grid": f.grid.header(), "values": f.values.tolist()}
