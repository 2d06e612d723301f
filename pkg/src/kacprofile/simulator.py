"""Finite-n Kac-Potts Gibbs sampler on (diluted) torus volumes.

Sites of the lattice ``Z^d / nZ^d`` are addressed by flat C-order indices.
Colours are ``1..q`` in the public types and ``0..q-1`` inside chains.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from . import _kernels
from .errors import ConfigurationError, ContractError, DomainError
from .torus import GridField, InteractionKernel, TorusGrid

THREADS_ENV = "KACPROFILE_THREADS"
MIN_BATCHES = 20
_CHUNK_UPDATES = 1 << 20


def lattice_coords(n: int, d: int) -> np.ndarray:
    return TorusGrid(d, n).coords


def site_index(site, n: int, d: int) -> int:
    """Flat index of a lattice site given as an int or a length-d tuple."""
    if isinstance(site, (int, np.integer)):
        k = int(site)
        if not 0 <= k < n**d:
            raise ContractError(f"site {site} outside the lattice")
        return k
    coords = tuple(int(c) % n for c in site)
    if len(coords) != d:
        raise ContractError(f"site {site!r} is not {d}-dimensional")
    return int(np.ravel_multi_index(coords, (n,) * d))


def torus_point_to_site(u, n: int, d: int) -> int:
    """Nearest lattice site ``x`` to the torus point ``u`` (``x/n ~ u``)."""
    return site_index(TorusGrid(d, n).index_of(u), n, d)


# --- configurations and volumes ---------------------------------------------


@dataclass(frozen=True, eq=False)
class SpinConfiguration:
    """Potts configuration with colours ``1..q`` on ``n**d`` sites."""

    spins: np.ndarray
    n: int
    d: int
    q: int

    def __post_init__(self):
        spins = np.array(self.spins, dtype=np.int64).reshape(-1)
        if spins.size != self.n**self.d:
            raise ContractError(f"{spins.size} spins for a lattice of {self.n ** self.d} sites")
        if spins.size and (spins.min() < 1 or spins.max() > self.q):
            raise DomainError(f"colours must lie in 1..{self.q}")
        spins.setflags(write=False)
        object.__setattr__(self, "spins", spins)

    @classmethod
    def uniform(cls, n, d, q, colour=1):
        return cls(np.full(n**d, colour), n, d, q)

    @classmethod
    def random(cls, n, d, q, rng):
        return cls(rng.integers(1, q + 1, size=n**d), n, d, q)


@dataclass(frozen=True, eq=False)
class Volume:
    """Ordered set of distinct lattice sites."""

    sites: np.ndarray
    n: int
    d: int

    def __post_init__(self):
        sites = np.array(self.sites, dtype=np.int64).reshape(-1)
        if np.unique(sites).size != sites.size:
            raise ContractError("volume has duplicate sites")
        if sites.size and (sites.min() < 0 or sites.max() >= self.n**self.d):
            raise ContractError("volume site outside the lattice")
        sites.setflags(write=False)
        object.__setattr__(self, "sites", sites)

    @classmethod
    def full(cls, n, d):
        return cls(np.arange(n**d), n, d)

    def __len__(self):
        return int(self.sites.size)

    @property
    def coords(self) -> np.ndarray:
        return lattice_coords(self.n, self.d)[self.sites]

    @property
    def points(self) -> np.ndarray:
        return self.coords / self.n


@dataclass(frozen=True)
class FuzzyPartition:
    """Partition of colours ``1..q`` into ``1 < s < q`` classes."""

    classes: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        classes = tuple(tuple(sorted(int(a) for a in c)) for c in self.classes)
        colours = sorted(a for c in classes for a in c)
        q = len(colours)
        if any(len(c) == 0 for c in classes):
            raise ConfigurationError("fuzzy classes must be non-empty")
        if colours != list(range(1, q + 1)):
            raise ConfigurationError(f"classes {classes} do not partition 1..{q}")
        if not 1 < len(classes) < q:
            raise ConfigurationError(f"need 1 < s < q, got s={len(classes)}, q={q}")
        object.__setattr__(self, "classes", classes)

    @property
    def q(self) -> int:
        return sum(len(c) for c in self.classes)

    @property
    def s(self) -> int:
        return len(self.classes)

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(len(c) for c in self.classes)

    def class_map(self) -> np.ndarray:
        """``T[a]`` = class (1-based) of colour ``a``; index 0 unused."""
        out = np.zeros(self.q + 1, dtype=np.int64)
        for i, c in enumerate(self.classes, start=1):
            out[list(c)] = i
        return out

    @classmethod
    def from_sizes(cls, sizes: Sequence[int]):
        classes, start = [], 1
        for r in sizes:
            classes.append(tuple(range(start, start + int(r))))
            start += int(r)
        return cls(tuple(classes))

    @classmethod
    def parse(cls, text: str, q: int | None = None):
        """Parse ``"1,2|3,4"`` (colours per class).

        With ``q`` given, a string such as ``"2|3"`` whose single-number classes
        do not partition ``1..q`` but sum to ``q`` is read as class sizes.
        """
        try:
            groups = [tuple(int(a) for a in part.split(",") if a.strip()) for part in text.split("|")]
        except ValueError as exc:
            raise ConfigurationError(f"cannot parse partition {text!r}") from exc
        try:
            part = cls(tuple(groups))
            if q is None or part.q == q:
                return part
        except ConfigurationError:
            part = None
        if q is not None and all(len(g) == 1 for g in groups) and sum(g[0] for g in groups) == q:
            return cls.from_sizes([g[0] for g in groups])
        raise ConfigurationError(f"{text!r} is not a partition of 1..{q}")

    def __str__(self):
        return "|".join(",".join(str(a) for a in c) for c in self.classes)


@dataclass(frozen=True)
class McOptions:
    seed: int = 0
    burn_in: int = 500
    samples: int = 2000
    thin: int = 1
    chains: int = 4
    batches: int = MIN_BATCHES

    def __post_init__(self):
        for name in ("burn_in", "samples", "thin", "chains"):
            if getattr(self, name) < (0 if name == "burn_in" else 1):
                raise ConfigurationError(f"{name} must be positive")
        if self.batches < MIN_BATCHES:
            raise ConfigurationError(f"need at least {MIN_BATCHES} batches")
        if self.seed < 0:
            raise ConfigurationError("seed must be non-negative")

    @property
    def batches_per_chain(self) -> int:
        return math.ceil(self.batches / self.chains)


def chain_rng(seed: int, stream: int, chain: int) -> np.random.Generator:
    """RNG of chain ``chain`` in stream ``stream``: ``SeedSequence(seed, spawn_key=(stream, chain))``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(stream, chain))))


# --- energies and single sweeps ---------------------------------------------------


def _check_kernel(J: InteractionKernel, n: int, d: int):
    if J.grid != TorusGrid(d, n):
        raise ContractError(f"kernel lives on {J.grid}, lattice is (d={d}, n={n})")


def hamiltonian_energy(config: SpinConfiguration, volume: Volume, J: InteractionKernel) -> float:
    """``H_L = -(1/|L|) sum_{x,y in L} J((x-y)/n) 1{s_x = s_y}`` including the diagonal."""
    if len(volume) == 0:
        raise DomainError("energy of the empty volume is undefined")
    _check_kernel(J, config.n, config.d)
    spins = np.ascontiguousarray(config.spins[volume.sites])
    total = _kernels.matching_pair_sum(np.ascontiguousarray(J.flat), spins, volume.coords, config.n)
    return -total / len(volume)


def coupling_matrix(volume: Volume, J: InteractionKernel) -> np.ndarray:
    """``J((x - y)/n)`` over the volume with the colour-independent diagonal removed."""
    _check_kernel(J, volume.n, volume.d)
    coords = volume.coords
    mat = _kernels.pair_matrix(np.ascontiguousarray(J.flat), coords, coords, volume.n)
    np.fill_diagonal(mat, 0.0)
    return np.ascontiguousarray(mat)


def heat_bath_sweep(
    config: SpinConfiguration, volume: Volume, beta_eff: float, J: InteractionKernel, rng: np.random.Generator
) -> SpinConfiguration:
    """One systematic-scan sweep over ``volume`` of the subvolume Potts model.

    Site ``x`` is redrawn from ``p(a) ~ exp((2 beta_eff/|L|) sum_{y != x} J((x-y)/n) 1{s_y = a})``.
    """
    if beta_eff < 0:
        raise DomainError("inverse temperature must be non-negative")
    spins = config.spins.copy()
    if len(volume) == 0:
        return config
    local = spins[volume.sites] - 1
    coupling = coupling_matrix(volume, J)
    uniforms = rng.random((1, len(volume)))
    _kernels.heat_bath(local, coupling, 2.0 * beta_eff / len(volume), config.q, uniforms, 1)
    spins[volume.sites] = local + 1
    return SpinConfiguration(spins, config.n, config.d, config.q)


def run_chain(
    coupling: np.ndarray,
    coef: float,
    r: int,
    rng: np.random.Generator,
    burn_in: int,
    samples: int,
    thin: int,
    initial: np.ndarray | None = None,
) -> np.ndarray:
    """Run one heat-bath chain and return ``samples`` thinned local configurations (0-based)."""
    size = coupling.shape[0]
    spins = rng.integers(0, r, size=size).astype(np.int64) if initial is None else np.array(initial, dtype=np.int64)
    per_chunk = max(1, _CHUNK_UPDATES // max(size, 1))
    left = burn_in
    while left > 0:
        step = min(left, per_chunk)
        _kernels.heat_bath(spins, coupling, coef, r, rng.random((step, size)), step)
        left -= step
    out = np.empty((samples, size), dtype=np.int8)
    per_chunk = max(1, per_chunk // thin)
    done = 0
    while done < samples:
        step = min(samples - done, per_chunk)
        out[done : done + step] = _kernels.heat_bath(spins, coupling, coef, r, rng.random((step * thin, size)), thin)
        done += step
    return out


def _thread_count(chains: int) -> int:
    try:
        cap = int(os.environ.get(THREADS_ENV, "1"))
    except ValueError as exc:
        raise ConfigurationError(f"{THREADS_ENV} must be an integer") from exc
    return max(1, min(cap, chains))


def _run_chains(coupling, coef, r, opts: McOptions, stream: int) -> list[np.ndarray]:
    """Independent chains; results ordered by chain index whatever the thread count."""

    def one(c):
        return run_chain(coupling, coef, r, chain_rng(opts.seed, stream, c), opts.burn_in, opts.samples, opts.thin)

    workers = _thread_count(opts.chains)
    if workers == 1:
        return [one(c) for c in range(opts.chains)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, range(opts.chains)))


# --- colour profiles -----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ColorProfile:
    """Empirical colour measure of a configuration on a volume: mass ``1/|L|`` at ``(x/n, colour)``."""

    volume: Volume
    colours: np.ndarray
    q: int

    def __post_init__(self):
        colours = np.array(self.colours, dtype=np.int64).reshape(-1)
        if colours.size != len(self.volume):
            raise ContractError("one colour per volume site required")
        if colours.size and (colours.min() < 1 or colours.max() > self.q):
            raise DomainError(f"colours must lie in 1..{self.q}")
        object.__setattr__(self, "colours", colours)

    @property
    def size(self) -> int:
        return len(self.volume)

    @property
    def points(self) -> np.ndarray:
        return self.volume.points

    def weights(self) -> np.ndarray:
        """Mass per (site, colour), shape ``(|L|, q)``; sums to 1."""
        w = np.zeros((self.size, self.q))
        w[np.arange(self.size), self.colours - 1] = 1.0 / self.size
        return w

    def colour_masses(self) -> np.ndarray:
        return np.bincount(self.colours - 1, minlength=self.q) / self.size

    def layer_convolutions(self, J: InteractionKernel, site) -> np.ndarray:
        """``(J * pi[i])(x/n)`` for every colour ``i`` at lattice site ``site``."""
        n, d = self.volume.n, self.volume.d
        _check_kernel(J, n, d)
        k = site_index(site, n, d)
        ju = _kernels.pair_matrix(np.ascontiguousarray(J.flat), lattice_coords(n, d)[[k]], self.volume.coords, n)[0]
        return np.bincount(self.colours - 1, weights=ju, minlength=self.q) / self.size

    def magnetization_bins(self, n_bins: int) -> np.ndarray:
        """For q = 2: ``sum_{x in bin} (1{s=1} - 1{s=2}) / |L|`` per bin (C-order bins)."""
        return _bin_magnetization(self.volume, (self.colours - 1)[None, :], n_bins)[0]

    def site_average_bins(self, n_bins: int) -> np.ndarray:
        """For q = 2: mean of ``1{s=1} - 1{s=2}`` over the volume sites in each bin (NaN if none)."""
        counts = _bin_counts(self.volume, n_bins)
        with np.errstate(invalid="ignore", divide="ignore"):
            return self.magnetization_bins(n_bins) * self.size / counts


def _bin_ids(volume: Volume, n_bins: int) -> np.ndarray:
    if n_bins < 1 or volume.n % n_bins:
        raise ConfigurationError(f"bins ({n_bins}) must divide the lattice size {volume.n}")
    cell = volume.coords // (volume.n // n_bins)
    return np.ravel_multi_index(cell.T, (n_bins,) * volume.d)


def _bin_counts(volume: Volume, n_bins: int) -> np.ndarray:
    return np.bincount(_bin_ids(volume, n_bins), minlength=n_bins**volume.d).astype(float)


def _bin_magnetization(volume: Volume, colours0: np.ndarray, n_bins: int) -> np.ndarray:
    """Per-sample binned magnetisation masses; ``colours0`` is 0-based with shape (S, |L|)."""
    if colours0.size and colours0.max() > 1:
        raise DomainError("magnetisation readout needs two colours")
    spins = 1.0 - 2.0 * colours0
    ids = _bin_ids(volume, n_bins)
    onehot = np.zeros((len(volume), n_bins**volume.d))
    onehot[np.arange(len(volume)), ids] = 1.0
    return spins @ onehot / len(volume)


def volume_from_density(n: int, d: int, density) -> Volume:
    """Sites whose local fraction follows ``density`` (values in ``[0, 1]``).

    ``density`` is a callable of the per-axis coordinates. Sites are kept by
    error diffusion along C order: site ``k`` is kept when the rounded running
    sum of the density increases at ``k``.
    """
    grid = TorusGrid(d, n)
    values = np.broadcast_to(np.asarray(density(*grid.mesh()), dtype=float), grid.shape).reshape(-1)
    if np.any(values < 0) or np.any(values > 1):
        raise DomainError("site density must lie in [0, 1]")
    counts = np.floor(np.cumsum(values) + 0.5)
    keep = np.diff(np.concatenate([[0.0], counts])) > 0
    return Volume(np.flatnonzero(keep), n, d)


def bin_integrals(f: GridField, n_bins: int) -> np.ndarray:
    """``int_cell f`` over each of the ``n_bins**d`` cells (C order)."""
    grid = f.grid
    if grid.N % n_bins:
        raise ConfigurationError(f"bins ({n_bins}) must divide the grid size {grid.N}")
    k = grid.N // n_bins
    shape = sum(((n_bins, k) for _ in range(grid.d)), ())
    return grid.h * f.values.reshape(shape).sum(axis=tuple(range(1, 2 * grid.d, 2))).reshape(-1)


def pair_distance(bins: np.ndarray, reference: np.ndarray) -> np.ndarray:
    """L1 distance of each binned sample to the nearer of ``+reference`` and ``-reference``."""
    bins = np.atleast_2d(bins)
    return np.minimum(np.abs(bins - reference).sum(axis=1), np.abs(bins + reference).sum(axis=1))


def empirical_profile(config: SpinConfiguration, volume: Volume) -> ColorProfile:
    if len(volume) == 0:
        raise DomainError("empirical profile of the empty volume is undefined")
    if (volume.n, volume.d) != (config.n, config.d):
        raise ContractError("volume and configuration live on different lattices")
    return ColorProfile(volume, config.spins[volume.sites], config.q)


@dataclass(frozen=True, eq=False)
class ProfileSamples:
    """Thinned post-burn-in samples of the empirical profile, stored compactly."""

    volume: Volume
    r: int
    colours0: np.ndarray
    chain: np.ndarray
    beta_eff: float

    def __len__(self):
        return int(self.colours0.shape[0])

    def __getitem__(self, i) -> ColorProfile:
        return ColorProfile(self.volume, self.colours0[i].astype(np.int64) + 1, self.r)

    def __iter__(self) -> Iterator[ColorProfile]:
        return (self[i] for i in range(len(self)))

    def colour_masses(self) -> np.ndarray:
        """Shape ``(S, r)``: fraction of volume sites per colour in each sample."""
        counts = np.stack([(self.colours0 == a).sum(axis=1) for a in range(self.r)], axis=1)
        return counts / len(self.volume)

    def magnetization_bins(self, n_bins: int) -> np.ndarray:
        return _bin_magnetization(self.volume, self.colours0, n_bins)

    def a_values(self, J: InteractionKernel, site, beta: float) -> np.ndarray:
        """``A_r(pi, x/n, beta)`` for every sample."""
        n, d = self.volume.n, self.volume.d
        k = site_index(site, n, d)
        ju = _kernels.pair_matrix(np.ascontiguousarray(J.flat), lattice_coords(n, d)[[k]], self.volume.coords, n)[0]
        layer = np.stack([(self.colours0 == a) @ ju for a in range(self.r)], axis=1) / len(self.volume)
        return np.exp(2.0 * beta * layer).sum(axis=1)


def sample_profiles(
    volume: Volume, beta_eff: float, r: int, opts: McOptions, J: InteractionKernel, stream: int = 0
) -> ProfileSamples:
    """Samples of ``pi_L`` under the subvolume Gibbs measure ``mu_{L, beta_eff, r}``."""
    if len(volume) == 0:
        raise DomainError("cannot sample on the empty volume")
    if beta_eff < 0:
        raise DomainError("inverse temperature must be non-negative")
    coupling = coupling_matrix(volume, J)
    runs = _run_chains(coupling, 2.0 * beta_eff / len(volume), r, opts, stream)
    chain = np.repeat(np.arange(opts.chains), opts.samples)
    return ProfileSamples(volume, int(r), np.concatenate(runs), chain, float(beta_eff))


def batch_means(values: np.ndarray, chain: np.ndarray, batches_per_chain: int) -> tuple[float, float, int]:
    """Mean and batch-means standard error, batching within each chain."""
    means = []
    for c in np.unique(chain):
        series = values[chain == c]
        if series.size < batches_per_chain:
            raise ConfigurationError("fewer samples than batches in a chain")
        means.extend(np.mean(b) for b in np.array_split(series, batches_per_chain))
    means = np.asarray(means)
    se = float(np.std(means, ddof=1) / np.sqrt(means.size)) if means.size > 1 else 0.0
    return float(np.mean(values)), se, int(means.size)


# --- fuzzy layer ---------------------------------------------------------------


def fuzzy_project(config: SpinConfiguration, partition: FuzzyPartition) -> SpinConfiguration:
    if partition.q != config.q:
        raise ContractError(f"partition covers {partition.q} colours, configuration has {config.q}")
    return SpinConfiguration(partition.class_map()[config.spins], config.n, config.d, partition.s)


def fuzzy_configuration(kind: str, n: int, d: int, s: int, rng: np.random.Generator | None = None) -> SpinConfiguration:
    """Named fuzzy configurations: ``homogeneous:k``, ``alternating``, ``random``."""
    coords = lattice_coords(n, d)
    if kind.startswith("homogeneous"):
        _, _, k = kind.partition(":")
        return SpinConfiguration(np.full(n**d, int(k or 1)), n, d, s)
    if kind == "alternating":
        return SpinConfiguration(coords.sum(axis=1) % s + 1, n, d, s)
    if kind == "random":
        rng = rng or np.random.default_rng(0)
        return SpinConfiguration(rng.integers(1, s + 1, size=n**d), n, d, s)
    raise ConfigurationError(f"unknown fuzzy configuration {kind!r}")


def diluted_volume(fuzzy: SpinConfiguration, i: int, u, beta: float = 1.0) -> tuple[Volume, float]:
    """Sites other than ``u`` carrying class ``i`` and the renormalised ``beta n^-d |L|``."""
    if not 1 <= i <= fuzzy.q:
        raise ContractError(f"class {i} outside 1..{fuzzy.q}")
    k = site_index(u, fuzzy.n, fuzzy.d)
    mask = fuzzy.spins == i
    mask[k] = False
    sites = np.flatnonzero(mask)
    return Volume(sites, fuzzy.n, fuzzy.d), beta * sites.size / fuzzy.n**fuzzy.d


def perforated_class_densities(fuzzy: SpinConfiguration, u) -> np.ndarray:
    """Grid densities of the perforated fuzzy profile: ``1{nu(x) = k, x != u}``, shape ``(s, n, ..., n)``."""
    k = site_index(u, fuzzy.n, fuzzy.d)
    out = np.stack([(fuzzy.spins == c).astype(float) for c in range(1, fuzzy.q + 1)])
    out[:, k] = 0.0
    return out.reshape((fuzzy.q,) + (fuzzy.n,) * fuzzy.d)


@dataclass(frozen=True)
class KernelEstimate:
    kernel: np.ndarray
    stderr: np.ndarray
    weights: np.ndarray
    weight_stderr: np.ndarray
    diagnostics: dict = field(default_factory=dict)


def estimate_kernel(
    fuzzy: SpinConfiguration,
    u,
    beta: float,
    partition: FuzzyPartition,
    opts: McOptions,
    J: InteractionKernel,
) -> KernelEstimate:
    """Monte-Carlo single-site kernel from the diluted-model representation.

    Class ``l`` gets weight ``E[A_{r_l}(pi, u, beta_l)]`` under the Potts model
    on its diluted volume at ``beta_l = beta n^-d |L_l|``; empty classes get
    ``r_l``. Standard errors come from batch means and are propagated to the
    normalised vector.
    """
    if not isinstance(opts, McOptions):
        raise ConfigurationError("opts must be McOptions")
    if fuzzy.q != partition.s:
        raise ContractError(f"fuzzy configuration has {fuzzy.q} classes, partition {partition.s}")
    _check_kernel(J, fuzzy.n, fuzzy.d)
    if beta < 0:
        raise DomainError("inverse temperature must be non-negative")
    site = site_index(u, fuzzy.n, fuzzy.d)
    s = partition.s
    w, se = np.zeros(s), np.zeros(s)
    diag = {"classes": []}
    for l in range(1, s + 1):
        r = partition.sizes[l - 1]
        vol, beta_l = diluted_volume(fuzzy, l, site, beta)
        info = {"class": l, "size": r, "sites": len(vol), "beta": beta_l, "method": "exact"}
        if len(vol) == 0 or beta_l == 0.0:
            w[l - 1] = r
        elif r == 1:
            profile = ColorProfile(vol, np.ones(len(vol), dtype=np.int64), 1)
            w[l - 1] = float(np.exp(2.0 * beta_l * profile.layer_convolutions(J, site)).sum())
        else:
            samples = sample_profiles(vol, beta_l, r, opts, J, stream=l)
            a = samples.a_values(J, site, beta_l)
            w[l - 1], se[l - 1], nb = batch_means(a, samples.chain, opts.batches_per_chain)
            info.update(method="mcmc", samples=len(samples), batches=nb, a_std=float(np.std(a)))
        diag["classes"].append(info)
    total = w.sum()
    kernel = w / total
    # delta method for w_k / sum(w) with independent class estimates
    grad = (np.eye(s) * total - w[:, None]) / total**2
    stderr = np.sqrt((grad**2) @ (se**2))
    return KernelEstimate(kernel, stderr, w, se, diag)
