"""Time the numba and numpy backends of the hot kernels.

Usage::

    python benchmarks/bench_kernels.py [--repeat 5]

Each kernel runs on identical inputs under both backends; outputs are
checked for agreement before timings are reported.
"""

from __future__ import annotations

import argparse
import time
from typing import Callable

import numpy as np

from kacprofile import _accel, _kernels
from kacprofile.simulator import lattice_coords


def _best_of(fn: Callable[[], object], repeat: int) -> float:
    best = np.inf
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def cases(rng: np.random.Generator) -> dict[str, Callable[[], np.ndarray]]:
    n_grid = 512
    u = np.arange(n_grid) / n_grid
    jv = 1.0 + np.cos(2 * np.pi * u)
    rho = 1.0 + np.cos(2 * np.pi * u)
    m = np.tanh(rng.normal(size=n_grid))
    coords = lattice_coords(n_grid, 1)

    n_lat = 256
    jl = 1.0 + np.cos(2 * np.pi * np.arange(n_lat) / n_lat)
    lat = lattice_coords(n_lat, 1)
    spins = rng.integers(1, 4, size=n_lat)
    coupling = _kernels.pair_matrix(jl, lat, lat, n_lat)
    np.fill_diagonal(coupling, 0.0)
    sweeps = 50
    uniforms = rng.random((sweeps, n_lat))
    start = rng.integers(0, 3, size=n_lat).astype(np.int64)

    def heat_bath():
        local = start.copy()
        return _kernels.heat_bath(local, coupling, 2.0 / n_lat, 3, uniforms, 1)

    return {
        "circular_direct (N=512)": lambda: _kernels.circular_direct(jv, m, coords, n_grid),
        "pairwise_penalty (N=512)": lambda: np.array(_kernels.pairwise_penalty(jv, rho, m, coords, n_grid)),
        "matching_pair_sum (n=256)": lambda: np.array(_kernels.matching_pair_sum(jl, spins, lat, n_lat)),
        f"heat_bath (n=256, {sweeps} sweeps)": heat_bath,
    }


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)
    if not _accel.HAVE_NUMBA:
        print("numba is not installed; nothing to compare")
        return 1
    table = cases(np.random.default_rng(0))
    print(f"{'kernel':34s} {'numpy [ms]':>11s} {'numba [ms]':>11s} {'speedup':>8s}")
    for name, fn in table.items():
        with _accel.use_backend("numba"):
            fast_out = fn()  # also triggers compilation
            fast = _best_of(fn, args.repeat)
        with _accel.use_backend("numpy"):
            slow_out = fn()
            slow = _best_of(fn, args.repeat)
        if not np.allclose(fast_out, slow_out, rtol=1e-12, atol=1e-12):
            raise SystemExit(f"backends disagree on {name}")
        print(f"{name:34s} {1e3 * slow:11.3f} {1e3 * fast:11.3f} {slow / fast:8.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
