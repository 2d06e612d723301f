"""Hot inner loops, each with a numba and a pure-numpy implementation.

Lattice sites are addressed by integer coordinate rows ``coords[k] = (c_1, ..., c_d)``
with ``0 <= c_a < n``. A periodic kernel is stored flat in C order, so the
value at displacement ``c_k - c_j`` lives at ``ravel((c_k - c_j) mod n)``.
The public wrappers dispatch on :func:`kacprofile._accel.backend`.
"""

import numpy as np

from ._accel import backend, njit


def _difference_index(coords_a, coords_b, n):
    """Flat index of ``(a - b) mod n`` for every pair, shape ``(len(a), len(b))``."""
    diff = (coords_a[:, None, :] - coords_b[None, :, :]) % n
    idx = np.zeros(diff.shape[:2], dtype=np.int64)
    for axis in range(diff.shape[2]):
        idx = idx * n + diff[:, :, axis]
    return idx


def pair_matrix(kernel_flat, coords_a, coords_b, n):
    """Dense matrix ``K[i, j] = J(a_i - b_j)``."""
    return kernel_flat[_difference_index(coords_a, coords_b, n)]


# --- direct periodic convolution --------------------------------------------


@njit
def _circular_direct_numba(kernel_flat, f, coords, n):
    m, d = coords.shape
    out = np.zeros(m)
    for k in range(m):
        acc = 0.0
        for j in range(m):
            idx = 0
            for a in range(d):
                idx = idx * n + (coords[k, a] - coords[j, a]) % n
            acc += kernel_flat[idx] * f[j]
        out[k] = acc
    return out


def _circular_direct_numpy(kernel_flat, f, coords, n):
    return pair_matrix(kernel_flat, coords, coords, n) @ f


def circular_direct(kernel_flat, f, coords, n):
    """Unscaled periodic sum ``out[k] = sum_j J(c_k - c_j) f[j]``."""
    if backend() == "numba":
        return _circular_direct_numba(kernel_flat, f, coords, n)
    return _circular_direct_numpy(kernel_flat, f, coords, n)


# --- inhomogeneity penalty ----------------------------------------------------


@njit
def _pairwise_penalty_numba(kernel_flat, rho, m, coords, n):
    size, d = coords.shape
    acc = 0.0
    for k in range(size):
        rk = rho[k]
        if rk == 0.0:
            continue
        for j in range(size):
            idx = 0
            for a in range(d):
                idx = idx * n + (coords[k, a] - coords[j, a]) % n
            diff = m[k] - m[j]
            acc += rk * rho[j] * diff * diff * kernel_flat[idx]
    return acc


def _pairwise_penalty_numpy(kernel_flat, rho, m, coords, n):
    jm = pair_matrix(kernel_flat, coords, coords, n)
    diff = m[:, None] - m[None, :]
    return float(np.einsum("k,j,kj,kj->", rho, rho, diff * diff, jm))


def pairwise_penalty(kernel_flat, rho, m, coords, n):
    """``sum_{k,j} rho_k rho_j (m_k - m_j)^2 J(c_k - c_j)`` without quadrature weights."""
    if backend() == "numba":
        return _pairwise_penalty_numba(kernel_flat, rho, m, coords, n)
    return _pairwise_penalty_numpy(kernel_flat, rho, m, coords, n)


# --- Potts pair energy --------------------------------------------------------


@njit
def _matching_pair_sum_numba(kernel_flat, spins, coords, n):
    size, d = coords.shape
    acc = 0.0
    for x in range(size):
        for y in range(size):
            if spins[x] != spins[y]:
                continue
            idx = 0
            for a in range(d):
                idx = idx * n + (coords[x, a] - coords[y, a]) % n
            acc += kernel_flat[idx]
    return acc


def _matching_pair_sum_numpy(kernel_flat, spins, coords, n):
    jm = pair_matrix(kernel_flat, coords, coords, n)
    return float(jm[spins[:, None] == spins[None, :]].sum())


def matching_pair_sum(kernel_flat, spins, coords, n):
    """Ordered-pair sum ``sum_{x,y} J(x - y) 1{s_x = s_y}`` including ``x = y``."""
    if backend() == "numba":
        return _matching_pair_sum_numba(kernel_flat, spins, coords, n)
    return _matching_pair_sum_numpy(kernel_flat, spins, coords, n)


# --- heat-bath sweeps ---------------------------------------------------------


@njit
def _heat_bath_numba(spins, coupling, coef, r, uniforms, thin):
    size = spins.shape[0]
    n_sweeps = uniforms.shape[0]
    field = np.zeros((size, r))
    for x in range(size):
        for y in range(size):
            field[x, spins[y]] += coupling[x, y]
    records = np.empty((n_sweeps // thin, size), dtype=np.int8)
    logits = np.empty(r)
    cum = np.empty(r)
    rec = 0
    for sweep in range(n_sweeps):
        for x in range(size):
            top = -np.inf
            for a in range(r):
                logits[a] = coef * field[x, a]
                if logits[a] > top:
                    top = logits[a]
            total = 0.0
            for a in range(r):
                total += np.exp(logits[a] - top)
                cum[a] = total
            target = uniforms[sweep, x] * total
            new = r - 1
            for a in range(r):
                if target < cum[a]:
                    new = a
                    break
            old = spins[x]
            if new != old:
                for y in range(size):
                    field[y, old] -= coupling[y, x]
                    field[y, new] += coupling[y, x]
                spins[x] = new
        if (sweep + 1) % thin == 0:
            for x in range(size):
                records[rec, x] = spins[x]
            rec += 1
    return records


def _heat_bath_numpy(spins, coupling, coef, r, uniforms, thin):
    size = spins.shape[0]
    onehot = np.zeros((size, r))
    onehot[np.arange(size), spins] = 1.0
    field = coupling @ onehot
    n_sweeps = uniforms.shape[0]
    records = np.empty((n_sweeps // thin, size), dtype=np.int8)
    rec = 0
    for sweep in range(n_sweeps):
        for x in range(size):
            logits = coef * field[x]
            cum = np.cumsum(np.exp(logits - logits.max()))
            new = min(int(np.searchsorted(cum, uniforms[sweep, x] * cum[-1], side="right")), r - 1)
            old = spins[x]
            if new != old:
                field[:, old] -= coupling[:, x]
                field[:, new] += coupling[:, x]
                spins[x] = new
        if (sweep + 1) % thin == 0:
            records[rec] = spins
            rec += 1
    return records


def heat_bath(spins, coupling, coef, r, uniforms, thin=1):
    """Systematic-scan heat-bath sweeps, updating ``spins`` in place.

    Parameters
    ----------
    spins : ndarray of int64, shape (L,)
        Colours ``0..r-1``; modified in place.
    coupling : ndarray, shape (L, L)
        ``J(x - y)`` with a zero diagonal.
    coef : float
        Multiplier of the colour field in the log-probabilities.
    r : int
        Number of colours.
    uniforms : ndarray, shape (n_sweeps, L)
        One uniform variate per site update, consumed in scan order.
    thin : int
        Record the configuration after every ``thin``-th sweep.

    Returns
    -------
    ndarray of int8, shape (n_sweeps // thin, L)
    """
    if backend() == "numba":
        return _heat_bath_numba(spins, coupling, float(coef), int(r), uniforms, int(thin))
    return _heat_bath_numpy(spins, coupling, float(coef), int(r), uniforms, int(thin))
