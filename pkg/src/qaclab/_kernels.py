"""Hot inner loops for the stochastic solvers.

Compiled with numba when available; the pure-Python fallbacks are only meant
to keep tiny test cases runnable.  Randomness comes from an inline splitmix64
stream so that every read is keyed by (seed, read index) and results are
bitwise reproducible independent of scheduling.
"""

from __future__ import annotations

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dependency in practice
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        return wrap


_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0  # 2**-53


@njit(cache=True)
def _mix(z):
    z = (z ^ (z >> _S30)) * _MIX1
    z = (z ^ (z >> _S27)) * _MIX2
    return z ^ (z >> _S31)


@njit(cache=True)
def _stream_seed(seed, index):
    return _mix(np.uint64(seed) ^ _mix(np.uint64(index) + _GOLDEN))


@njit(cache=True)
def _next_uniform(state):
    state[0] = state[0] + _GOLDEN
    return (_mix(state[0]) >> _S11) * _INV53


@njit(cache=True)
def sa_batch(indptr, indices, weights, h, betas, n_reads, seed):
    """Independent single-spin Metropolis anneals, one per read.

    Spins are swept in index order; one beta per sweep.  Returns the final
    (n_reads, n) +/-1 matrix.
    """
    n = h.size
    out = np.empty((n_reads, n), dtype=np.int8)
    state = np.empty(1, dtype=np.uint64)
    for r in range(n_reads):
        state[0] = _stream_seed(seed, r)
        spins = np.empty(n, dtype=np.int8)
        for i in range(n):
            spins[i] = 1 if _next_uniform(state) < 0.5 else -1
        for t in range(betas.size):
            beta = betas[t]
            for i in range(n):
                local = h[i]
                for k in range(indptr[i], indptr[i + 1]):
                    local += weights[k] * spins[indices[k]]
                d_e = -2.0 * spins[i] * local  # energy change of flipping i
                if d_e <= 0.0:
                    spins[i] = -spins[i]
                elif _next_uniform(state) < np.exp(-beta * d_e):
                    spins[i] = -spins[i]
        for i in range(n):
            out[r, i] = spins[i]
    return out


@njit(cache=True)
def pt_block(indptr, indices, weights, h, betas, spins, energies,
             n_sweeps, state, sweep_offset, best_energy, best_spins):
    """Run ``n_sweeps`` of parallel tempering on 2 chains per temperature.

    Chain ``c`` sits at temperature index ``c // 2``; chains with the same
    temperature index but different parity are the pair used for cluster
    moves outside this kernel.  Adjacent-temperature configuration swaps
    alternate even/odd pairs each sweep.  ``spins``/``energies`` are updated
    in place; the best configuration seen at sweep granularity is tracked in
    ``best_energy`` (1-element array) and ``best_spins``.
    """
    n_chains, n = spins.shape
    n_temps = betas.size
    for sweep in range(n_sweeps):
        for c in range(n_chains):
            beta = betas[c // 2]
            e = energies[c]
            for i in range(n):
                local = h[i]
                for k in range(indptr[i], indptr[i + 1]):
                    local += weights[k] * spins[c, indices[k]]
                d_e = -2.0 * spins[c, i] * local  # energy change of flipping i
                if d_e <= 0.0 or _next_uniform(state) < np.exp(-beta * d_e):
                    spins[c, i] = -spins[c, i]
                    e += d_e
            energies[c] = e
            if e < best_energy[0]:
                best_energy[0] = e
                for i in range(n):
                    best_spins[i] = spins[c, i]
        start = (sweep_offset + sweep) % 2
        for p in range(2):
            for t in range(start, n_temps - 1, 2):
                c0 = 2 * t + p
                c1 = 2 * (t + 1) + p
                arg = (betas[t + 1] - betas[t]) * (energies[c1] - energies[c0])
                if arg >= 0.0 or _next_uniform(state) < np.exp(arg):
                    for i in range(n):
                        tmp = spins[c0, i]
                        spins[c0, i] = spins[c1, i]
                        spins[c1, i] = tmp
                    e_tmp = energies[c0]
                    energies[c0] = energies[c1]
                    energies[c1] = e_tmp
