"""Compiled inner loops.  All kernels take a dense symmetric ``q``."""

from __future__ import annotations

import math

import numba
import numpy as np


@numba.njit(cache=True, nogil=True)
def anneal_read(q, x, betas, uniforms):
    """One single-flip Metropolis anneal in place; sweeps visit spins in index order."""
    n = q.shape[0]
    h = np.zeros(n)
    for i in range(n):
        if x[i] != 0:
            for j in range(n):
                h[j] += q[j, i]
    for s in range(betas.shape[0]):
        beta = betas[s]
        for i in range(n):
            # h[i] includes q[i, i] * x[i]; strip it to get the coupling field
            field = h[i] - q[i, i] * x[i]
            delta = q[i, i] + 2.0 * field
            if x[i] != 0:
                delta = -delta
            if delta <= 0.0 or uniforms[s, i] < math.exp(-beta * delta):
                step = 1.0 if x[i] == 0 else -1.0
                x[i] = 1.0 - x[i]
                for j in range(n):
                    h[j] += step * q[j, i]
    return x


@numba.njit(cache=True, nogil=True)
def best_k_subset(q, k):
    """Lexicographic DFS over k-subsets with incremental energies.

    Returns (best support, best energy, leaves visited).  Strict improvement
    keeps the lexicographically first optimum.
    """
    n = q.shape[0]
    idx = np.empty(k, dtype=np.int64)
    best = np.empty(k, dtype=np.int64)
    # fields[d, j] = sum over chosen[:d] of q[i, j]; energies[d] = energy of chosen[:d]
    fields = np.zeros((k + 1, n))
    energies = np.zeros(k + 1)
    best_e = np.inf
    count = 0
    depth = 0
    idx[0] = 0
    while True:
        if idx[depth] > n - (k - depth):
            if depth == 0:
                break
            depth -= 1
            idx[depth] += 1
            continue
        j = idx[depth]
        e = energies[depth] + q[j, j] + 2.0 * fields[depth, j]
        if depth == k - 1:
            count += 1
            if e < best_e:
                best_e = e
                best[:] = idx
            idx[depth] += 1
            continue
        energies[depth + 1] = e
        for t in range(n):
            fields[depth + 1, t] = fields[depth, t] + q[j, t]
        depth += 1
        idx[depth] = j + 1
    return best, best_e, count


@numba.njit(cache=True, nogil=True)
def _support_less(a, b):
    # sorted support of bit mask a precedes that of b lexicographically
    diff = a ^ b
    if diff == 0:
        return False
    low = diff & (-diff)
    above = ~((low << 1) - 1)
    if a & low:
        # a's next element is p; b continues with something larger or ends
        return (b & above) != 0
    return (a & above) == 0


@numba.njit(cache=True, nogil=True)
def best_unconstrained(q, tol):
    """Gray-code walk over all 2^n states; near-ties go to the smaller support."""
    n = q.shape[0]
    h = np.zeros(n)
    x = np.zeros(n)
    e = 0.0
    mask = 0
    best_mask = 0
    best_e = 0.0
    total = 1 << n
    for step in range(1, total):
        # bit that changes between gray(step-1) and gray(step)
        i = 0
        s = step
        while s & 1 == 0:
            s >>= 1
            i += 1
        field = h[i] - q[i, i] * x[i]
        delta = q[i, i] + 2.0 * field
        if x[i] != 0:
            delta = -delta
            x[i] = 0.0
            for j in range(n):
                h[j] -= q[j, i]
        else:
            x[i] = 1.0
            for j in range(n):
                h[j] += q[j, i]
        e += delta
        mask ^= 1 << i
        if e < best_e - tol * (1.0 + abs(best_e)):
            best_e = e
            best_mask = mask
        elif abs(e - best_e) <= tol * (1.0 + abs(best_e)) and _support_less(mask, best_mask):
            best_mask = mask
    return best_mask, best_e
