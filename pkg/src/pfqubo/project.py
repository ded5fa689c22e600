"""Deterministic exact-K feasibility projection and its ablation baselines."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from pfqubo.instances import QuboMatrix, Selection, qubo_energy
from pfqubo.samplers import derived_seed


@dataclass(frozen=True)
class Flip:
    index: int
    direction: Literal["add", "remove"]
    energy_after: float


@dataclass(frozen=True)
class ProjectionTrace:
    start: Selection
    end: Selection
    flips: tuple[Flip, ...]

    def replay(self) -> Selection:
        bits = self.start.bits.copy()
        for f in self.flips:
            bits[f.index] = 1 if f.direction == "add" else 0
        return Selection(bits)


def _pair_matrix(q: QuboMatrix) -> np.ndarray:
    """``q + q.T`` with the diagonal restored, valid for either convention."""
    p = q.q + q.q.T
    np.fill_diagonal(p, np.diag(q.q))
    return p


def marginal_contribution(q: QuboMatrix, x, i: int) -> float:
    """Energy change from flipping bit ``i`` of ``x``, in O(n)."""
    bits = x.bits if isinstance(x, Selection) else np.asarray(x)
    n = q.n
    if not 0 <= i < n:
        raise IndexError(f"index {i} out of range for {n} variables")
    if bits.shape != (n,):
        raise ValueError("selection length does not match the model")
    xv = bits.astype(float)
    row = q.q[i] + q.q[:, i]
    coupling = row @ xv - 2.0 * q.q[i, i] * xv[i]
    gain = q.q[i, i] + coupling
    return float(gain if xv[i] == 0 else -gain)


def project_to_k(q_eval: QuboMatrix, x, k: int) -> ProjectionTrace:
    """Greedy bit flips until the weight is exactly ``k``.

    Above ``k`` the selected index whose removal gives the lowest energy is
    dropped; below ``k`` the unselected index whose addition gives the lowest
    energy is added.  Ties go to the lowest index.
    """
    start = x if isinstance(x, Selection) else Selection(np.asarray(x))
    n = q_eval.n
    if start.n != n:
        raise ValueError("selection length does not match the model")
    if not 0 <= k <= n:
        raise ValueError(f"k={k} outside [0, {n}]")
    p = _pair_matrix(q_eval)
    diag = np.diag(q_eval.q).copy()
    xv = start.bits.astype(float)
    # coupling[j] = sum_{i != j} p[j, i] x_i
    coupling = p @ xv - diag * xv
    energy = qubo_energy(q_eval, start)
    w = int(xv.sum())
    flips = []
    while w != k:
        remove = w > k
        delta = -(diag + coupling) if remove else diag + coupling
        delta = np.where(xv == (1.0 if remove else 0.0), delta, np.inf)
        j = int(np.argmin(delta))
        energy += float(delta[j])
        step = -1.0 if remove else 1.0
        xv[j] += step
        coupling += step * p[:, j]
        coupling[j] -= step * p[j, j]
        w += -1 if remove else 1
        flips.append(Flip(j, "remove" if remove else "add", energy))
    end = Selection(xv.astype(np.int8))
    if flips:
        # re-anchor the last energy on a direct evaluation
        flips[-1] = Flip(flips[-1].index, flips[-1].direction, qubo_energy(q_eval, end))
    return ProjectionTrace(start, end, tuple(flips))


def all_ones_projection(q: QuboMatrix, k: int) -> ProjectionTrace:
    """Backward elimination from the full universe."""
    return project_to_k(q, np.ones(q.n, dtype=np.int8), k)


@dataclass(frozen=True)
class RandomProjection:
    mean_energy: float
    best_energy: float
    traces: tuple[ProjectionTrace, ...]
    energies: tuple[float, ...]

    @property
    def best(self) -> ProjectionTrace:
        return self.traces[int(np.argmin(self.energies))]


def random_projection(q: QuboMatrix, k: int, trials: int = 100, seed: int = 0) -> RandomProjection:
    """Project ``trials`` random weight-``n // 2`` vectors to weight ``k``.

    Trial ``t`` draws its start from ``default_rng(derived_seed(seed, t))``.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    n = q.n
    traces, energies = [], []
    for t in range(trials):
        rng = np.random.default_rng(derived_seed(seed, t))
        bits = np.zeros(n, dtype=np.int8)
        bits[rng.choice(n, size=n // 2, replace=False)] = 1
        tr = project_to_k(q, bits, k)
        traces.append(tr)
        energies.append(qubo_energy(q, tr.end))
    return RandomProjection(float(np.mean(energies)), float(np.min(energies)), tuple(traces), tuple(energies))
