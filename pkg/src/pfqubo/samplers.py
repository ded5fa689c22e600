"""Sampling layer: exact oracles, greedy construction and a simulated-annealing stand-in.

Every backend returns a :class:`SampleSet`; deterministic backends are
wrapped as single-read sets.  Randomness is always derived from an explicit
integer seed, and per-read streams use :func:`derived_seed` so results do not
depend on how reads are scheduled.
"""

from __future__ import annotations

import math
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from pfqubo import _kernels
from pfqubo.errors import BudgetExceeded
from pfqubo.instances import QuboMatrix, Selection, qubo_energy

DEFAULT_EXACT_BUDGET = 10_000_000
DEFAULT_UNCONSTRAINED_MAX_N = 22
SAMPLERS = ("sa", "greedy", "brute_force", "brute_force_k")


@dataclass(frozen=True)
class SampleRecord:
    bits: Selection
    energy: float
    occurrences: int


@dataclass(frozen=True)
class SampleSet:
    records: tuple[SampleRecord, ...]
    reads: int
    seed: int
    origin: str

    def __post_init__(self):
        if sum(r.occurrences for r in self.records) != self.reads:
            raise ValueError("occurrences do not add up to reads")

    @classmethod
    def from_rows(cls, q: QuboMatrix, rows: np.ndarray, seed: int, origin: str) -> "SampleSet":
        """Aggregate raw bit rows into records sorted by (energy, support)."""
        rows = np.asarray(rows, dtype=np.int8)
        counts = Counter(r.tobytes() for r in rows)
        recs = []
        for raw, occ in counts.items():
            sel = Selection(np.frombuffer(raw, dtype=np.int8))
            recs.append(SampleRecord(sel, qubo_energy(q, sel), occ))
        recs.sort(key=lambda r: (r.energy, r.bits.support))
        return cls(tuple(recs), int(rows.shape[0]), int(seed), origin)

    @property
    def first(self) -> SampleRecord:
        return self.records[0]

    def expanded(self):
        """Yield (selection, energy) once per read, in record order."""
        for r in self.records:
            for _ in range(r.occurrences):
                yield r.bits, r.energy


@dataclass(frozen=True)
class AnnealSchedule:
    """Geometric inverse-temperature schedule for the annealing stand-in.

    ``beta_start``/``beta_end`` of ``None`` derive the range from the model:
    the hot end accepts the largest single-flip uphill move with probability
    1/2 and the cold end accepts the smallest one with probability 1/100.
    """

    sweeps: int = 1000
    beta_start: float | None = 0.1
    beta_end: float | None = 10.0
    reads: int = 1000

    def __post_init__(self):
        if self.sweeps < 1:
            raise ValueError("sweeps must be >= 1")
        if self.reads < 1:
            raise ValueError("reads must be >= 1")
        if (self.beta_start is None) != (self.beta_end is None):
            raise ValueError("set both beta_start and beta_end, or neither")
        if self.beta_start is not None:
            if not 0 < self.beta_start < self.beta_end:
                raise ValueError("need 0 < beta_start < beta_end")

    @property
    def auto(self) -> bool:
        return self.beta_start is None

    def betas(self, q: QuboMatrix | None = None) -> np.ndarray:
        lo, hi = (self.beta_start, self.beta_end) if not self.auto else auto_beta_range(q)
        return np.geomspace(lo, hi, self.sweeps)


def auto_beta_range(q: QuboMatrix) -> tuple[float, float]:
    qs = q.symmetric().q
    diag = np.abs(np.diag(qs))
    off = 2.0 * np.abs(qs - np.diag(np.diag(qs)))
    max_delta = float(np.max(diag + off.sum(axis=1), initial=0.0))
    nz = np.concatenate([diag[diag > 0], off[off > 0]])
    if max_delta == 0 or nz.size == 0:
        return 0.1, 10.0
    hot = math.log(2) / max_delta
    cold = math.log(100) / float(nz.min())
    return hot, max(cold, hot * (1 + 1e-9))


def derived_seed(seed: int, i: int) -> int:
    """Per-read (or per-trial) seed: a 64-bit mix of ``seed`` XOR the index.

    XOR-ing the raw seed would make small seeds share the same set of read
    streams, only permuted; mixing first keeps seeds independent while the
    stream of read ``i`` still depends only on ``(seed, i)``.
    """
    base = int(np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF).generate_state(1, np.uint64)[0])
    return base ^ int(i)


def _anneal_one(qs: np.ndarray, betas: np.ndarray, seed: int, i: int) -> np.ndarray:
    rng = np.random.default_rng(derived_seed(seed, i))
    n = qs.shape[0]
    x = rng.integers(0, 2, size=n).astype(np.float64)
    u = rng.random((betas.size, n))
    return _kernels.anneal_read(qs, x, betas, u)


def simulated_annealing_sample(
    q: QuboMatrix, schedule: AnnealSchedule | None = None, seed: int = 0, *, workers: int = 1
) -> SampleSet:
    """``schedule.reads`` independent anneals from uniformly random states."""
    schedule = schedule or AnnealSchedule()
    qs = np.ascontiguousarray(q.symmetric().q, dtype=np.float64)
    betas = schedule.betas(q)
    n = qs.shape[0]
    rows = np.empty((schedule.reads, n), dtype=np.int8)
    if n == 0:
        return SampleSet.from_rows(q, rows, seed, "sa")

    def run(i):
        rows[i] = _anneal_one(qs, betas, seed, i)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            list(pool.map(run, range(schedule.reads)))
    else:
        for i in range(schedule.reads):
            run(i)
    return SampleSet.from_rows(q, rows, seed, "sa")


def brute_force_k_subsets(q: QuboMatrix, k: int, budget: int = DEFAULT_EXACT_BUDGET) -> tuple[Selection, float, int]:
    """Exact minimum over all weight-``k`` vectors.

    Ties go to the lexicographically smallest support.
    """
    n = q.n
    if not 0 <= k <= n:
        raise ValueError(f"k={k} outside [0, {n}]")
    total = math.comb(n, k)
    if total > budget:
        raise BudgetExceeded(f"C({n},{k}) = {total} exceeds the exact-enumeration budget {budget}")
    if k == 0:
        sel = Selection(np.zeros(n, dtype=np.int8))
        return sel, qubo_energy(q, sel), 1
    qs = np.ascontiguousarray(q.symmetric().q, dtype=np.float64)
    support, _, count = _kernels.best_k_subset(qs, k)
    sel = Selection.from_support(support.tolist(), n)
    return sel, qubo_energy(q, sel), int(count)


def brute_force_unconstrained(q: QuboMatrix, max_n: int = DEFAULT_UNCONSTRAINED_MAX_N) -> tuple[Selection, float]:
    """Exact minimum over all ``2^n`` vectors; near-ties go to the smallest support."""
    n = q.n
    if n > max_n:
        raise BudgetExceeded(f"n={n} exceeds the unconstrained enumeration limit {max_n}")
    qs = np.ascontiguousarray(q.symmetric().q, dtype=np.float64)
    mask, _ = _kernels.best_unconstrained(qs, 1e-12)
    sel = Selection.from_support([i for i in range(n) if (int(mask) >> i) & 1], n)
    return sel, qubo_energy(q, sel)


def greedy_construct(q: QuboMatrix, k: int, restarts: int = 128, seed: int = 0) -> Selection:
    """Best of ``restarts`` forward constructions, each from a random singleton.

    Each step adds the index giving the lowest resulting energy (lowest index
    on ties); the earliest restart wins ties across restarts.
    """
    n = q.n
    if not 1 <= k <= n:
        raise ValueError(f"k={k} outside [1, {n}]")
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    qs = q.symmetric().q
    diag = np.diag(qs)
    starts = np.random.default_rng(seed).integers(0, n, size=restarts)
    best, best_e = None, np.inf
    seen: dict[int, tuple[np.ndarray, float]] = {}
    for s in starts.tolist():
        if s not in seen:
            x = np.zeros(n)
            x[s] = 1.0
            field = qs[:, s].copy()
            for _ in range(k - 1):
                gain = diag + 2.0 * (field - diag * x)
                gain[x == 1] = np.inf
                j = int(np.argmin(gain))
                x[j] = 1.0
                field += qs[:, j]
            seen[s] = (x, float(x @ qs @ x))
        x, e = seen[s]
        if e < best_e:
            best, best_e = x, e
    return Selection(best.astype(np.int8))


@dataclass(frozen=True)
class SamplerSpec:
    """Named sampler plus parameters, as written in a harness config."""

    name: str = "sa"
    k: int | None = None
    restarts: int = 128
    schedule: AnnealSchedule = field(default_factory=AnnealSchedule)
    seed: int = 0
    budget: int = DEFAULT_EXACT_BUDGET
    workers: int = 1

    def __post_init__(self):
        if self.name not in SAMPLERS:
            raise ValueError(f"unknown sampler {self.name!r}; expected one of {SAMPLERS}")


def sample(spec: SamplerSpec, q: QuboMatrix) -> SampleSet:
    if spec.name not in SAMPLERS:
        raise ValueError(f"unknown sampler {spec.name!r}")
    if spec.name == "sa":
        return simulated_annealing_sample(q, spec.schedule, spec.seed, workers=spec.workers)
    if spec.name == "brute_force":
        sel, _ = brute_force_unconstrained(q)
        return SampleSet.from_rows(q, sel.bits[None, :], spec.seed, "brute_force")
    if spec.k is None:
        raise ValueError(f"sampler {spec.name!r} needs k")
    if spec.name == "brute_force_k":
        sel, _, _ = brute_force_k_subsets(q, spec.k, spec.budget)
    else:
        sel = greedy_construct(q, spec.k, spec.restarts, spec.seed)
    return SampleSet.from_rows(q, sel.bits[None, :], spec.seed, spec.name)
