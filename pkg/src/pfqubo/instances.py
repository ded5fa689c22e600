"""Problem data model and QUBO builders.

The canonical coefficient layout is the symmetric one, ``E(x) = x^T Q x + c``
with ``Q == Q.T``.  The upper-triangular layout (``Q[i, j] + Q[j, i]`` folded
onto ``i < j``) exists only as an export view for samplers that expect it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Iterable, Literal, Sequence

import numpy as np

if TYPE_CHECKING:
    from pfqubo.ingest import BettingSlate

Convention = Literal["symmetric", "upper_triangular"]

_SYM_RTOL = 1e-12


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Selection:
    """A binary selection vector together with its support."""

    bits: np.ndarray
    support: tuple[int, ...] = field(init=False)

    def __post_init__(self):
        bits = np.asarray(self.bits)
        if bits.ndim != 1:
            raise ValueError("selection bits must be one-dimensional")
        if bits.size and not np.all((bits == 0) | (bits == 1)):
            raise ValueError("selection bits must be 0 or 1")
        bits = _frozen(bits.astype(np.int8))
        object.__setattr__(self, "bits", bits)
        object.__setattr__(self, "support", tuple(int(i) for i in np.flatnonzero(bits)))

    @classmethod
    def from_support(cls, support: Iterable[int], n: int) -> "Selection":
        bits = np.zeros(n, dtype=np.int8)
        idx = list(support)
        if idx and (min(idx) < 0 or max(idx) >= n):
            raise IndexError("support index out of range")
        bits[idx] = 1
        return cls(bits)

    @property
    def n(self) -> int:
        return int(self.bits.size)

    @property
    def weight(self) -> int:
        return len(self.support)

    def flipped(self, i: int) -> "Selection":
        bits = self.bits.copy()
        bits[i] ^= 1
        return Selection(bits)

    def __eq__(self, other):
        if not isinstance(other, Selection):
            return NotImplemented
        return self.n == other.n and self.support == other.support

    def __hash__(self):
        return hash((self.n, self.support))

    def __repr__(self):
        return f"Selection(n={self.n}, support={list(self.support)})"


@dataclass(frozen=True, eq=False)
class PortfolioInstance:
    """Inputs of the cardinality-constrained selection problem.

    ``sigma`` is symmetrized as ``(sigma + sigma.T) / 2`` after checking that
    the asymmetry is at round-off level.
    """

    mu: np.ndarray
    sigma: np.ndarray
    lam: float
    penalty_a: float
    k: int
    labels: tuple[str, ...] = ()
    kind: Literal["equity", "betting"] = "equity"

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float)
        sigma = np.asarray(self.sigma, dtype=float)
        if mu.ndim != 1:
            raise ValueError("mu must be a vector")
        n = mu.size
        if sigma.shape != (n, n):
            raise ValueError(f"sigma has shape {sigma.shape}, expected {(n, n)}")
        scale = max(float(np.max(np.abs(sigma))) if n else 0.0, np.finfo(float).tiny)
        if np.max(np.abs(sigma - sigma.T), initial=0.0) > _SYM_RTOL * scale:
            raise ValueError("sigma is not symmetric")
        sigma = 0.5 * (sigma + sigma.T)
        if np.any(np.diag(sigma) < 0):
            raise ValueError("sigma has a negative diagonal entry")
        if not self.lam > 0:
            raise ValueError("lam must be > 0")
        if not self.penalty_a >= 0:
            raise ValueError("penalty_a must be >= 0")
        k = int(self.k)
        if k != self.k or not 1 <= k <= n:
            raise ValueError(f"k must be an integer in [1, {n}], got {self.k}")
        labels = tuple(str(s) for s in self.labels) if len(self.labels) else tuple(str(i) for i in range(n))
        if len(labels) != n:
            raise ValueError("labels length does not match mu")
        if self.kind not in ("equity", "betting"):
            raise ValueError(f"unknown instance kind {self.kind!r}")
        object.__setattr__(self, "mu", _frozen(mu))
        object.__setattr__(self, "sigma", _frozen(sigma))
        object.__setattr__(self, "lam", float(self.lam))
        object.__setattr__(self, "penalty_a", float(self.penalty_a))
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return int(self.mu.size)

    def objective(self, x) -> float:
        """Return-risk objective ``-mu.x + lam x'Sigma x`` evaluated term by term."""
        xv = _as_bits(x, self.n).astype(float)
        return float(-self.mu @ xv + self.lam * (xv @ self.sigma @ xv))

    def penalized_objective(self, x) -> float:
        xv = _as_bits(x, self.n).astype(float)
        return self.objective(xv) + self.penalty_a * (xv.sum() - self.k) ** 2


@dataclass(frozen=True, eq=False)
class QuboMatrix:
    """Coefficient matrix and constant offset of ``x^T Q x + offset``."""

    q: np.ndarray
    offset: float = 0.0
    convention: Convention = "symmetric"

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float)
        if q.ndim != 2 or q.shape[0] != q.shape[1]:
            raise ValueError("q must be a square matrix")
        if self.convention == "symmetric":
            if not np.array_equal(q, q.T):
                raise ValueError("symmetric-convention matrix is not exactly symmetric")
        elif self.convention == "upper_triangular":
            if np.any(np.tril(q, -1) != 0):
                raise ValueError("upper-triangular matrix has entries below the diagonal")
        else:
            raise ValueError(f"unknown convention {self.convention!r}")
        object.__setattr__(self, "q", _frozen(q))
        object.__setattr__(self, "offset", float(self.offset))

    @property
    def n(self) -> int:
        return int(self.q.shape[0])

    def pair_coefficients(self) -> np.ndarray:
        """Effective ``x_i x_j`` coefficients for ``i < j`` as an upper-triangular array."""
        if self.convention == "symmetric":
            return np.triu(2.0 * self.q, 1)
        return np.triu(self.q, 1)

    def symmetric(self) -> "QuboMatrix":
        if self.convention == "symmetric":
            return self
        u = self.q
        off = np.triu(u, 1) / 2.0
        return QuboMatrix(np.diag(np.diag(u)) + off + off.T, self.offset, "symmetric")


def _as_bits(x, n: int) -> np.ndarray:
    bits = x.bits if isinstance(x, Selection) else np.asarray(x)
    if bits.shape != (n,):
        raise ValueError(f"selection has length {bits.shape}, model has {n} variables")
    return bits


def _symmetrize_exact(m: np.ndarray) -> np.ndarray:
    # Keep the upper triangle verbatim and mirror it so q[i, j] == q[j, i] bit-for-bit.
    upper = np.triu(m, 1)
    return upper + upper.T + np.diag(np.diag(m))


def build_penalized_qubo(inst: PortfolioInstance) -> QuboMatrix:
    """QUBO of ``-mu.x + lam x'Sx + A (1.x - K)^2``.

    ``Q = -diag(mu) + lam*S + A*11' - 2AK*I`` with offset ``A*K^2``.
    """
    if inst.penalty_a == 0:
        raise ValueError("penalty_a is 0; use build_objective_qubo for the penalty-free model")
    n, a, k = inst.n, inst.penalty_a, inst.k
    q = -np.diag(inst.mu) + inst.lam * inst.sigma + a * np.ones((n, n)) - 2.0 * a * k * np.eye(n)
    return QuboMatrix(_symmetrize_exact(q), a * k * k, "symmetric")


def build_objective_qubo(inst: PortfolioInstance) -> QuboMatrix:
    """Objective-only QUBO ``-diag(mu) + lam*S`` with zero offset."""
    q = -np.diag(inst.mu) + inst.lam * inst.sigma
    return QuboMatrix(_symmetrize_exact(q), 0.0, "symmetric")


def qubo_energy(q: QuboMatrix, x) -> float:
    xv = _as_bits(x, q.n).astype(float)
    return float(xv @ q.q @ xv + q.offset)


def qubo_energies(q: QuboMatrix, xs: np.ndarray) -> np.ndarray:
    """Vectorized energies for a batch of bit rows."""
    xs = np.asarray(xs, dtype=float)
    return np.einsum("ri,ij,rj->r", xs, q.q, xs) + q.offset


def to_upper_triangular(q: QuboMatrix) -> QuboMatrix:
    if q.convention != "symmetric":
        raise ValueError("matrix is already in upper-triangular convention")
    u = np.triu(q.q, 1) + np.triu(q.q.T, 1)
    return QuboMatrix(u + np.diag(np.diag(q.q)), q.offset, "upper_triangular")


def betting_moments(slate: "BettingSlate") -> tuple[np.ndarray, np.ndarray]:
    """Per-outcome expected return and payoff covariance of a 1X2 slate.

    Outcomes of the same match are mutually exclusive, which gives
    ``S[i, j] = -d_i p_i d_j p_j`` inside a match and zero across matches.
    """
    d = np.asarray(slate.odds, dtype=float)
    p = np.asarray(slate.probs, dtype=float)
    groups = np.asarray(slate.match_index)
    n = d.size
    if p.shape != (n,) or groups.shape != (n,):
        raise ValueError("odds, probabilities and match index must have equal length")
    if np.any(d <= 1.0):
        raise ValueError("decimal odds must exceed 1.0")
    if np.any((p <= 0.0) | (p >= 1.0)):
        raise ValueError("probabilities must lie strictly inside (0, 1)")
    _, counts = np.unique(groups, return_counts=True)
    if np.any(counts != 3):
        raise ValueError("every match must contribute exactly three outcomes")
    for g in np.unique(groups):
        total = p[groups == g].sum()
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"probabilities of match {g} sum to {total}, not 1")

    mu = d * p - 1.0
    dp = d * p
    same = groups[:, None] == groups[None, :]
    sigma = np.where(same, -np.outer(dp, dp), 0.0)
    np.fill_diagonal(sigma, d * d * p * (1.0 - p))
    return mu, sigma


def equity_moments(window) -> tuple[np.ndarray, np.ndarray]:
    """Column means and sample covariance (divisor ``rows - 1``) of a returns window."""
    r = np.asarray(getattr(window, "returns", window), dtype=float)
    if r.ndim != 2:
        raise ValueError("returns window must be two-dimensional")
    if r.shape[0] < 2:
        raise ValueError("need at least two rows to estimate a covariance")
    if r.shape[1] < 1:
        raise ValueError("returns window has no assets")
    if not np.all(np.isfinite(r)):
        raise ValueError("returns window contains missing values")
    mu = r.mean(axis=0)
    sigma = np.cov(r, rowvar=False, ddof=1).reshape(r.shape[1], r.shape[1])
    return mu, 0.5 * (sigma + sigma.T)


def instance_from_moments(
    mu: np.ndarray,
    sigma: np.ndarray,
    *,
    lam: float,
    penalty_a: float,
    k: int,
    labels: Sequence[str] = (),
    kind: Literal["equity", "betting"] = "equity",
) -> PortfolioInstance:
    return PortfolioInstance(mu, sigma, lam, penalty_a, k, tuple(labels), kind)
