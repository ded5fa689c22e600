"""Off-diagonal sparsifiers and penalty-dilution accounting.

Every sparsifier keeps the diagonal and the offset untouched and only zeroes
off-diagonal pairs, so the retained edge set is always a subset of the input's.
Magnitude rankings break ties by the lower index (pair order for pairs).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from pfqubo.instances import QuboMatrix

EDGE_EPS = 1e-15

Family = Literal["threshold", "topk", "mask", "mask_residual"]
FAMILIES = ("threshold", "topk", "mask", "mask_residual")


@dataclass(frozen=True, eq=False)
class SparsifierSpec:
    """One sparsifier with its parameters.

    ``k`` is the per-node retention count for ``topk`` and the neighbour count
    of the k-NN correlation prior for the mask families when no explicit
    ``mask`` is given.  ``edges`` asks for the threshold that keeps exactly
    that many pairs instead of a fixed ``tau``.
    """

    family: Family
    tau: float | None = None
    k: int | None = None
    r: int = 0
    mask: np.ndarray | None = None
    edges: int | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown sparsifier family {self.family!r}")
        if self.family == "threshold":
            if (self.tau is None) == (self.edges is None):
                raise ValueError("threshold needs exactly one of tau or edges")
            if self.tau is not None and not self.tau > 0:
                raise ValueError("tau must be > 0")
        if self.family == "topk" and (self.k is None or self.k < 1):
            raise ValueError("topk needs k >= 1")
        if self.family in ("mask", "mask_residual"):
            if self.mask is not None:
                _check_mask(np.asarray(self.mask, dtype=bool), None)
            elif self.k is None:
                raise ValueError(f"{self.family} needs a mask or a k-NN neighbour count k")
        if self.r < 0:
            raise ValueError("r must be >= 0")
        if self.family == "mask_residual" and self.r == 0 and self.mask is None and self.k is None:
            raise ValueError("mask_residual needs a mask")

    @property
    def label(self) -> str:
        if self.family == "threshold":
            return f"threshold(edges={self.edges})" if self.edges is not None else f"threshold(tau={self.tau:g})"
        if self.family == "topk":
            return f"topk(k={self.k})"
        prior = "mask" if self.mask is not None else f"k={self.k}"
        if self.family == "mask":
            return f"mask({prior})"
        return f"mask_residual({prior},r={self.r})"


@dataclass(frozen=True)
class DilutionReport:
    removed_edges: int
    removed_penalty_weight: float
    retained_edges: int
    edge_retention_ratio: float


def edge_mask(q: QuboMatrix) -> np.ndarray:
    """Boolean upper-triangular pattern of non-zero unordered pairs."""
    return np.triu(np.abs(q.pair_coefficients()) > EDGE_EPS, 1)


def edge_count(q: QuboMatrix) -> int:
    return int(edge_mask(q).sum())


def _require_symmetric(q: QuboMatrix):
    if q.convention != "symmetric":
        raise ValueError("sparsifiers operate on the symmetric convention")


def _check_mask(mask: np.ndarray, n: int | None) -> np.ndarray:
    if mask.ndim != 2 or mask.shape[0] != mask.shape[1]:
        raise ValueError("mask must be square")
    if n is not None and mask.shape[0] != n:
        raise ValueError(f"mask is {mask.shape[0]}x{mask.shape[0]}, model has {n} variables")
    if not np.array_equal(mask, mask.T):
        raise ValueError("mask is not symmetric")
    return mask


def _apply_pattern(q: QuboMatrix, keep: np.ndarray) -> QuboMatrix:
    keep = keep | keep.T
    np.fill_diagonal(keep, True)
    return QuboMatrix(np.where(keep, q.q, 0.0), q.offset, "symmetric")


def sparsify_threshold(q: QuboMatrix, tau: float) -> QuboMatrix:
    """Zero off-diagonal entries with ``|q_ij| < tau``."""
    _require_symmetric(q)
    if not tau > 0:
        raise ValueError("tau must be > 0")
    return _apply_pattern(q, np.abs(q.q) >= tau)


def threshold_for_edges(q: QuboMatrix, edges: int) -> float:
    """A cutoff that retains exactly ``edges`` pairs, midway between magnitudes.

    Raises if ties make that count unreachable.
    """
    _require_symmetric(q)
    iu = np.triu_indices(q.n, 1)
    mags = np.sort(np.abs(q.q[iu]))[::-1]
    mags = mags[mags > EDGE_EPS]
    if not 0 <= edges <= mags.size:
        raise ValueError(f"cannot keep {edges} of {mags.size} edges")
    if edges == mags.size:
        return float(mags[-1]) / 2 if mags.size else 1.0
    if edges == 0:
        return float(np.nextafter(mags[0], np.inf))
    hi, lo = mags[edges - 1], mags[edges]
    if hi == lo:
        raise ValueError(f"tied magnitudes make exactly {edges} edges unreachable by thresholding")
    return float(0.5 * (hi + lo))


def _row_rank(values: np.ndarray) -> np.ndarray:
    """Per-row rank positions by descending magnitude, lower column first on ties."""
    n = values.shape[0]
    order = np.lexsort((np.broadcast_to(np.arange(n), (n, n)), -values), axis=1)
    rank = np.empty_like(order)
    rows = np.arange(n)[:, None]
    rank[rows, order] = np.arange(n)[None, :]
    return rank


def sparsify_topk(q: QuboMatrix, k: int) -> QuboMatrix:
    """Keep ``{i, j}`` when each is among the other's ``k`` largest off-diagonal magnitudes."""
    _require_symmetric(q)
    n = q.n
    if k < 1:
        raise ValueError("k must be >= 1")
    if k >= n:
        raise ValueError(f"k={k} must be smaller than n={n}")
    mag = np.abs(q.q).astype(float)
    np.fill_diagonal(mag, -np.inf)
    chosen = _row_rank(mag) < k
    return _apply_pattern(q, chosen & chosen.T)


def correlation_from_cov(sigma: np.ndarray, labels=None) -> np.ndarray:
    sigma = np.asarray(sigma, dtype=float)
    sd = np.sqrt(np.diag(sigma))
    zero = np.flatnonzero(sd <= 0)
    if zero.size:
        name = labels[zero[0]] if labels is not None else int(zero[0])
        raise ValueError(f"asset {name} has zero variance; correlation undefined")
    corr = sigma / np.outer(sd, sd)
    return 0.5 * (corr + corr.T)


def knn_correlation_mask(sigma: np.ndarray, k: int, labels=None) -> np.ndarray:
    """k-nearest-neighbour graph on ``|correlation|``, symmetrized by union."""
    corr = correlation_from_cov(sigma, labels)
    n = corr.shape[0]
    if k < 1:
        raise ValueError("k must be >= 1")
    mag = np.abs(corr)
    np.fill_diagonal(mag, -np.inf)
    chosen = _row_rank(mag) < min(k, n - 1)
    mask = chosen | chosen.T
    np.fill_diagonal(mask, True)
    return mask


def settlement_mask(slate) -> np.ndarray:
    """Disjoint 3-cliques, one per match of the slate."""
    idx = np.asarray(slate.match_index if hasattr(slate, "match_index") else slate)
    return idx[:, None] == idx[None, :]


def sparsify_mask(q: QuboMatrix, mask: np.ndarray) -> QuboMatrix:
    _require_symmetric(q)
    mask = _check_mask(np.asarray(mask, dtype=bool), q.n)
    return _apply_pattern(q, mask.copy())


def residual_pairs(mask: np.ndarray, r: int, corr: np.ndarray) -> list[tuple[int, int]]:
    """The ``r`` off-mask pairs of largest ``|corr|``, pair-lexicographic on ties."""
    n = mask.shape[0]
    iu, ju = np.triu_indices(n, 1)
    off = ~mask[iu, ju]
    cand_i, cand_j = iu[off], ju[off]
    if r > cand_i.size:
        raise ValueError(f"r={r} exceeds the {cand_i.size} off-mask pairs")
    mags = np.abs(np.asarray(corr)[cand_i, cand_j])
    order = np.lexsort((cand_j, cand_i, -mags))[:r]
    return [(int(cand_i[t]), int(cand_j[t])) for t in order]


def sparsify_mask_residual(q: QuboMatrix, mask: np.ndarray, r: int, corr_matrix: np.ndarray) -> QuboMatrix:
    """Mask edges plus the ``r`` strongest off-mask pairs by absolute correlation."""
    _require_symmetric(q)
    if r < 0:
        raise ValueError("r must be >= 0")
    mask = _check_mask(np.asarray(mask, dtype=bool), q.n).copy()
    for i, j in residual_pairs(mask, r, corr_matrix):
        mask[i, j] = mask[j, i] = True
    return _apply_pattern(q, mask)


def dilution_report(original: QuboMatrix, sparse: QuboMatrix, penalty_a: float) -> DilutionReport:
    if original.n != sparse.n:
        raise ValueError("matrices have different dimensions")
    before, after = edge_mask(original), edge_mask(sparse)
    extra = after & ~before
    if extra.any():
        i, j = map(int, np.argwhere(extra)[0])
        raise ValueError(f"sparse matrix has edge ({i}, {j}) absent from the original")
    total = int(before.sum())
    kept = int(after.sum())
    removed = total - kept
    return DilutionReport(
        removed_edges=removed,
        removed_penalty_weight=float(penalty_a) * removed,
        retained_edges=kept,
        edge_retention_ratio=kept / total if total else 1.0,
    )


def apply_sparsifier(
    spec: SparsifierSpec,
    q: QuboMatrix,
    *,
    sigma: np.ndarray | None = None,
    slate=None,
    labels=None,
) -> tuple[QuboMatrix, dict]:
    """Run ``spec`` on ``q`` and return the sparse model with resolved parameters.

    For the mask families the domain prior comes from ``spec.mask``, else the
    settlement graph of ``slate``, else a k-NN correlation graph of ``sigma``.
    """
    info: dict = {"family": spec.family}
    if spec.family == "threshold":
        tau = spec.tau if spec.tau is not None else threshold_for_edges(q, spec.edges)
        info["tau"] = tau
        return sparsify_threshold(q, tau), info
    if spec.family == "topk":
        info["k"] = spec.k
        return sparsify_topk(q, spec.k), info

    if spec.mask is not None:
        mask = np.asarray(spec.mask, dtype=bool)
    elif slate is not None:
        mask = settlement_mask(slate)
        info["prior"] = "settlement"
    elif sigma is not None:
        mask = knn_correlation_mask(sigma, spec.k, labels)
        info["prior"] = f"knn(k={spec.k})"
    else:
        raise ValueError(f"{spec.family} needs a mask, a slate, or a covariance")
    info["mask_edges"] = int(np.triu(mask, 1).sum())
    if spec.family == "mask":
        return sparsify_mask(q, mask), info
    if sigma is not None:
        corr = correlation_from_cov(sigma, labels)
    else:
        corr = np.abs(q.q)
    info["r"] = spec.r
    return sparsify_mask_residual(q, mask, spec.r, corr), info
