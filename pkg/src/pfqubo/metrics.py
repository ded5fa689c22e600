"""Structural and financial evaluation metrics.

Kurtosis is non-excess throughout (a normal sample has kurtosis 3).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np
from scipy import stats

from pfqubo.instances import QuboMatrix, Selection
from pfqubo.sparsify import EDGE_EPS, edge_mask

PROB_CLIP = 1e-12


@dataclass(frozen=True)
class MetricsReport:
    regret: float
    jaccard: float
    feasibility_rate: float
    mean_hamming_weight: float
    edge_count: int
    density: float
    max_offdiag: float
    dynamic_range_ratio: float

    def __post_init__(self):
        for name in ("jaccard", "feasibility_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class FinancialReport:
    sharpe: float = math.nan
    ci_low: float = math.nan
    ci_high: float = math.nan
    psr: float = math.nan
    min_trl: float = math.nan
    t_obs: int = 0
    skew: float = math.nan
    kurtosis: float = math.nan
    roi: float = math.nan
    brier: float = math.nan
    log_loss: float = math.nan

    def __post_init__(self):
        if self.ci_low > self.ci_high:
            raise ValueError("ci_low exceeds ci_high")
        if not math.isnan(self.psr) and not 0.0 <= self.psr <= 1.0:
            raise ValueError("psr outside [0, 1]")

    def to_dict(self) -> dict:
        return asdict(self)


def regret(candidate_energy: float, reference_energy: float) -> float:
    """Signed gap relative to ``|reference|``; negative when the candidate is better.

    Falls back to the absolute difference when the reference is ~0.
    """
    if not (math.isfinite(candidate_energy) and math.isfinite(reference_energy)):
        raise ValueError("regret needs finite energies")
    diff = candidate_energy - reference_energy
    if abs(reference_energy) > 1e-12:
        return diff / abs(reference_energy)
    return diff


def jaccard(a: Selection, b: Selection) -> float:
    if a.n != b.n:
        raise ValueError("selections have different lengths")
    sa, sb = set(a.support), set(b.support)
    union = sa | sb
    if not union:
        return 1.0
    return len(sa & sb) / len(union)


def feasibility_and_weight(samples, k: int) -> tuple[float, float]:
    """Occurrence-weighted exact-``k`` rate and mean Hamming weight."""
    total = sum(r.occurrences for r in samples.records)
    if total == 0:
        return 0.0, 0.0
    hit = sum(r.occurrences for r in samples.records if r.bits.weight == k)
    mean_w = sum(r.occurrences * r.bits.weight for r in samples.records) / total
    return hit / total, mean_w


def edge_stats(q: QuboMatrix) -> tuple[int, float, float]:
    """(non-zero unordered pairs, density against C(n, 2), max |off-diagonal|)."""
    n = q.n
    count = int(edge_mask(q).sum())
    pairs = n * (n - 1) // 2
    sym = q.symmetric().q
    off = np.abs(sym - np.diag(np.diag(sym)))
    return count, (count / pairs if pairs else 0.0), float(off.max(initial=0.0))


def dynamic_range_ratio(penalized: QuboMatrix, objective: QuboMatrix) -> float:
    if penalized.n != objective.n:
        raise ValueError("models have different dimensions")
    _, _, top_pen = edge_stats(penalized)
    _, _, top_obj = edge_stats(objective)
    if top_obj <= EDGE_EPS:
        raise ValueError("objective model has no non-zero off-diagonal entry")
    return top_pen / top_obj


def sharpe(returns: Sequence[float]) -> float:
    """Mean over sample standard deviation, unannualized."""
    r = np.asarray(returns, dtype=float)
    if r.size < 2:
        raise ValueError("sharpe needs at least two observations")
    sd = r.std(ddof=1)
    if not sd > 0:
        raise ValueError("zero-variance return series")
    return float(r.mean() / sd)


def bootstrap_ci(returns, draws: int = 1000, level: float = 0.95, seed: int = 0) -> tuple[float, float]:
    """Percentile bootstrap interval for the Sharpe ratio.

    Zero-variance resamples are discarded and redrawn, up to ten times the
    requested number of draws.
    """
    r = np.asarray(returns, dtype=float)
    t = r.size
    if t < 2:
        raise ValueError("bootstrap needs at least two observations")
    rng = np.random.default_rng(seed)
    values = []
    degenerate = 0
    attempts = 0
    while len(values) < draws:
        if attempts >= 10 * draws or degenerate > draws // 2:
            raise ValueError(f"bootstrap degenerate: {degenerate} of {attempts} resamples had zero variance")
        attempts += 1
        sample = r[rng.integers(0, t, size=t)]
        sd = sample.std(ddof=1)
        if not sd > 0:
            degenerate += 1
            continue
        values.append(sample.mean() / sd)
    alpha = 100 * (1 - level) / 2
    lo, hi = np.percentile(values, [alpha, 100 - alpha])
    return float(lo), float(hi)


def return_moments(returns) -> tuple[float, float]:
    """Sample skewness and non-excess kurtosis."""
    r = np.asarray(returns, dtype=float)
    return float(stats.skew(r)), float(stats.kurtosis(r, fisher=False))


def psr_mintrl(
    sharpe_ratio: float,
    t_obs: int,
    skew: float = 0.0,
    kurtosis: float = 3.0,
    benchmark_sr: float = 0.0,
    level: float = 0.95,
) -> tuple[float, float]:
    """Probabilistic Sharpe ratio and minimum track record length.

    Both use the non-normality adjustment
    ``1 - skew*SR + (kurtosis - 1)/4 * SR^2``; MinTRL is in the same period
    units as ``t_obs`` and is infinite when ``SR == benchmark_sr``.
    """
    if t_obs < 2:
        raise ValueError("t_obs must be >= 2")
    sr = sharpe_ratio
    adj = 1.0 - skew * sr + (kurtosis - 1.0) / 4.0 * sr * sr
    if adj <= 0:
        raise ValueError(f"non-positive Sharpe variance adjustment {adj} from moments")
    diff = sr - benchmark_sr
    psr = float(stats.norm.cdf(diff * math.sqrt(t_obs - 1) / math.sqrt(adj)))
    if diff == 0:
        return psr, math.inf
    z = stats.norm.ppf(level)
    return psr, float(1.0 + adj * (z / diff) ** 2)


_OUTCOME_CODE = {"H": 0, "D": 1, "A": 2}


def _pick_won(slate, results, i: int) -> bool:
    """Whether outcome ``i`` of the slate settled as a winner."""
    idx = np.asarray(slate.match_index)
    m = int(idx[i])
    if m >= len(results) or results[m] is None:
        raise ValueError(f"missing result for match {m}")
    res = results[m]
    res = _OUTCOME_CODE[res] if isinstance(res, str) else int(res)
    position = i - int(np.flatnonzero(idx == m)[0])
    return res == position


def roi(slate, picks: Selection, results: Sequence[str | int]) -> float:
    """Unit stake per pick; mean of ``d - 1`` for winners and ``-1`` for losers.

    ``results`` holds one entry per match, either ``H``/``D``/``A`` or 0/1/2.
    """
    if picks.weight == 0:
        raise ValueError("roi needs at least one pick")
    if picks.n != len(slate.odds):
        raise ValueError("picks do not match the slate")
    won = [_pick_won(slate, results, i) for i in picks.support]
    odds = np.asarray(slate.odds)[list(picks.support)]
    return float(np.where(won, odds - 1.0, -1.0).mean())


def pick_outcomes(slate, picks: Selection, results) -> tuple[np.ndarray, np.ndarray]:
    """Probabilities and 0/1 outcomes of the selected picks."""
    probs = np.asarray(slate.probs)[list(picks.support)]
    ys = np.array([1.0 if _pick_won(slate, results, i) else 0.0 for i in picks.support])
    return probs, ys


def brier_logloss(probabilities, outcomes) -> tuple[float, float]:
    p = np.asarray(probabilities, dtype=float)
    y = np.asarray(outcomes, dtype=float)
    if p.shape != y.shape or p.size == 0:
        raise ValueError("need equal-length, non-empty probabilities and outcomes")
    if np.any((p < 0) | (p > 1)):
        raise ValueError("probabilities must lie in [0, 1]")
    if np.any((y != 0) & (y != 1)):
        raise ValueError("outcomes must be 0 or 1")
    brier = float(np.mean((p - y) ** 2))
    pc = np.clip(p, PROB_CLIP, 1 - PROB_CLIP)
    ll = float(np.mean(-(y * np.log(pc) + (1 - y) * np.log(1 - pc))))
    return brier, ll
