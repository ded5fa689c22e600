"""Loaders for the equity and betting datasets plus instance construction.

Equities come from the French Data Library daily industry-portfolio CSV
(percent returns, ``YYYYMMDD`` dates, ``-99.99``/``-999`` for missing).
Betting slates come from football-data.co.uk season files.
"""

from __future__ import annotations

import csv
import datetime as dt
import io
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from pfqubo.errors import DataError
from pfqubo.instances import PortfolioInstance, equity_moments

log = logging.getLogger(__name__)

SENTINELS = (-99.99, -999.0)
OUTCOMES = ("H", "D", "A")

# Aggregate columns are market summaries, not bookmakers; closing prices are post-market.
_AGGREGATE_PREFIXES = {"Max", "Avg", "BbMx", "BbAv"}


# --------------------------------------------------------------------------- equities


@dataclass(frozen=True, eq=False)
class ReturnsPanel:
    dates: tuple[dt.date, ...]
    assets: tuple[str, ...]
    returns: np.ndarray

    def __post_init__(self):
        r = np.array(self.returns, dtype=float)
        if r.shape != (len(self.dates), len(self.assets)):
            raise ValueError(f"returns shape {r.shape} does not match {len(self.dates)} dates x {len(self.assets)} assets")
        if any(b <= a for a, b in zip(self.dates, self.dates[1:])):
            raise ValueError("dates must be strictly increasing")
        if not np.all(np.isfinite(r)):
            raise ValueError("returns contain missing values")
        r.setflags(write=False)
        object.__setattr__(self, "dates", tuple(self.dates))
        object.__setattr__(self, "assets", tuple(self.assets))
        object.__setattr__(self, "returns", r)

    def __len__(self):
        return len(self.dates)

    def rows(self, start: int, stop: int) -> "ReturnsPanel":
        return ReturnsPanel(self.dates[start:stop], self.assets, self.returns[start:stop])

    def columns(self, idx: Sequence[int]) -> "ReturnsPanel":
        idx = list(idx)
        return ReturnsPanel(self.dates, tuple(self.assets[i] for i in idx), self.returns[:, idx])

    def between(self, start: dt.date, end: dt.date) -> "ReturnsPanel":
        """Rows with ``start <= date <= end``."""
        keep = [i for i, d in enumerate(self.dates) if start <= d <= end]
        if not keep:
            return ReturnsPanel((), self.assets, np.empty((0, len(self.assets))))
        return self.rows(keep[0], keep[-1] + 1)


def _parse_yyyymmdd(token: str) -> dt.date:
    try:
        return dt.datetime.strptime(token.strip(), "%Y%m%d").date()
    except ValueError as exc:
        raise DataError(f"unparseable date {token!r}") from exc


def load_ff49(path, *, assets: Sequence[str] | None = None, section: int = 0) -> ReturnsPanel:
    """Load a French Data Library daily CSV as decimal returns.

    The file holds one or more blocks (value-weighted first, then
    equal-weighted, ...), each introduced by a header row whose first cell is
    empty.  ``section`` picks the block.  Rows with a sentinel in any of the
    requested ``assets`` (all assets by default) are dropped.
    """
    try:
        text = Path(path).read_text(encoding="latin-1")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc

    blocks: list[tuple[list[str], list[list[str]]]] = []
    header: list[str] | None = None
    rows: list[list[str]] = []
    for line in text.splitlines():
        cells = [c.strip() for c in line.split(",")]
        if len(cells) > 1 and cells[0] == "" and any(cells[1:]):
            if header is not None and rows:
                blocks.append((header, rows))
            header, rows = [c for c in cells[1:]], []
        elif header is not None and cells and re.fullmatch(r"\d{8}", cells[0]):
            rows.append(cells)
        elif header is not None and rows and (not line.strip() or not re.match(r"\s*\d", line)):
            blocks.append((header, rows))
            header, rows = None, []
    if header is not None and rows:
        blocks.append((header, rows))
    if not blocks:
        raise DataError(f"no data rows found in {path}")
    if section >= len(blocks):
        raise DataError(f"{path} has {len(blocks)} data sections, requested index {section}")

    names, raw = blocks[section]
    names = [n for n in names if n]
    if assets is None:
        cols = list(range(len(names)))
    else:
        missing = [a for a in assets if a not in names]
        if missing:
            raise DataError(f"assets not in file: {missing}")
        cols = [names.index(a) for a in assets]

    dates: list[dt.date] = []
    values: list[list[float]] = []
    dropped = 0
    for cells in raw:
        if len(cells) < len(names) + 1:
            raise DataError(f"short row for {cells[0]}")
        try:
            vals = [float(cells[1 + c]) for c in cols]
        except ValueError as exc:
            raise DataError(f"non-numeric return on {cells[0]}") from exc
        if any(v in SENTINELS or v <= -99.99 for v in vals):
            dropped += 1
            continue
        dates.append(_parse_yyyymmdd(cells[0]))
        values.append(vals)
    if not values:
        raise DataError(f"no complete data rows found in {path}")
    if dropped:
        log.info("dropped %d rows containing missing-value sentinels", dropped)
    return ReturnsPanel(tuple(dates), tuple(names[c] for c in cols), np.array(values) / 100.0)


def select_universe(panel: ReturnsPanel, n: int, window: tuple[dt.date, dt.date] | None = None) -> ReturnsPanel:
    """Keep the ``n`` assets with the largest ``|mean return|`` over ``window``.

    Ties go to the lower original column; kept assets stay in column order.
    """
    total = len(panel.assets)
    if n > total:
        raise ValueError(f"requested {n} assets but panel has {total}")
    if n < 1:
        raise ValueError("n must be >= 1")
    ranked = panel if window is None else panel.between(*window)
    if len(ranked) == 0:
        raise ValueError("ranking window contains no rows")
    if n == total:
        return panel
    score = np.abs(ranked.returns.mean(axis=0))
    order = sorted(range(total), key=lambda j: (-score[j], j))
    return panel.columns(sorted(order[:n]))


@dataclass(frozen=True)
class RollingWindow:
    rebalance_date: dt.date
    estimation: ReturnsPanel
    evaluation: ReturnsPanel
    instance: PortfolioInstance


def rebalance_indices(dates: Sequence[dt.date], window_days: int) -> list[int]:
    """Row indices of month-start trading days preceded by ``window_days`` rows."""
    out = []
    for i in range(window_days, len(dates)):
        if i == 0 or (dates[i].year, dates[i].month) != (dates[i - 1].year, dates[i - 1].month):
            out.append(i)
    return out


def rolling_instances(
    panel: ReturnsPanel,
    *,
    k: int,
    lam: float,
    penalty_a: float,
    window_days: int = 252,
    n: int | None = None,
) -> list[RollingWindow]:
    """Monthly rebalanced instances on trailing ``window_days`` estimation windows.

    The evaluation window runs from the rebalance day up to (not including)
    the next one, or to the end of the panel for the last rebalance.  With
    ``n`` set, the universe is re-ranked inside each estimation window.
    """
    starts = rebalance_indices(panel.dates, window_days)
    if not starts:
        raise DataError(f"panel of {len(panel)} days is too short for a {window_days}-day estimation window")
    out = []
    for j, i in enumerate(starts):
        stop = starts[j + 1] if j + 1 < len(starts) else len(panel)
        est = panel.rows(i - window_days, i)
        ev = panel.rows(i, stop)
        if n is not None:
            keep = select_universe(est, n).assets
            idx = [panel.assets.index(a) for a in keep]
            est, ev = est.columns(idx), ev.columns(idx)
        mu, sigma = equity_moments(est)
        inst = PortfolioInstance(mu, sigma, lam, penalty_a, k, est.assets, "equity")
        out.append(RollingWindow(panel.dates[i], est, ev, inst))
    return out


# --------------------------------------------------------------------------- betting


@dataclass(frozen=True)
class Match:
    date: dt.date
    home: str
    away: str
    league: str = ""
    kickoff: str = ""
    odds: dict[str, tuple[float, float, float]] = field(default_factory=dict)
    result: str | None = None


@dataclass(frozen=True, eq=False)
class BettingSlate:
    """``M`` matches flattened to ``3M`` outcomes ordered home/draw/away per match."""

    matches: tuple[Match, ...]
    odds: np.ndarray
    probs: np.ndarray
    match_index: np.ndarray
    k: int | None = None

    def __post_init__(self):
        m = len(self.matches)
        odds = np.array(self.odds, dtype=float)
        probs = np.array(self.probs, dtype=float)
        idx = np.array(self.match_index, dtype=int)
        if not (odds.shape == probs.shape == idx.shape == (3 * m,)):
            raise ValueError("slate arrays must all have length 3 * matches")
        for a in (odds, probs, idx):
            a.setflags(write=False)
        object.__setattr__(self, "matches", tuple(self.matches))
        object.__setattr__(self, "odds", odds)
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "match_index", idx)

    @property
    def n(self) -> int:
        return int(self.odds.size)

    @property
    def results(self) -> list[str | None]:
        return [mt.result for mt in self.matches]

    def labels(self) -> list[str]:
        return [f"{mt.home}-{mt.away}:{o}" for mt in self.matches for o in OUTCOMES]


def _parse_match_date(token: str) -> dt.date:
    token = token.strip()
    for fmt in ("%d/%m/%Y", "%d/%m/%y"):
        try:
            return dt.datetime.strptime(token, fmt).date()
        except ValueError:
            continue
    raise DataError(f"unparseable date {token!r}")


def _odds_prefixes(header: Sequence[str]) -> list[str]:
    cols = set(header)
    prefixes = []
    for c in header:
        if len(c) > 1 and c.endswith("H"):
            p = c[:-1]
            if p + "D" in cols and p + "A" in cols and p not in ("FT", "HT"):
                prefixes.append(p)
    return prefixes


def load_football_odds(path) -> list[Match]:
    """Parse one football-data.co.uk season CSV into matches with raw odds."""
    try:
        raw = Path(path).read_bytes().decode("utf-8-sig", errors="replace")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    reader = csv.DictReader(io.StringIO(raw))
    header = reader.fieldnames or []
    for col in ("Date", "HomeTeam", "AwayTeam"):
        if col not in header:
            raise DataError(f"{path} lacks required column {col}")
    prefixes = _odds_prefixes(header)
    if not prefixes:
        raise DataError(f"{path} has no recognized odds columns")
    matches = []
    for row in reader:
        if not (row.get("Date") or "").strip():
            continue
        odds = {}
        for p in prefixes:
            try:
                trip = tuple(float(row[p + o]) for o in OUTCOMES)
            except (TypeError, ValueError):
                continue
            odds[p] = trip
        res = (row.get("FTR") or "").strip() or None
        matches.append(
            Match(
                date=_parse_match_date(row["Date"]),
                home=row["HomeTeam"].strip(),
                away=row["AwayTeam"].strip(),
                league=(row.get("Div") or "").strip(),
                kickoff=(row.get("Time") or "").strip(),
                odds=odds,
                result=res if res in OUTCOMES else None,
            )
        )
    return matches


def consensus_triplets(odds: dict[str, tuple[float, float, float]]) -> list[tuple[float, float, float]]:
    """Complete bookmaker triplets; aggregates are used only when no bookmaker is present."""
    def complete(t):
        return all(np.isfinite(v) and v > 1.0 for v in t)

    books = [t for p, t in sorted(odds.items()) if p not in _AGGREGATE_PREFIXES and not _is_closing(p, odds) and complete(t)]
    if books:
        return books
    return [t for p, t in sorted(odds.items()) if complete(t)]


def _is_closing(prefix: str, odds: dict) -> bool:
    return prefix.endswith("C") and (prefix[:-1] in odds or prefix[:-1] in _AGGREGATE_PREFIXES)


def devig(triplets: Iterable[Sequence[float]]) -> tuple[np.ndarray, np.ndarray]:
    """Consensus decimal odds and margin-free probabilities for one match.

    Implied probabilities ``1/d`` are averaged over bookmakers and scaled to
    sum to one; payoff odds are the per-outcome mean of the quoted odds.
    """
    trips = np.array([t for t in triplets if len(t) == 3 and all(v > 1.0 for v in t)], dtype=float)
    if trips.size == 0:
        raise DataError("no complete odds triplet with all odds > 1")
    implied = (1.0 / trips).mean(axis=0)
    return trips.mean(axis=0), implied / implied.sum()


def slate_from_matches(matches: Sequence[Match], k: int | None = None) -> BettingSlate:
    odds, probs, idx = [], [], []
    for m, mt in enumerate(matches):
        d, p = devig(consensus_triplets(mt.odds))
        odds.extend(d)
        probs.extend(p)
        idx.extend([m, m, m])
    return BettingSlate(tuple(matches), np.array(odds), np.array(probs), np.array(idx), k)


def _slate_order(mt: Match):
    return (mt.date, mt.kickoff or "99:99", mt.league, mt.home)


def calendar_windows(matches: Sequence[Match], window_days: int = 3) -> Iterator[list[Match]]:
    """Group date-sorted matches into consecutive windows of ``window_days`` days."""
    i = 0
    while i < len(matches):
        start = matches[i].date
        j = i
        while j < len(matches) and (matches[j].date - start).days < window_days:
            j += 1
        yield list(matches[i:j])
        i = j


def build_slates(
    matches: Sequence[Match],
    *,
    window_days: int = 3,
    slate_sizes: Iterable[int] = range(3, 17),
    k_values: Iterable[int | None] = (None,),
) -> list[BettingSlate]:
    """Matchday slates from consecutive ``window_days`` calendar windows.

    For each window and each size ``s`` it can fill, the first ``s`` matches by
    (date, kickoff, league, home team) form a slate; one slate is emitted per
    admissible ``k`` (``k <= 3s``).  Matches without a usable odds triplet are
    skipped.
    """
    sizes = sorted(set(slate_sizes))
    ks = list(k_values)
    usable = [m for m in matches if consensus_triplets(m.odds)]
    if any(b.date < a.date for a, b in zip(usable, usable[1:])):
        raise ValueError("matches must be sorted by date")
    out = []
    for window in calendar_windows(usable, window_days):
        window = sorted(window, key=_slate_order)
        for s in sizes:
            if s > len(window):
                break
            chosen = window[:s]
            for k in ks:
                if k is not None and k > 3 * s:
                    continue
                out.append(slate_from_matches(chosen, k))
    return out
