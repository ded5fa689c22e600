"""Seeded synthetic fixtures so every experiment runs without downloads.

The equity generator is a daily multi-factor model (market plus sector
factors) at realistic return scale; the betting generator produces weekend
fixture lists with bookmaker-margin odds in the 1.1 to 15 range and results
drawn from the true outcome probabilities.
"""

from __future__ import annotations

import csv
import datetime as dt
from pathlib import Path

import numpy as np

from pfqubo.ingest import OUTCOMES, Match, ReturnsPanel

EQUITY_START = dt.date(2015, 1, 5)
BETTING_START = dt.date(2019, 8, 3)  # a Saturday
N_SECTORS = 4
BOOKMAKERS = ("B365", "BW", "PS")


def business_days(start: dt.date, count: int) -> list[dt.date]:
    days = []
    d = start
    while len(days) < count:
        if d.weekday() < 5:
            days.append(d)
        d += dt.timedelta(days=1)
    return days


def equity_panel(n_assets: int = 49, days: int = 1000, seed: int = 0) -> ReturnsPanel:
    """Daily decimal returns from a market-plus-sector factor model."""
    rng = np.random.default_rng(seed)
    market = rng.normal(3e-4, 0.010, size=days)
    sectors = rng.normal(0.0, 0.004, size=(days, N_SECTORS))
    beta = rng.uniform(0.6, 1.4, size=n_assets)
    sector_of = rng.integers(0, N_SECTORS, size=n_assets)
    loading = rng.uniform(0.5, 1.5, size=n_assets)
    alpha = rng.normal(0.0, 2e-4, size=n_assets)
    idio_vol = rng.uniform(0.005, 0.012, size=n_assets)
    noise = rng.normal(size=(days, n_assets)) * idio_vol
    returns = alpha + np.outer(market, beta) + sectors[:, sector_of] * loading + noise
    names = tuple(f"Ind{j + 1:02d}" for j in range(n_assets))
    return ReturnsPanel(tuple(business_days(EQUITY_START, days)), names, returns)


def _quote(rng, probs: np.ndarray) -> tuple[float, float, float]:
    margin = rng.uniform(0.03, 0.07)
    odds = np.clip(1.0 / (probs * (1.0 + margin)), 1.1, 15.0)
    return tuple(float(round(o, 2)) for o in odds)


def betting_matches(weeks: int = 30, per_day: int = 10, seed: int = 0) -> list[Match]:
    """Saturday and Sunday fixtures, ``per_day`` each, with three bookmaker quotes."""
    rng = np.random.default_rng(seed)
    teams = [f"Team{j + 1:02d}" for j in range(4 * per_day)]
    out = []
    for w in range(weeks):
        for offset in (0, 1):
            day = BETTING_START + dt.timedelta(days=7 * w + offset)
            order = rng.permutation(len(teams))
            for m in range(per_day):
                probs = rng.dirichlet([3.0, 2.0, 2.2])
                probs = np.clip(probs, 1.0 / 14.0, 0.9)
                probs /= probs.sum()
                odds = {b: _quote(rng, probs) for b in BOOKMAKERS}
                result = OUTCOMES[int(rng.choice(3, p=probs))]
                out.append(
                    Match(
                        date=day,
                        home=teams[order[2 * m]],
                        away=teams[order[2 * m + 1]],
                        league="SYN",
                        kickoff=f"{12 + m // 4:02d}:{(m % 4) * 15:02d}",
                        odds=odds,
                        result=result,
                    )
                )
    return out


def write_ff49_csv(panel: ReturnsPanel, path) -> Path:
    """Write a panel in the French library daily layout (percent returns)."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        fh.write("Synthetic daily industry portfolio returns\n\n")
        fh.write("  Average Value Weighted Returns -- Daily\n")
        fh.write("," + ",".join(panel.assets) + "\n")
        for d, row in zip(panel.dates, panel.returns):
            fh.write(d.strftime("%Y%m%d") + "," + ",".join(f"{100 * v:.4f}" for v in row) + "\n")
        fh.write("\n")
    return path


def write_football_csv(matches, path) -> Path:
    """Write matches in the football-data.co.uk season layout."""
    path = Path(path)
    books = sorted({b for m in matches for b in m.odds})
    header = ["Div", "Date", "Time", "HomeTeam", "AwayTeam", "FTR"]
    header += [f"{b}{o}" for b in books for o in OUTCOMES]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for m in matches:
            row = [m.league, m.date.strftime("%d/%m/%Y"), m.kickoff, m.home, m.away, m.result or ""]
            for b in books:
                row += [f"{v:.2f}" for v in m.odds[b]] if b in m.odds else ["", "", ""]
            w.writerow(row)
    return path
