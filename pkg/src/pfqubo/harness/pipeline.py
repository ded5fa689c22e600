"""Experiment orchestration: instances, references, the sampling pipeline and its tables."""

from __future__ import annotations

import datetime as dt
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from functools import cached_property, lru_cache

import numpy as np

from pfqubo import __version__
from pfqubo.errors import ConfigError, DataError
from pfqubo.harness import synth
from pfqubo.harness.config import PipelineConfig
from pfqubo.ingest import (
    BettingSlate,
    ReturnsPanel,
    build_slates,
    load_ff49,
    load_football_odds,
    rolling_instances,
    select_universe,
)
from pfqubo.instances import (
    PortfolioInstance,
    QuboMatrix,
    Selection,
    betting_moments,
    build_objective_qubo,
    build_penalized_qubo,
    equity_moments,
    qubo_energy,
)
from pfqubo.metrics import (
    FinancialReport,
    MetricsReport,
    bootstrap_ci,
    brier_logloss,
    dynamic_range_ratio,
    edge_stats,
    feasibility_and_weight,
    jaccard,
    pick_outcomes,
    psr_mintrl,
    regret,
    return_moments,
    roi,
    sharpe,
)
from pfqubo.project import all_ones_projection, project_to_k, random_projection
from pfqubo.samplers import SampleSet, brute_force_k_subsets, greedy_construct, sample
from pfqubo.sparsify import apply_sparsifier, edge_count, settlement_mask, sparsify_mask

log = logging.getLogger(__name__)

SCALING_HEADER = (
    "case,n,k,lambda,sparsifier,edges_penalized,edges_used,dynamic_range_ratio,"
    "prefeas_rate,mean_weight,regret_best,regret_mean,jaccard_best,reference_kind"
).split(",")
ABLATION_HEADER = ["n", "k", "slate", "qubo", "method", "regret", "jaccard", "weight", "reference_kind"]
ABLATION_SUMMARY_HEADER = [
    "n", "k", "qubo", "method", "slates", "regret_mean", "regret_median",
    "jaccard_mean", "matches_reference", "differs_from_reference", "reference_kind",
]
BACKTEST_HEADER = [
    "case", "n", "k", "window", "date", "t_obs", "sharpe", "ci_low", "ci_high", "psr", "min_trl",
    "skew", "kurtosis", "roi", "brier", "log_loss", "support",
]

# Quantities that only exist on quantum hardware; every output lists them as absent.
ABSENT_HARDWARE_METRICS = (
    "chain_length_mean",
    "chain_break_fraction",
    "chain_strength",
    "physical_qubits",
    "qubit_overhead",
    "anneal_time",
    "qpu_read_protocol",
    "chain_length_slope",
    "live_sharpe",
    "live_roi",
)

EXACT_TOL = 1e-12


def _now() -> str:
    return dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds")


@dataclass
class RunRecord:
    """Everything one harness command produced, serializable to JSON."""

    kind: str
    config_digest: str
    config: dict
    rows: list[dict] = field(default_factory=list)
    details: list[dict] = field(default_factory=list)
    provenance: list[dict] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    started: str = field(default_factory=_now)
    finished: str = ""
    version: str = __version__
    absent_hardware_metrics: tuple[str, ...] = ABSENT_HARDWARE_METRICS

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "version": self.version,
            "config_digest": self.config_digest,
            "config": self.config,
            "started": self.started,
            "finished": self.finished,
            "absent_hardware_metrics": list(self.absent_hardware_metrics),
            "warnings": self.warnings,
            "rows": self.rows,
            "details": self.details,
            "provenance": self.provenance,
        }


# --------------------------------------------------------------------------- data


@lru_cache(maxsize=8)
def _synthetic_panel(days: int, seed: int) -> ReturnsPanel:
    return synth.equity_panel(49, days, seed)


@lru_cache(maxsize=8)
def _synthetic_matches(weeks: int, seed: int):
    return tuple(synth.betting_matches(weeks, seed=seed))


def load_panel(cfg: PipelineConfig) -> ReturnsPanel:
    if cfg.source == "synthetic":
        return _synthetic_panel(cfg.synthetic_days, cfg.synthetic_seed)
    return load_ff49(cfg.ff49_path)


def load_matches(cfg: PipelineConfig) -> list:
    if cfg.source == "synthetic":
        return list(_synthetic_matches(cfg.synthetic_weeks, cfg.synthetic_seed))
    matches = []
    for p in cfg.odds_paths:
        matches.extend(load_football_odds(p))
    matches.sort(key=lambda m: m.date)
    return matches


def equity_instance(panel: ReturnsPanel, n: int, k: int, cfg: PipelineConfig) -> PortfolioInstance:
    """Instance on the trailing estimation window of the panel, top-``n`` by |mean|."""
    if len(panel) < max(cfg.estimation_days, 2):
        raise DataError(f"panel has {len(panel)} days, estimation needs {cfg.estimation_days}")
    if n > len(panel.assets):
        raise DataError(f"requested n={n} but the panel has {len(panel.assets)} assets")
    est = select_universe(panel.rows(len(panel) - cfg.estimation_days, len(panel)), n)
    mu, sigma = equity_moments(est)
    return PortfolioInstance(mu, sigma, cfg.lam, cfg.penalty_a, k, est.assets, "equity")


def betting_slates(matches, n: int, k: int, cfg: PipelineConfig) -> list[BettingSlate]:
    slates = build_slates(matches, window_days=cfg.slate_window_days, slate_sizes=[n // 3], k_values=[k])
    if not slates:
        raise DataError(f"no {cfg.slate_window_days}-day window holds {n // 3} matches")
    return slates


def betting_instance(slate: BettingSlate, k: int, cfg: PipelineConfig) -> PortfolioInstance:
    mu, sigma = betting_moments(slate)
    return PortfolioInstance(mu, sigma, cfg.lam, cfg.penalty_a, k, tuple(slate.labels()), "betting")


@dataclass(frozen=True)
class Problem:
    case: str
    n: int
    k: int
    instance: PortfolioInstance
    slate: BettingSlate | None = None

    @cached_property
    def objective(self) -> QuboMatrix:
        return build_objective_qubo(self.instance)

    @cached_property
    def penalized(self) -> QuboMatrix | None:
        return build_penalized_qubo(self.instance) if self.instance.penalty_a > 0 else None


def build_problems(cfg: PipelineConfig) -> list[Problem]:
    out = []
    if cfg.case == "equity":
        panel = load_panel(cfg)
        for n, k in cfg.pairs:
            out.append(Problem("equity", n, k, equity_instance(panel, n, k, cfg)))
    else:
        matches = load_matches(cfg)
        for n, k in cfg.pairs:
            slates = betting_slates(matches, n, k, cfg)
            if cfg.slate_index >= len(slates):
                raise DataError(f"slate_index {cfg.slate_index} but only {len(slates)} slates of size {n}")
            slate = slates[cfg.slate_index]
            out.append(Problem("betting", n, k, betting_instance(slate, k, cfg), slate))
    return out


# --------------------------------------------------------------------------- references


@dataclass(frozen=True)
class Reference:
    selection: Selection
    energy: float
    kind: str
    fallback: bool = False


def reference_solution(q: QuboMatrix, k: int, cfg: PipelineConfig) -> Reference:
    """Exact k-subset optimum within budget, else greedy construction.

    With ``reference = exact`` an over-budget instance falls back to greedy and
    the reference is flagged.
    """
    greedy_kind = f"greedy-{cfg.greedy_restarts}"
    if cfg.reference in ("auto", "exact"):
        if math.comb(q.n, k) <= cfg.exact_budget:
            sel, e, _ = brute_force_k_subsets(q, k, cfg.exact_budget)
            return Reference(sel, e, "exact")
        fallback = cfg.reference == "exact"
        if fallback:
            log.warning("C(%d,%d) exceeds the exact budget; using %s", q.n, k, greedy_kind)
        sel = greedy_construct(q, k, cfg.greedy_restarts, seed=0)
        return Reference(sel, qubo_energy(q, sel), greedy_kind + (" (fallback)" if fallback else ""), fallback)
    sel = greedy_construct(q, k, cfg.greedy_restarts, seed=0)
    return Reference(sel, qubo_energy(q, sel), greedy_kind)


# --------------------------------------------------------------------------- pipeline


@dataclass(frozen=True)
class Variant:
    name: str
    q_used: QuboMatrix
    q_eval: QuboMatrix
    info: dict


def variants(problem: Problem, cfg: PipelineConfig) -> list[Variant]:
    """Dense penalized, penalty-free, and each configured sparsifier of the penalized model."""
    obj = problem.objective
    pen = problem.penalized
    out = []
    if pen is not None:
        out.append(Variant("dense", pen, pen, {}))
    out.append(Variant("penalty_free", obj, obj, {}))
    if pen is not None:
        sigma = problem.instance.sigma
        labels = problem.instance.labels or None
        for spec in cfg.sparsifiers:
            try:
                q_sparse, info = apply_sparsifier(spec, pen, sigma=sigma, slate=problem.slate, labels=labels)
            except ValueError as exc:
                raise ConfigError(f"sparsifier {spec.label} failed at n={problem.n}: {exc}") from exc
            name = "settlement" if info.get("prior") == "settlement" and spec.family == "mask" else spec.label
            # projection always evaluates on the dense model of record
            out.append(Variant(name, q_sparse, pen, info))
    return out


@dataclass(frozen=True)
class ProjectedRead:
    selection: Selection
    eval_energy: float
    objective_energy: float
    occurrences: int


def project_reads(samples: SampleSet, q_eval: QuboMatrix, q_obj: QuboMatrix, k: int) -> list[ProjectedRead]:
    out = []
    for rec in samples.records:
        end = project_to_k(q_eval, rec.bits, k).end
        out.append(ProjectedRead(end, qubo_energy(q_eval, end), qubo_energy(q_obj, end), rec.occurrences))
    return out


def best_projected(reads: list[ProjectedRead]) -> ProjectedRead:
    """Lowest evaluation energy; smaller support breaks ties."""
    return min(reads, key=lambda r: (r.eval_energy, r.selection.support))


def evaluate_variant(problem: Problem, variant: Variant, ref: Reference, seed: int, cfg: PipelineConfig) -> dict:
    obj = problem.objective
    spec = replace(cfg.sampler, seed=int(seed), k=problem.k)
    try:
        samples = sample(spec, variant.q_used)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    prefeas, mean_w = feasibility_and_weight(samples, problem.k)
    reads = project_reads(samples, variant.q_eval, obj, problem.k)
    best = best_projected(reads)
    regrets = [regret(r.objective_energy, ref.energy) for r in reads]
    weights = [r.occurrences for r in reads]
    edges, density, max_off = edge_stats(variant.q_used)
    report = MetricsReport(
        regret=regret(best.objective_energy, ref.energy),
        jaccard=jaccard(best.selection, ref.selection),
        feasibility_rate=prefeas,
        mean_hamming_weight=mean_w,
        edge_count=edges,
        density=density,
        max_offdiag=max_off,
        dynamic_range_ratio=dynamic_range_ratio(variant.q_used, obj),
    )
    return {
        "case": problem.case,
        "n": problem.n,
        "k": problem.k,
        "sparsifier": variant.name,
        "seed": int(seed),
        "metrics": report.to_dict(),
        "regret_mean": float(np.average(regrets, weights=weights)),
        "best_support": list(best.selection.support),
        "reference_support": list(ref.selection.support),
        "reference_kind": ref.kind,
        "reference_fallback": ref.fallback,
        "edges_penalized": edge_count(problem.penalized) if problem.penalized is not None else None,
        "sparsifier_info": {k: v for k, v in variant.info.items() if not isinstance(v, np.ndarray)},
        "reads": samples.reads,
        "origin": samples.origin,
        "post_projection_weight": best.selection.weight,
    }


def _map(fn, items, workers: int):
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def run_pipeline(cfg: PipelineConfig) -> RunRecord:
    """Build, optionally sparsify, sample, project and score every configured instance."""
    record = RunRecord("pipeline", cfg.digest(), cfg.to_dict())
    problems = build_problems(cfg)
    tasks = []
    for p in problems:
        ref = reference_solution(p.objective, p.k, cfg)
        if ref.fallback:
            record.warnings.append(f"n={p.n}, k={p.k}: exact reference over budget, greedy fallback used")
        for v in variants(p, cfg):
            for s in cfg.seeds:
                tasks.append((p, v, ref, s))
    record.details = _map(lambda t: evaluate_variant(*t, cfg), tasks, cfg.workers)
    record.provenance = [
        {"n": d["n"], "sparsifier": d["sparsifier"], "seed": d["seed"], "reads": d["reads"], "sampler": d["origin"]}
        for d in record.details
    ]
    record.rows = scaling_rows(record.details, cfg)
    record.finished = _now()
    return record


def scaling_rows(details: list[dict], cfg: PipelineConfig) -> list[dict]:
    """One row per (case, n, sparsifier), aggregated over seeds.

    ``regret_best`` is the best projected read over all seeds, ``regret_mean``
    averages over every read of every seed.
    """
    groups: dict[tuple, list[dict]] = {}
    for d in details:
        groups.setdefault((d["case"], d["n"], d["k"], d["sparsifier"]), []).append(d)
    rows = []
    for (case, n, k, name), ds in groups.items():
        best = min(ds, key=lambda d: (d["metrics"]["regret"], d["seed"]))
        m = [d["metrics"] for d in ds]
        rows.append(
            {
                "case": case,
                "n": n,
                "k": k,
                "lambda": cfg.lam,
                "sparsifier": name,
                "edges_penalized": ds[0]["edges_penalized"] if ds[0]["edges_penalized"] is not None else "",
                "edges_used": m[0]["edge_count"],
                "dynamic_range_ratio": m[0]["dynamic_range_ratio"],
                "prefeas_rate": float(np.mean([x["feasibility_rate"] for x in m])),
                "mean_weight": float(np.mean([x["mean_hamming_weight"] for x in m])),
                "regret_best": best["metrics"]["regret"],
                "regret_mean": float(np.mean([d["regret_mean"] for d in ds])),
                "jaccard_best": best["metrics"]["jaccard"],
                "reference_kind": ds[0]["reference_kind"],
            }
        )
    return rows


def scaling_table(cfg: PipelineConfig) -> RunRecord:
    record = run_pipeline(cfg)
    record.kind = "scaling"
    return record


# --------------------------------------------------------------------------- ablation


def _ablation_model(name: str, problem: Problem) -> QuboMatrix:
    pen = problem.penalized
    if name == "objective":
        return problem.objective
    if name == "settlement_objective":
        return sparsify_mask(problem.objective, settlement_mask(problem.slate))
    if pen is None:
        raise ConfigError("the ablation's penalized models need penalty_a > 0")
    if name == "dense":
        return pen
    return sparsify_mask(pen, settlement_mask(problem.slate))


def ablation_rows_for_slate(problem: Problem, slate_no: int, cfg: PipelineConfig) -> list[dict]:
    """Every configured (qubo, method) cell for one slate.

    Each model is its own projection and reference model; regret is reported
    in objective-only energy so rows of different models are comparable.
    """
    obj = problem.objective
    k = problem.k
    seed = cfg.seeds[0]
    rows = []
    for qname in cfg.ablation_qubos:
        model = _ablation_model(qname, problem)
        ref = reference_solution(model, k, cfg)
        ref_obj = qubo_energy(obj, ref.selection)

        def row(method, sel_or_value, jac=None):
            if isinstance(sel_or_value, Selection):
                r, j, w = regret(qubo_energy(obj, sel_or_value), ref_obj), jaccard(sel_or_value, ref.selection), sel_or_value.weight
            else:
                r, j, w = sel_or_value, jac, k
            return {"n": problem.n, "k": k, "slate": slate_no, "qubo": qname, "method": method,
                    "regret": r, "jaccard": j, "weight": w, "reference_kind": ref.kind}

        for method in cfg.ablation_methods:
            if method == "sampler":
                samples = sample(replace(cfg.sampler, seed=int(seed), k=k), model)
                best = best_projected(project_reads(samples, model, obj, k))
                rows.append(row("sampler+proj", best.selection))
            elif method == "all_ones":
                rows.append(row("all-ones+proj", all_ones_projection(model, k).end))
            elif method == "random":
                rp = random_projection(model, k, cfg.random_trials, seed)
                regs = [regret(qubo_energy(obj, t.end), ref_obj) for t in rp.traces]
                jacs = [jaccard(t.end, ref.selection) for t in rp.traces]
                rows.append(row("random+proj", float(np.mean(regs)), float(np.mean(jacs))))
            elif method == "greedy":
                rows.append(row("greedy", greedy_construct(model, k, cfg.greedy_restarts, seed)))
    return rows


def ablation_table(cfg: PipelineConfig) -> RunRecord:
    if cfg.case != "betting":
        raise ConfigError("the ablation runs on betting slates; set case = betting")
    record = RunRecord("ablation", cfg.digest(), cfg.to_dict())
    matches = load_matches(cfg)
    tasks = []
    for n, k in cfg.pairs:
        slates = betting_slates(matches, n, k, cfg)
        if len(slates) < cfg.ablation_slates:
            record.warnings.append(f"n={n}: only {len(slates)} slates available, {cfg.ablation_slates} requested")
        for i, slate in enumerate(slates[: cfg.ablation_slates]):
            tasks.append((Problem("betting", n, k, betting_instance(slate, k, cfg), slate), i))
    per_slate = _map(lambda t: ablation_rows_for_slate(t[0], t[1], cfg), tasks, cfg.workers)
    record.details = [r for rows in per_slate for r in rows]
    record.rows = ablation_summary(record.details)
    record.provenance = [{"n": p.n, "slate": i, "seed": cfg.seeds[0]} for p, i in tasks]
    record.finished = _now()
    return record


def ablation_summary(details: list[dict]) -> list[dict]:
    groups: dict[tuple, list[dict]] = {}
    for d in details:
        groups.setdefault((d["n"], d["k"], d["qubo"], d["method"]), []).append(d)
    rows = []
    for (n, k, qname, method), ds in groups.items():
        regs = np.array([d["regret"] for d in ds])
        jacs = np.array([d["jaccard"] for d in ds])
        same = (np.abs(regs) <= EXACT_TOL) & (jacs >= 1.0 - EXACT_TOL)
        rows.append(
            {
                "n": n,
                "k": k,
                "qubo": qname,
                "method": method,
                "slates": len(ds),
                "regret_mean": float(regs.mean()),
                "regret_median": float(np.median(regs)),
                "jaccard_mean": float(jacs.mean()),
                "matches_reference": int(same.sum()),
                "differs_from_reference": int((~same).sum()),
                "reference_kind": ds[0]["reference_kind"],
            }
        )
    return rows


# --------------------------------------------------------------------------- backtest


def select_portfolio(instance: PortfolioInstance, cfg: PipelineConfig, seed: int) -> Selection:
    """The configured selector applied to the objective-only model."""
    q = build_objective_qubo(instance)
    k = instance.k
    if cfg.selector == "exact":
        return brute_force_k_subsets(q, k, cfg.exact_budget)[0]
    if cfg.selector == "greedy":
        return greedy_construct(q, k, cfg.greedy_restarts, seed)
    samples = sample(replace(cfg.sampler, name="sa", seed=int(seed), k=k), q)
    return best_projected(project_reads(samples, q, q, k)).selection


def financial_report(returns: np.ndarray, cfg: PipelineConfig, seed: int) -> FinancialReport:
    t = int(returns.size)
    sr = sharpe(returns)
    lo, hi = bootstrap_ci(returns, cfg.bootstrap_draws, 0.95, seed)
    skew, kurt = return_moments(returns)
    psr, trl = psr_mintrl(sr, t, skew, kurt, cfg.benchmark_sr)
    return FinancialReport(sharpe=sr, ci_low=lo, ci_high=hi, psr=psr, min_trl=trl, t_obs=t, skew=skew, kurtosis=kurt)


def _equity_backtest(cfg: PipelineConfig, record: RunRecord):
    panel = load_panel(cfg)
    seed = cfg.seeds[0]
    for n, k in cfg.pairs:
        windows = rolling_instances(
            panel, k=k, lam=cfg.lam, penalty_a=cfg.penalty_a, window_days=cfg.estimation_days, n=n
        )
        picks = _map(lambda w: select_portfolio(w.instance, cfg, seed), windows, cfg.workers)
        series = []
        for j, (w, sel) in enumerate(zip(windows, picks)):
            daily = w.evaluation.returns[:, list(sel.support)].mean(axis=1)
            series.append(daily)
            base = {"case": "equity", "n": n, "k": k, "window": j, "date": w.rebalance_date.isoformat(),
                    "support": " ".join(w.instance.labels[i] for i in sel.support)}
            try:
                rep = financial_report(daily, cfg, seed)
            except ValueError as exc:
                record.warnings.append(f"window {j} ({w.rebalance_date}): {exc}")
                rep = FinancialReport(t_obs=int(daily.size))
            record.rows.append({**base, **_fin_fields(rep)})
        full = np.concatenate(series)
        rep = financial_report(full, cfg, seed)
        record.rows.append({"case": "equity", "n": n, "k": k, "window": "all", "date": "", "support": "",
                            **_fin_fields(rep)})


def _betting_backtest(cfg: PipelineConfig, record: RunRecord):
    matches = load_matches(cfg)
    seed = cfg.seeds[0]
    for n, k in cfg.pairs:
        slates = betting_slates(matches, n, k, cfg)
        settled = [s for s in slates if all(r is not None for r in s.results)]
        if not settled:
            raise DataError(f"no fully settled slates of size {n}")
        insts = [betting_instance(s, k, cfg) for s in settled]
        picks = _map(lambda inst: select_portfolio(inst, cfg, seed), insts, cfg.workers)
        all_p, all_y, rois = [], [], []
        for j, (slate, sel) in enumerate(zip(settled, picks)):
            r = roi(slate, sel, slate.results)
            p, y = pick_outcomes(slate, sel, slate.results)
            b, ll = brier_logloss(p, y)
            rois.append(r)
            all_p.append(p)
            all_y.append(y)
            labels = slate.labels()
            rep = FinancialReport(roi=r, brier=b, log_loss=ll, t_obs=sel.weight)
            record.rows.append({"case": "betting", "n": n, "k": k, "window": j,
                                "date": slate.matches[0].date.isoformat(),
                                "support": " ".join(labels[i] for i in sel.support), **_fin_fields(rep)})
        b, ll = brier_logloss(np.concatenate(all_p), np.concatenate(all_y))
        rep = FinancialReport(roi=float(np.mean(rois)), brier=b, log_loss=ll, t_obs=len(rois))
        record.rows.append({"case": "betting", "n": n, "k": k, "window": "all", "date": "", "support": "",
                            **_fin_fields(rep)})


def _fin_fields(rep: FinancialReport) -> dict:
    d = rep.to_dict()
    return {key: d[key] for key in BACKTEST_HEADER if key in d}


def backtest(cfg: PipelineConfig) -> RunRecord:
    """Rolling out-of-sample evaluation of the configured selector."""
    record = RunRecord("backtest", cfg.digest(), cfg.to_dict())
    if cfg.case == "equity":
        _equity_backtest(cfg, record)
    else:
        _betting_backtest(cfg, record)
    record.finished = _now()
    return record

