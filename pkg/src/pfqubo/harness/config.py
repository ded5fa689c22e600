"""Sectioned ``key = value`` experiment configuration.

Example::

    [run]
    case = equity
    seeds = 0, 1, 2
    out = results

    [instance]
    n = 24
    k = 8
    lambda = 2.0
    penalty_a = 4.0

    [sparsify]
    families = threshold:edges=69; topk:k=1; mask:k=2; mask_residual:k=2,r=4

    [sampler]
    name = sa
    sweeps = 1000
    beta = 0.1, 10.0
    reads = 1000

Lists in ``n`` and ``k`` are paired element-wise; a single ``k`` applies to
every ``n``.  ``beta = auto`` derives the inverse-temperature range from
each model.
"""

from __future__ import annotations

import configparser
import hashlib
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

from pfqubo.errors import ConfigError
from pfqubo.samplers import DEFAULT_EXACT_BUDGET, AnnealSchedule, SamplerSpec
from pfqubo.sparsify import FAMILIES, SparsifierSpec

CASES = ("equity", "betting")
REFERENCE_KINDS = ("auto", "exact", "greedy")
SELECTORS = ("sa", "greedy", "exact")


@dataclass(frozen=True)
class PipelineConfig:
    case: str = "equity"
    n_values: tuple[int, ...] = (24,)
    k_values: tuple[int, ...] = (8,)
    lam: float = 1.0
    penalty_a: float = 4.0
    sparsifiers: tuple[SparsifierSpec, ...] = ()
    sampler: SamplerSpec = field(default_factory=SamplerSpec)
    seeds: tuple[int, ...] = (0,)
    out: Path = Path("results")
    workers: int = 1
    # data
    source: str = "synthetic"
    ff49_path: Path | None = None
    odds_paths: tuple[Path, ...] = ()
    synthetic_seed: int = 0
    synthetic_days: int = 1000
    synthetic_weeks: int = 30
    estimation_days: int = 252
    slate_window_days: int = 3
    slate_index: int = 0
    # reference
    reference: str = "auto"
    exact_budget: int = DEFAULT_EXACT_BUDGET
    greedy_restarts: int = 128
    # ablation
    projector_baselines: bool = True
    ablation_slates: int = 20
    random_trials: int = 100
    ablation_methods: tuple[str, ...] = ("sampler", "all_ones", "random", "greedy")
    ablation_qubos: tuple[str, ...] = ("settlement", "dense")
    # backtest
    selector: str = "sa"
    bootstrap_draws: int = 1000
    benchmark_sr: float = 0.0

    def __post_init__(self):
        if self.case not in CASES:
            raise ConfigError(f"case must be one of {CASES}, got {self.case!r}")
        if not self.seeds:
            raise ConfigError("seeds must not be empty")
        if not self.n_values:
            raise ConfigError("at least one universe size n is required")
        if len(self.k_values) not in (1, len(self.n_values)):
            raise ConfigError("k must be a single value or one per n")
        for n, k in self.pairs:
            if not 1 <= k <= n:
                raise ConfigError(f"k={k} outside [1, {n}]")
            if self.case == "betting" and n % 3:
                raise ConfigError(f"betting universe size {n} is not a multiple of 3")
        if not self.lam > 0:
            raise ConfigError("lambda must be > 0")
        if self.penalty_a < 0:
            raise ConfigError("penalty_a must be >= 0")
        if self.reference not in REFERENCE_KINDS:
            raise ConfigError(f"reference must be one of {REFERENCE_KINDS}")
        if self.selector not in SELECTORS:
            raise ConfigError(f"selector must be one of {SELECTORS}")
        if self.source not in ("synthetic", "files"):
            raise ConfigError("source must be 'synthetic' or 'files'")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        bad = set(self.ablation_methods) - {"sampler", "all_ones", "random", "greedy"}
        if bad:
            raise ConfigError(f"unknown ablation methods {sorted(bad)}")
        bad = set(self.ablation_qubos) - {"settlement", "dense", "objective", "settlement_objective"}
        if bad:
            raise ConfigError(f"unknown ablation qubos {sorted(bad)}")

    @property
    def pairs(self) -> list[tuple[int, int]]:
        ks = self.k_values * len(self.n_values) if len(self.k_values) == 1 else self.k_values
        return list(zip(self.n_values, ks))

    def check_inputs(self):
        """Verify referenced files exist and the output directory is writable."""
        if self.source == "files":
            paths = [self.ff49_path] if self.case == "equity" else list(self.odds_paths)
            if not paths or paths[0] is None:
                raise ConfigError(f"source = files but no {self.case} data path is configured")
            for p in paths:
                if not Path(p).is_file():
                    raise ConfigError(f"data file not found: {p}")
        try:
            Path(self.out).mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ConfigError(f"output directory {self.out} is not writable: {exc}") from exc

    def with_seed(self, seed: int) -> "PipelineConfig":
        return replace(self, seeds=(int(seed),))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["sparsifiers"] = [s.label for s in self.sparsifiers]
        d["out"] = str(self.out)
        d["ff49_path"] = str(self.ff49_path) if self.ff49_path else None
        d["odds_paths"] = [str(p) for p in self.odds_paths]
        return d

    def digest(self) -> str:
        """sha256 over the resolved settings and the bytes of every data file."""
        d = self.to_dict()
        d.pop("out")
        d.pop("workers")
        h = hashlib.sha256(json.dumps(d, sort_keys=True, default=str).encode())
        if self.source == "files":
            for p in [self.ff49_path, *self.odds_paths]:
                if p is not None and Path(p).is_file():
                    h.update(Path(p).read_bytes())
        return h.hexdigest()


def _ints(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(t) for t in text.replace(";", ",").split(",") if t.strip())
    except ValueError as exc:
        raise ConfigError(f"expected a comma-separated integer list, got {text!r}") from exc


def _words(text: str) -> tuple[str, ...]:
    return tuple(t.strip() for t in text.split(",") if t.strip())


def parse_sparsifiers(text: str) -> tuple[SparsifierSpec, ...]:
    """Parse ``family:key=value,key=value; family2:...``."""
    specs = []
    for chunk in text.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        family, _, args = chunk.partition(":")
        family = family.strip()
        if family not in FAMILIES:
            raise ConfigError(f"unknown sparsifier family {family!r}")
        kwargs: dict = {}
        for item in filter(None, (a.strip() for a in args.split(","))):
            key, eq, value = item.partition("=")
            key = key.strip()
            if not eq:
                raise ConfigError(f"sparsifier argument {item!r} is not key=value")
            if key not in ("tau", "k", "r", "edges"):
                raise ConfigError(f"unknown sparsifier argument {key!r}")
            try:
                kwargs[key] = float(value) if key == "tau" else int(value)
            except ValueError as exc:
                raise ConfigError(f"bad value for {key}: {value!r}") from exc
        try:
            specs.append(SparsifierSpec(family, **kwargs))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    return tuple(specs)


def _schedule(sec) -> AnnealSchedule:
    beta = sec.get("beta", "0.1, 10.0").strip()
    try:
        if beta == "auto":
            lo = hi = None
        else:
            lo, hi = (float(v) for v in beta.split(","))
        return AnnealSchedule(
            sweeps=sec.getint("sweeps", 1000), beta_start=lo, beta_end=hi, reads=sec.getint("reads", 1000)
        )
    except ValueError as exc:
        raise ConfigError(f"bad [sampler] schedule: {exc}") from exc


def load_config(path, *, seed: int | None = None, out: str | Path | None = None) -> PipelineConfig:
    """Read a config file; ``seed`` and ``out`` override the file's values.

    Data paths are relative to the config file, the output directory to the
    working directory.
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        cp.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    for name in ("run", "data", "instance", "sparsify", "sampler", "reference", "ablation", "backtest"):
        if not cp.has_section(name):
            cp.add_section(name)
    base = path.parent

    def resolve(p: str) -> Path:
        q = Path(p.strip())
        return q if q.is_absolute() else base / q

    run, data, inst = cp["run"], cp["data"], cp["instance"]
    smp, ref, abl, bt = cp["sampler"], cp["reference"], cp["ablation"], cp["backtest"]
    try:
        seeds = _ints(run.get("seeds", "0"))
        sampler = SamplerSpec(
            name=smp.get("name", "sa"),
            restarts=smp.getint("restarts", 128),
            schedule=_schedule(smp),
            budget=ref.getint("exact_budget", DEFAULT_EXACT_BUDGET),
            workers=smp.getint("workers", 1),
        )
        cfg = PipelineConfig(
            case=run.get("case", "equity"),
            n_values=_ints(inst.get("n", "24")),
            k_values=_ints(inst.get("k", "8")),
            lam=inst.getfloat("lambda", 1.0),
            penalty_a=inst.getfloat("penalty_a", 4.0),
            sparsifiers=parse_sparsifiers(cp["sparsify"].get("families", "")),
            sampler=sampler,
            seeds=(seed,) if seed is not None else seeds,
            out=Path(out) if out is not None else Path(run.get("out", "results")),
            workers=run.getint("workers", 1),
            source=data.get("source", "synthetic"),
            ff49_path=resolve(data["ff49"]) if data.get("ff49") else None,
            odds_paths=tuple(resolve(p) for p in _words(data.get("odds", ""))),
            synthetic_seed=data.getint("synthetic_seed", 0),
            synthetic_days=data.getint("synthetic_days", 1000),
            synthetic_weeks=data.getint("synthetic_weeks", 30),
            estimation_days=data.getint("estimation_days", 252),
            slate_window_days=data.getint("slate_window_days", 3),
            slate_index=data.getint("slate_index", 0),
            reference=ref.get("kind", "auto"),
            exact_budget=ref.getint("exact_budget", DEFAULT_EXACT_BUDGET),
            greedy_restarts=ref.getint("greedy_restarts", 128),
            projector_baselines=abl.getboolean("projector_baselines", True),
            ablation_slates=abl.getint("slates", 20),
            random_trials=abl.getint("random_trials", 100),
            ablation_methods=_words(abl.get("methods", "sampler, all_ones, random, greedy")),
            ablation_qubos=_words(abl.get("qubos", "settlement, dense")),
            selector=bt.get("selector", "sa"),
            bootstrap_draws=bt.getint("bootstrap_draws", 1000),
            benchmark_sr=bt.getfloat("benchmark_sr", 0.0),
        )
    except ConfigError:
        raise
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return cfg
