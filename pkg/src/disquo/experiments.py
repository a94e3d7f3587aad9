"""Experiment runner: replications, aggregation and result files."""
from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .engine import ARRIVALS, SCHEDULERS, EngineSpec, simulate
from .disquo import QMAX_MODES
from .hamiltonian import H_MODES
from .stats import ci_from_batch_means, stability_probe
from .traffic import PATTERNS, admissibility, make_rates

log = logging.getLogger(__name__)

CSV_HEADER = ("scheduler", "pattern", "n", "k", "sigma", "omega", "mean_delay", "ci95",
              "throughput", "stable", "slope", "slots", "seed")
SWEEP_PARAMS = ("sigma", "omega", "buffer_cap", "n_ports")
MIN_BATCHES = 20
_MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def replication_seed(base: int, index: int) -> int:
    """Child seed for one replication; independent of how many run in total."""
    return splitmix64((splitmix64(base & _MASK64) + index) & _MASK64)


@dataclass
class ExperimentConfig:
    n_ports: int = 16
    buffer_cap: int = 1
    schedulers: list = field(default_factory=lambda: ["disquo-distributed"])
    pattern: str = "uniform"
    sigmas: list = field(default_factory=lambda: [0.8])
    omega: float | None = None
    arrival: str = "bernoulli"
    alpha: float = 1.7
    l_max: int = 1000
    h_mode: str = "hamiltonian"
    qmax_mode: str = "conjecture"
    epsilon: float | None = None      # None: margin from the rate matrix
    seed: int = 1
    slots: int = 1_000_000
    warmup: int = 100_000
    replications: int = 10
    batches: int = MIN_BATCHES
    windows: int = 100
    stability_threshold: float = 0.01
    workers: int = 1

    def __post_init__(self):
        if isinstance(self.schedulers, str):
            self.schedulers = [self.schedulers]
        self.schedulers = list(self.schedulers)
        self.sigmas = [float(s) for s in np.atleast_1d(self.sigmas)]
        for s in self.schedulers:
            if s not in SCHEDULERS:
                raise ValueError(f"unknown scheduler {s!r}; expected one of {SCHEDULERS}")
        if self.pattern not in PATTERNS:
            raise ValueError(f"unknown pattern {self.pattern!r}")
        if self.arrival not in ARRIVALS:
            raise ValueError(f"unknown arrival process {self.arrival!r}")
        if self.h_mode not in H_MODES:
            raise ValueError(f"h_mode must be one of {H_MODES}")
        if self.qmax_mode not in QMAX_MODES:
            raise ValueError(f"qmax_mode must be one of {QMAX_MODES}")
        if self.n_ports < 1 or self.buffer_cap < 1:
            raise ValueError("n_ports and buffer_cap must be >= 1")
        if not self.slots > self.warmup >= 0:
            raise ValueError("need slots > warmup >= 0")
        if self.batches < MIN_BATCHES:
            raise ValueError(f"batches must be >= {MIN_BATCHES}")
        if self.windows < 10:
            raise ValueError("windows must be >= 10")
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if any(s < 0 for s in self.sigmas):
            raise ValueError("sigma values must be >= 0")
        if self.pattern == "hot-spot" and self.omega is None:
            raise ValueError("hot-spot pattern needs omega")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        if "scheduler" in d:
            d["schedulers"] = d.pop("scheduler")
        if "sigma" in d:
            d["sigmas"] = d.pop("sigma")
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def rates(self, sigma: float) -> np.ndarray:
        if sigma == 0:
            return np.zeros((self.n_ports, self.n_ports))
        omega = self.omega if self.pattern == "hot-spot" else None
        return make_rates(self.pattern, self.n_ports, sigma, omega)


@dataclass
class RunStats:
    scheduler: str
    pattern: str
    n: int
    k: int
    sigma: float
    omega: float | None
    mean_delay: float | None      # None when unstable or no departures
    ci95: float | None
    throughput: float
    stable: bool
    slope: float
    slots: int
    seed: int
    replications: int
    delay_defined: bool
    rep_slopes: list
    rep_stable: list
    window_backlog: list

    def csv_row(self) -> list[str]:
        def num(x):
            return "" if x is None else format(x, ".10g")
        return [self.scheduler, self.pattern, str(self.n), str(self.k), num(self.sigma),
                num(self.omega), num(self.mean_delay), num(self.ci95), num(self.throughput),
                "1" if self.stable else "0", num(self.slope), str(self.slots), str(self.seed)]


def _scheduler_for(config: ExperimentConfig, name: str) -> str:
    if name == "disquo-distributed" and config.buffer_cap > 1:
        log.warning("distributed DISQUO is defined for K=1; using disquo-central for K=%d",
                    config.buffer_cap)
        return "disquo-central"
    return name


def _epsilon(config: ExperimentConfig, rates: np.ndarray) -> float:
    if config.epsilon is not None:
        return config.epsilon
    adm = admissibility(rates)
    return adm.epsilon if adm.admissible and adm.epsilon > 0 else 0.05


def build_specs(config: ExperimentConfig, scheduler: str, sigma: float, record: bool = False):
    rates = config.rates(sigma)
    eps = _epsilon(config, rates)
    return [
        EngineSpec(
            n=config.n_ports, scheduler=scheduler, rates=rates, arrival=config.arrival,
            alpha=config.alpha, l_max=config.l_max, buffer_cap=config.buffer_cap,
            h_mode=config.h_mode, qmax_mode=config.qmax_mode, epsilon=eps,
            slots=config.slots, warmup=config.warmup, batches=config.batches,
            windows=config.windows, seed=replication_seed(config.seed, r), record=record,
        )
        for r in range(config.replications)
    ]


def _run_all(specs, workers: int):
    if workers > 1 and len(specs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(simulate, specs))
    return [simulate(s) for s in specs]


def aggregate(config: ExperimentConfig, scheduler: str, sigma: float, results) -> RunStats:
    measured = config.slots - config.warmup
    win_len = measured // config.windows
    verdicts = [stability_probe(r.window_backlog, win_len, config.stability_threshold)
                for r in results]
    mean_windows = np.mean([r.window_backlog for r in results], axis=0)
    # row verdict on the replication average; single runs wander around a plateau
    pooled = stability_probe(mean_windows, win_len, config.stability_threshold)
    stable, slope = pooled.stable, pooled.slope
    departures = sum(r.departures for r in results)
    throughput = departures / (measured * config.n_ports * len(results))
    means = np.concatenate([r.batch_delay_means() for r in results])
    delay_defined = departures > 0 and means.size >= 2
    mean_delay = ci = None
    if stable and delay_defined:
        # every batch weighs the same; pooled over replications
        iv = ci_from_batch_means(means)
        mean_delay, ci = iv.mean, iv.half_width
    return RunStats(
        scheduler=scheduler, pattern=config.pattern, n=config.n_ports, k=config.buffer_cap,
        sigma=sigma, omega=config.omega if config.pattern == "hot-spot" else None,
        mean_delay=mean_delay, ci95=ci, throughput=throughput, stable=stable, slope=slope,
        slots=config.slots, seed=config.seed, replications=len(results),
        delay_defined=delay_defined, rep_slopes=[v.slope for v in verdicts],
        rep_stable=[v.stable for v in verdicts],
        window_backlog=mean_windows.tolist(),
    )


def run_experiment(config: ExperimentConfig, out_dir=None, raw: bool = False,
                   append: bool = False) -> list[RunStats]:
    """Run every (sigma, scheduler) cell of ``config``.

    With ``out_dir`` set, writes ``results.csv`` and, when ``raw`` is true,
    per-slot samples to ``raw.jsonl``.
    """
    out = None
    if out_dir is not None:
        out = Path(out_dir)
        if not out.is_dir():
            raise FileNotFoundError(f"output directory {out} does not exist")
    rows = []
    raw_fh = open(out / "raw.jsonl", "a" if append else "w") if (out and raw) else None
    try:
        for sigma in config.sigmas:
            for name in config.schedulers:
                scheduler = _scheduler_for(config, name)
                specs = build_specs(config, scheduler, sigma, record=raw)
                results = _run_all(specs, config.workers)
                stats = aggregate(config, scheduler, sigma, results)
                log.info("%s sigma=%g delay=%s stable=%s", scheduler, sigma,
                         stats.mean_delay, stats.stable)
                rows.append(stats)
                if raw_fh is not None:
                    _write_raw(raw_fh, config, scheduler, sigma, specs, results)
    finally:
        if raw_fh is not None:
            raw_fh.close()
    if out is not None:
        write_csv(out / "results.csv", rows, append=append)
    return rows


def _write_raw(fh, config, scheduler, sigma, specs, results) -> None:
    for rep, (spec, res) in enumerate(zip(specs, results)):
        tr = res.trace
        head = {"scheduler": scheduler, "pattern": config.pattern, "n": config.n_ports,
                "k": config.buffer_cap, "sigma": sigma, "replication": rep, "seed": spec.seed}
        for slot in range(spec.slots):
            rec = dict(head, slot=slot, backlog=int(tr["backlog"][slot]),
                       arrivals=int(tr["arrivals"][slot]),
                       departures=int(tr["departures"][slot]))
            fh.write(json.dumps(rec, separators=(",", ":")) + "\n")


def write_csv(path, rows, append: bool = False) -> None:
    path = Path(path)
    new = not (append and path.exists())
    with open(path, "w" if new else "a", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if new:
            w.writerow(CSV_HEADER)
        for r in rows:
            w.writerow(r.csv_row())


def sweep(config: ExperimentConfig, param: str, values, out_dir=None, raw: bool = False):
    """Re-run ``config`` once per value of ``param``; rows land in one CSV."""
    if param not in SWEEP_PARAMS:
        raise ValueError(f"param must be one of {SWEEP_PARAMS}")
    if param == "sigma":
        cfg = ExperimentConfig(**{**asdict(config), "sigmas": list(values)})
        return run_experiment(cfg, out_dir, raw)
    rows = []
    for k, v in enumerate(values):
        v = float(v) if param == "omega" else int(v)
        cfg = ExperimentConfig(**{**asdict(config), param: v})
        rows += run_experiment(cfg, out_dir, raw, append=k > 0)
    return rows

