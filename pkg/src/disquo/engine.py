"""Simulation entry point with a compiled fast path and a pure-Python fallback.

Both backends consume the same three random streams (traffic, coins, and
the shared permutation stream) in the same order, so for a given
:class:`EngineSpec` they produce identical results.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .disquo import QMAX_MODES, WeightConfig
from .hamiltonian import H_MODES

SCHEDULERS = ("disquo-distributed", "disquo-central", "rr-rr", "lqf-rr", "mwm", "oq")
ARRIVALS = ("bernoulli", "bursty")
DIVERGENCE_KINDS = ("unprobed-busy-output", "silent-activation", "inherited")

try:  # pragma: no cover - depends on the build
    if os.environ.get("DISQUO_PURE_PYTHON"):
        raise ImportError("compiled kernel disabled by DISQUO_PURE_PYTHON")
    from . import _kernel
except ImportError:  # pragma: no cover
    _kernel = None

BACKEND = "compiled" if _kernel is not None else "python"


@dataclass
class EngineSpec:
    n: int
    scheduler: str
    rates: np.ndarray
    arrival: str = "bernoulli"
    alpha: float = 1.7
    l_max: int = 1000
    buffer_cap: int = 1
    h_mode: str = "hamiltonian"
    qmax_mode: str = "conjecture"
    epsilon: float = 0.05
    slots: int = 10_000
    warmup: int = 0
    batches: int = 20
    windows: int = 100
    seed: int = 0
    prefill: int = 0          # cells per VOQ at slot 0, stamped with slot -1
    shadow: bool = False      # lockstep centralized chain (distributed only)
    record: bool = False      # keep per-slot traces

    def __post_init__(self):
        self.rates = np.ascontiguousarray(self.rates, dtype=float)
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.rates.shape != (self.n, self.n):
            raise ValueError(f"rates must be {self.n}x{self.n}, got {self.rates.shape}")
        if self.scheduler not in SCHEDULERS:
            raise ValueError(f"scheduler must be one of {SCHEDULERS}")
        if self.arrival not in ARRIVALS:
            raise ValueError(f"arrival must be one of {ARRIVALS}")
        if self.h_mode not in H_MODES:
            raise ValueError(f"h_mode must be one of {H_MODES}")
        if self.qmax_mode not in QMAX_MODES:
            raise ValueError(f"qmax_mode must be one of {QMAX_MODES}")
        if self.buffer_cap < 1:
            raise ValueError("buffer_cap must be >= 1")
        if self.scheduler == "disquo-distributed" and self.buffer_cap != 1:
            raise ValueError("the distributed scheduler needs buffer_cap = 1; "
                             "use disquo-central for larger buffers")
        if not self.slots > self.warmup >= 0:
            raise ValueError("need slots > warmup >= 0")
        measured = self.slots - self.warmup
        if self.batches < 1 or self.windows < 1:
            raise ValueError("batches and windows must be positive")
        if measured < max(self.batches, self.windows):
            raise ValueError("measured slots must cover every batch and window")
        if self.prefill < 0:
            raise ValueError("prefill must be >= 0")
        if self.shadow and self.scheduler != "disquo-distributed":
            raise ValueError("shadow tracking only applies to disquo-distributed")
        if self.arrival == "bernoulli" and ((self.rates < 0) | (self.rates > 1)).any():
            raise ValueError("Bernoulli rates must lie in [0, 1]")

    @property
    def measured(self) -> int:
        return self.slots - self.warmup

    @property
    def weight_config(self) -> WeightConfig:
        return WeightConfig(epsilon=self.epsilon, qmax_mode=self.qmax_mode)

    def generators(self):
        """Traffic, coin and permutation generators derived from ``seed``."""
        return tuple(np.random.Generator(np.random.PCG64(s))
                     for s in np.random.SeedSequence(self.seed).spawn(3))


@dataclass
class EngineResult:
    n: int
    measured: int
    arrivals: int
    departures: int
    delay_sum: np.ndarray
    delay_count: np.ndarray
    window_backlog: np.ndarray
    total_arrivals: int
    total_departures: int
    prefilled: int
    final_backlog: int
    final_queues: np.ndarray
    final_xbuf: np.ndarray
    final_schedule: np.ndarray
    divergences: dict = field(default_factory=dict)
    unclassified: int = 0
    mismatch_slots: int = 0
    first_mismatch: int = -1
    trace: dict | None = None
    backend: str = "python"

    @property
    def conserved(self) -> bool:
        return self.prefilled + self.total_arrivals == self.total_departures + self.final_backlog

    @property
    def throughput(self) -> float:
        return self.departures / (self.measured * self.n)

    @property
    def mean_delay(self) -> float:
        c = int(self.delay_count.sum())
        return float(self.delay_sum.sum()) / c if c else float("nan")

    def batch_delay_means(self) -> np.ndarray:
        ok = self.delay_count > 0
        return self.delay_sum[ok] / self.delay_count[ok]

    def same_as(self, other: "EngineResult") -> bool:
        """Field-by-field equality, ignoring which backend produced the result."""
        keys = ("arrivals", "departures", "total_arrivals", "total_departures", "prefilled",
                "final_backlog", "divergences", "unclassified", "mismatch_slots",
                "first_mismatch")
        arrays = ("delay_sum", "delay_count", "window_backlog", "final_queues",
                  "final_xbuf", "final_schedule")
        if any(getattr(self, k) != getattr(other, k) for k in keys):
            return False
        if any(not np.array_equal(getattr(self, k), getattr(other, k)) for k in arrays):
            return False
        if (self.trace is None) != (other.trace is None):
            return False
        return self.trace is None or all(
            np.array_equal(self.trace[k], other.trace[k]) for k in self.trace)


def simulate(spec: EngineSpec, backend: str | None = None) -> EngineResult:
    """Run one replication.

    ``backend`` is ``"compiled"``, ``"python"`` or ``None`` for the fastest
    available. The max-weight matching scheduler always runs in Python.
    """
    backend = backend or BACKEND
    if backend not in ("compiled", "python"):
        raise ValueError("backend must be 'compiled' or 'python'")
    if backend == "compiled" and _kernel is None:
        raise RuntimeError("compiled kernel is not available in this installation")
    if backend == "python" or spec.scheduler == "mwm":
        from ._pyengine import simulate as run
        return run(spec)
    return _run_compiled(spec)


def _run_compiled(spec: EngineSpec) -> EngineResult:
    from .traffic import BurstSource, pareto_cdf, row_cdfs

    if spec.arrival == "bursty":
        src = BurstSource(spec.rates, spec.alpha, spec.l_max)
        pcdf, dcdf, off_mean = src.cdf.copy(), src.dest_cdf, src.off_mean
    else:
        pcdf = np.ones(1)
        dcdf = row_cdfs(spec.rates)
        off_mean = np.zeros(spec.n)
    g_traffic, g_coins, g_h = spec.generators()
    out = _kernel.run(
        spec.n, spec.buffer_cap, SCHEDULERS.index(spec.scheduler),
        ARRIVALS.index(spec.arrival), spec.rates, np.ascontiguousarray(pcdf),
        np.ascontiguousarray(dcdf), np.ascontiguousarray(off_mean, dtype=float),
        spec.l_max, H_MODES.index(spec.h_mode), QMAX_MODES.index(spec.qmax_mode),
        spec.epsilon, spec.slots, spec.warmup, spec.batches, spec.windows, spec.prefill,
        spec.shadow, spec.record, g_traffic, g_coins, g_h,
    )
    div = out.pop("divergences")
    divergences = {k: int(div[i]) for i, k in enumerate(DIVERGENCE_KINDS) if div[i]}
    return EngineResult(n=spec.n, measured=spec.measured, divergences=divergences,
                        backend="compiled", **out)
