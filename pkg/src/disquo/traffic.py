"""Rate matrices, admissibility and cell arrival processes.

Two arrival processes are provided:

* i.i.d. Bernoulli, one independent draw per (input, output) pair per slot;
* bursty on/off, where each input alternates a geometric idle gap with a
  burst whose length follows a truncated power law and whose cells all go
  to one destination.

Both consume uniforms from a :class:`numpy.random.Generator` in a fixed
order so that the compiled engine can replay the exact same sample path.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

PATTERNS = ("uniform", "lin-diagonal", "hot-spot")


@dataclass(frozen=True)
class Admissibility:
    admissible: bool
    epsilon: float | None  # 1 - max load, only when admissible
    max_load: float


def make_rates(pattern: str, n: int, sigma: float, omega: float | None = None) -> np.ndarray:
    """Build the N x N arrival-rate matrix for a named traffic pattern.

    Parameters
    ----------
    pattern : {"uniform", "lin-diagonal", "hot-spot"}
    n : int
        Number of ports.
    sigma : float
        Per-input offered load. Values >= 1 are allowed; the result is then
        simply inadmissible.
    omega : float, optional
        Hot-spot factor, required for (and only for) ``"hot-spot"``.

    Returns
    -------
    numpy.ndarray
        Rates in cells/slot. Every row sums to ``sigma``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if pattern not in PATTERNS:
        raise ValueError(f"unknown pattern {pattern!r}; expected one of {PATTERNS}")
    if (pattern == "hot-spot") != (omega is not None):
        raise ValueError("omega is required for hot-spot traffic and only for it")

    if pattern == "uniform":
        return np.full((n, n), sigma / n)

    if pattern == "lin-diagonal":
        lam = np.empty((n, n))
        offsets = np.arange(n)
        # rate at destination (i + j) mod n decreases linearly in j
        step_rates = 2.0 * sigma * (n - offsets) / (n * (n + 1))
        for i in range(n):
            lam[i, (i + offsets) % n] = step_rates
        return lam

    if not 0.0 <= omega <= 1.0:
        raise ValueError("omega must lie in [0, 1]")
    if n == 1:
        return np.array([[sigma]])
    lam = np.full((n, n), (1.0 - omega) * sigma / (n - 1))
    np.fill_diagonal(lam, omega * sigma)
    return lam


def admissibility(lam: np.ndarray) -> Admissibility:
    lam = np.asarray(lam, dtype=float)
    load = max(lam.sum(axis=1).max(), lam.sum(axis=0).max())
    if load < 1.0:
        return Admissibility(True, 1.0 - load, load)
    return Admissibility(False, None, load)


def bernoulli_arrivals(lam: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One slot of independent Bernoulli arrivals, drawn in row-major order."""
    lam = np.asarray(lam, dtype=float)
    u = rng.random(lam.size).reshape(lam.shape)
    return (u < lam).astype(np.int64)


@lru_cache(maxsize=32)
def _pareto_cdf(alpha: float, l_max: int) -> np.ndarray:
    lengths = np.arange(1, l_max + 1, dtype=float)
    mass = lengths ** -alpha
    cdf = np.cumsum(mass) / mass.sum()
    cdf[-1] = 1.0
    cdf.setflags(write=False)
    return cdf


def pareto_cdf(alpha: float, l_max: int) -> np.ndarray:
    """Cumulative table of P(l) = c / l**alpha on {1, ..., l_max}."""
    if alpha <= 1:
        raise ValueError("alpha must exceed 1")
    if l_max < 1:
        raise ValueError("l_max must be >= 1")
    return _pareto_cdf(float(alpha), int(l_max))


def exact_burst_mean(alpha: float, l_max: int) -> float:
    if alpha <= 1:
        raise ValueError("alpha must exceed 1")
    if l_max < 1:
        raise ValueError("l_max must be >= 1")
    num = math.fsum(l ** (1.0 - alpha) for l in range(1, l_max + 1))
    den = math.fsum(l ** -alpha for l in range(1, l_max + 1))
    return num / den


def _invert_cdf(cdf: np.ndarray, u: float) -> int:
    # index of the first entry strictly greater than u
    return int(np.searchsorted(cdf, u, side="right"))


def pareto_burst(alpha: float, l_max: int, rng: np.random.Generator, size=None):
    """Draw burst lengths by inverse CDF over the discrete table."""
    cdf = pareto_cdf(alpha, l_max)
    if size is None:
        return min(_invert_cdf(cdf, rng.random()), l_max - 1) + 1
    idx = np.searchsorted(cdf, rng.random(size), side="right")
    return np.minimum(idx, l_max - 1) + 1


def geometric_gap(u: float, mean: float) -> int:
    """Idle gap on {0, 1, ...} with the given mean, by inverse CDF."""
    if mean <= 0.0:
        return 0
    q = mean / (1.0 + mean)
    return int(math.floor(math.log1p(-u) / math.log(q)))


def row_cdfs(lam: np.ndarray) -> np.ndarray:
    """Per-input destination CDFs proportional to the rate rows.

    Rows with zero load get an all-ones CDF; they are never sampled.
    """
    lam = np.asarray(lam, dtype=float)
    out = np.ones_like(lam)
    for i, row in enumerate(lam):
        total = row.sum()
        if total <= 0:
            continue
        cdf = np.cumsum(row) / total
        last = int(np.flatnonzero(row > 0)[-1])
        cdf[last:] = 1.0
        out[i] = cdf
    return out


class BernoulliSource:
    """i.i.d. Bernoulli arrivals for a fixed rate matrix."""

    kind = "bernoulli"

    def __init__(self, lam: np.ndarray):
        self.lam = np.asarray(lam, dtype=float)
        if (self.lam < 0).any() or (self.lam > 1).any():
            raise ValueError("Bernoulli rates must lie in [0, 1]")
        self.n = self.lam.shape[0]

    def arrivals(self, rng: np.random.Generator) -> np.ndarray:
        return bernoulli_arrivals(self.lam, rng)


class BurstSource:
    """Per-input on/off bursty source.

    Each cycle is an idle gap (geometric, mean ``L (1 - s) / s`` where ``L`` is
    the exact burst mean and ``s`` the input's load) followed by a burst of
    truncated-Pareto length sent one cell per slot to a destination drawn from
    the normalized rate row. Long-run load per input is therefore ``s``.

    A fresh cycle consumes three uniforms, in order: gap, length, destination.
    """

    kind = "bursty"

    def __init__(self, lam: np.ndarray, alpha: float = 1.7, l_max: int = 1000):
        self.lam = np.asarray(lam, dtype=float)
        self.n = self.lam.shape[0]
        self.alpha = float(alpha)
        self.l_max = int(l_max)
        self.cdf = pareto_cdf(alpha, l_max)
        self.dest_cdf = row_cdfs(self.lam)
        self.load = self.lam.sum(axis=1)
        burst_mean = exact_burst_mean(alpha, l_max)
        self.off_mean = np.where(
            self.load > 0,
            burst_mean * (1.0 - np.minimum(self.load, 1.0)) / np.maximum(self.load, 1e-300),
            0.0,
        )
        self.on_left = np.zeros(self.n, dtype=np.int64)
        self.off_left = np.zeros(self.n, dtype=np.int64)
        self.dest = np.zeros(self.n, dtype=np.int64)

    def arrivals(self, rng: np.random.Generator) -> np.ndarray:
        out = np.zeros((self.n, self.n), dtype=np.int64)
        for i in range(self.n):
            if self.load[i] <= 0:
                continue
            if self.on_left[i] == 0 and self.off_left[i] == 0:
                self.off_left[i] = geometric_gap(rng.random(), self.off_mean[i])
                self.on_left[i] = min(_invert_cdf(self.cdf, rng.random()), self.l_max - 1) + 1
                self.dest[i] = _invert_cdf(self.dest_cdf[i], rng.random())
            if self.off_left[i] > 0:
                self.off_left[i] -= 1
            else:
                out[i, self.dest[i]] = 1
                self.on_left[i] -= 1
        return out


def make_source(lam: np.ndarray, arrival: str = "bernoulli", alpha: float = 1.7, l_max: int = 1000):
    if arrival == "bernoulli":
        return BernoulliSource(lam)
    if arrival == "bursty":
        return BurstSource(lam, alpha, l_max)
    raise ValueError(f"unknown arrival process {arrival!r}")
