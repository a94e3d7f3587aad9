"""Steady-state statistics: batch-means confidence intervals and a growth test."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats as _st


@dataclass(frozen=True)
class Interval:
    mean: float
    half_width: float


def batch_means_ci(series, batches: int = 20, level: float = 0.95) -> Interval:
    """Mean of ``batches`` equal batches with a Student-t half-width.

    Leftover samples at the end that do not fill a batch are dropped.
    """
    x = np.asarray(series, dtype=float).ravel()
    if batches < 2:
        raise ValueError("need at least 2 batches")
    if x.size < 2 * batches:
        raise ValueError(f"series too short: {x.size} samples for {batches} batches")
    size = x.size // batches
    means = x[: size * batches].reshape(batches, size).mean(axis=1)
    return ci_from_batch_means(means, level)


def ci_from_batch_means(means, level: float = 0.95) -> Interval:
    means = np.asarray(means, dtype=float)
    if means.size < 2:
        raise ValueError("need at least 2 batch means")
    sd = means.std(ddof=1)
    t = _st.t.ppf(0.5 + level / 2.0, means.size - 1)
    return Interval(float(means.mean()), float(t * sd / np.sqrt(means.size)))


@dataclass(frozen=True)
class StabilityVerdict:
    stable: bool
    slope: float       # growth of the total backlog in cells per slot
    p_value: float     # one-sided test of a positive trend


def stability_probe(window_means, window_len: int = 1, threshold: float = 0.01,
                    alpha: float = 0.01) -> StabilityVerdict:
    """Least-squares trend of per-window mean backlog.

    Unstable iff the slope (per slot) exceeds ``threshold`` and the trend is
    significantly positive.
    """
    y = np.asarray(window_means, dtype=float)
    if y.size < 10:
        raise ValueError("need at least 10 windows")
    x = np.arange(y.size, dtype=float)
    if np.ptp(y) == 0:
        return StabilityVerdict(True, 0.0, 1.0)
    fit = _st.linregress(x, y)
    slope = float(fit.slope) / window_len
    if fit.stderr == 0:
        p = 0.0 if fit.slope > 0 else 1.0
    else:
        tstat = fit.slope / fit.stderr
        p = float(_st.t.sf(tstat, y.size - 2))
    return StabilityVerdict(not (slope > threshold and p < alpha), slope, p)
