"""Queue weights and the centralized DISQUO schedule update.

The schedule ``X`` is stored as an ``(N, N)`` 0/1 integer matrix. A
permutation ``H`` is an integer vector with ``H[i]`` the output paired with
input ``i``. ``coins[i]`` is the uniform draw used by pair ``(i, H[i])``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .switch import RoundRobinPolicy, derive_port_schedules

QMAX_MODES = ("conjecture", "exact", "broadcast")
_E = math.e


class WeightValues(NamedTuple):
    f: float
    g: float
    f_prime: float


def g(x):
    """Slowly growing damping term, ``log(e + log(1 + x))``; always >= 1."""
    return np.log(_E + np.log1p(x))


def f(x):
    return np.log1p(x) / g(x)


def f_prime(x):
    x = np.asarray(x, dtype=float)
    lg = np.log1p(x)
    gx = np.log(_E + lg)
    g_prime = 1.0 / ((_E + lg) * (1.0 + x))
    return 1.0 / ((1.0 + x) * gx) - lg * g_prime / gx**2


def weight_functions(x) -> WeightValues:
    if np.any(np.asarray(x) < 0):
        raise ValueError("weight functions are defined for x >= 0")
    return WeightValues(f(x), g(x), f_prime(x))


def f_scalar(x: float) -> float:
    # scalar path through libm; the compiled engine evaluates the same expression
    lg = math.log1p(x)
    return lg / math.log(_E + lg)


def f_inverse(y: float, rtol: float = 1e-10) -> float:
    """Solve ``f(x) = y`` for ``x >= 0`` by bisection with a doubling bracket."""
    if y <= 0.0:
        return 0.0
    lo, hi = 0.0, 1.0
    while f_scalar(hi) < y:
        lo, hi = hi, hi * 2.0
    for _ in range(400):
        if hi - lo <= rtol * hi:
            break
        mid = 0.5 * (lo + hi)
        if f_scalar(mid) < y:
            lo = mid
        else:
            hi = mid
    return hi


def effective_queue(q_ij, q_max: float, epsilon: float, n: int, mode: str = "exact"):
    """Queue length with the global floor ``f^-1(eps / (2 N^2) * f(q_max))`` applied.

    In ``"conjecture"`` mode the floor is dropped and ``q_ij`` is returned as is.
    """
    if mode == "conjecture":
        return q_ij
    floor = f_inverse(epsilon / (2.0 * n * n) * f_scalar(float(q_max)))
    return np.maximum(floor, q_ij)


def activation_probability(w):
    """Logistic ``e^W / (1 + e^W)``, evaluated without overflow."""
    w = np.asarray(w, dtype=float)
    out = np.empty_like(w)
    pos = w >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-w[pos]))
    ew = np.exp(w[~pos])
    out[~pos] = ew / (1.0 + ew)
    return out if out.ndim else float(out)


def logistic_scalar(w: float) -> float:
    if w >= 0:
        return 1.0 / (1.0 + math.exp(-w))
    ew = math.exp(w)
    return ew / (1.0 + ew)


def is_permutation(h) -> bool:
    h = np.asarray(h)
    return h.ndim >= 1 and bool((np.sort(h, axis=-1) == np.arange(h.shape[-1])).all())


def check_schedule(x: np.ndarray) -> None:
    x = np.asarray(x)
    if not np.isin(x, (0, 1)).all():
        raise ValueError("schedule entries must be 0 or 1")
    if (x.sum(axis=-1) > 1).any() or (x.sum(axis=-2) > 1).any():
        raise ValueError("schedule has a row or column with more than one active pair")


def basic_update(x_prev, h, weights, coins) -> np.ndarray:
    """One step of the Basic DISQUO rule.

    Works on a single schedule or on a batch: ``x_prev`` of shape
    ``(..., N, N)``, ``h`` and ``coins`` of shape ``(..., N)``, ``weights`` of
    shape ``(N, N)`` or ``(..., N, N)``. Pair ``(i, H[i])`` turns (or stays) on
    iff it was on, or it and all its neighbours were off, and
    ``coins[i] < p_ij``. All other pairs keep their previous value.
    """
    x_prev = np.asarray(x_prev)
    h = np.asarray(h)
    coins = np.asarray(coins, dtype=float)
    if not is_permutation(h):
        raise ValueError("H must be a permutation of range(N)")
    check_schedule(x_prev)

    w = np.broadcast_to(np.asarray(weights, dtype=float), x_prev.shape)
    w_h = np.take_along_axis(w, h[..., None], axis=-1)[..., 0]
    p = activation_probability(w_h)

    x_h = np.take_along_axis(x_prev, h[..., None], axis=-1)[..., 0]
    row_busy = x_prev.sum(axis=-1)                  # input i already matched
    col_busy = x_prev.sum(axis=-2)                  # output j already matched
    col_busy_h = np.take_along_axis(col_busy, h, axis=-1)
    # a pair that is on has no active neighbours; an off pair is free iff its
    # row and column are both empty
    updatable = (x_h == 1) | ((row_busy == 0) & (col_busy_h == 0))
    new_h = (updatable & (coins < p)).astype(x_prev.dtype)

    x_next = x_prev.copy()
    np.put_along_axis(x_next, h[..., None], new_h[..., None], axis=-1)
    return x_next


@dataclass
class QmaxEstimator:
    """Round-robin broadcast estimate of the largest queue.

    Linecard ``slot mod N`` reports its local maximum each slot; the estimate
    is the largest of the latest reports. Until every linecard has reported
    the estimator is in warm-up.
    """

    n: int
    last_reported: np.ndarray = field(init=False)
    reported: np.ndarray = field(init=False)

    def __post_init__(self):
        self.last_reported = np.zeros(self.n, dtype=np.int64)
        self.reported = np.zeros(self.n, dtype=bool)

    @property
    def warmup(self) -> bool:
        return not self.reported.all()

    @property
    def estimate(self) -> int:
        return int(self.last_reported.max()) if self.reported.any() else 0

    def report(self, slot: int, local_maxima) -> int:
        i = slot % self.n
        self.last_reported[i] = int(local_maxima[i])
        self.reported[i] = True
        return self.estimate


def qmax_estimate(estimator: QmaxEstimator, slot: int, local_maxima) -> int:
    return estimator.report(slot, local_maxima)


@dataclass
class WeightConfig:
    epsilon: float = 0.05
    qmax_mode: str = "conjecture"
    g_choice: str = "log-e-log"

    def __post_init__(self):
        if self.qmax_mode not in QMAX_MODES:
            raise ValueError(f"qmax_mode must be one of {QMAX_MODES}")
        if self.g_choice != "log-e-log":
            raise ValueError("only g(x) = log(e + log(1 + x)) is supported")
        if self.qmax_mode != "conjecture" and not 0.0 < self.epsilon < 1.0:
            raise ValueError("epsilon must lie in (0, 1)")

    def floor(self, q_max: float, n: int) -> float:
        if self.qmax_mode == "conjecture":
            return 0.0
        return f_inverse(self.epsilon / (2.0 * n * n) * f_scalar(float(q_max)))

    def pair_weight(self, q: float, floor: float) -> float:
        return f_scalar(max(floor, float(q)))

    def weights(self, queues: np.ndarray, q_max: float | None = None) -> np.ndarray:
        queues = np.asarray(queues, dtype=float)
        n = queues.shape[0]
        if q_max is None:
            q_max = queues.max()
        return f(np.maximum(self.floor(q_max, n), queues))


class SlotWeights:
    """Per-slot weights of the pairs named by H(n).

    Holds the Q_max estimator in broadcast mode and caches the floor term,
    which only changes when the (estimated) largest queue does.
    """

    def __init__(self, n: int, config: WeightConfig | None = None):
        self.n = n
        self.config = config or WeightConfig()
        self.estimator = QmaxEstimator(n) if self.config.qmax_mode == "broadcast" else None
        self._floor_key = None
        self._floor = 0.0

    def q_max(self, queues: np.ndarray, slot: int) -> int:
        mode = self.config.qmax_mode
        if mode == "conjecture":
            return 0
        if mode == "exact":
            return int(queues.max())
        return self.estimator.report(slot, queues.max(axis=1))

    def floor(self, queues: np.ndarray, slot: int) -> float:
        if self.config.qmax_mode == "conjecture":
            return 0.0
        qm = self.q_max(queues, slot)
        if qm != self._floor_key:
            self._floor_key = qm
            self._floor = self.config.floor(qm, self.n)
        return self._floor

    def pair_weights(self, queues: np.ndarray, h, slot: int) -> np.ndarray:
        """Matrix holding W_ij for (i, H[i]) and zeros elsewhere."""
        floor = self.floor(queues, slot)
        w = np.zeros((self.n, self.n))
        for i in range(self.n):
            j = int(h[i])
            w[i, j] = f_scalar(max(floor, float(queues[i, j])))
        return w


class CentralDisquo:
    """Basic DISQUO with a global view; free ports augment via round-robin."""

    kind = "disquo-central"
    uses_coins = True

    def __init__(self, n: int, stream, weight_config: WeightConfig | None = None):
        self.n = n
        self.stream = stream
        self.weights = SlotWeights(n, weight_config)
        self.policy = RoundRobinPolicy(n)
        self.schedule = np.zeros((n, n), dtype=np.int64)
        self._ports = None

    def input_phase(self, state, h, h_next, coins):
        w = self.weights.pair_weights(state.queues, h, state.clock)
        self.schedule = basic_update(self.schedule, h, w, coins)
        self._ports = derive_port_schedules(self.schedule, state, self.policy, h_next)
        return self._ports.input_sched

    def output_phase(self, state, h, h_next, received):
        return self._ports.output_sched
