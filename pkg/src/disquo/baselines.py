"""Reference schedulers: exact maximum-weight matching, RR-RR, LQF-RR and an
ideal output-queued switch."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .disquo import f
from .switch import PortSchedules, RoundRobinPolicy, SwitchState, derive_port_schedules

BASELINE_KINDS = ("rr-rr", "lqf-rr")


@dataclass(frozen=True)
class MatchingResult:
    matching: tuple[tuple[int, int], ...]   # sorted (input, output) pairs
    weight: float

    def as_matrix(self, n: int) -> np.ndarray:
        x = np.zeros((n, n), dtype=np.int64)
        for i, j in self.matching:
            x[i, j] = 1
        return x


def _best_weight(w: np.ndarray) -> float:
    if w.size == 0:
        return 0.0
    rows, cols = linear_sum_assignment(w, maximize=True)
    return float(np.clip(w[rows, cols], 0.0, None).sum())


def mwm(weights) -> MatchingResult:
    """Maximum-weight matching with ties broken toward the lexicographically
    smallest sorted pair list.

    Zero-weight pairs never appear in the result. The optimum comes from the
    Hungarian method; the tie-break fixes pairs greedily in lexicographic
    order, keeping one only if the rest of the matrix can still reach the
    optimum.
    """
    w = np.asarray(weights, dtype=float)
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise ValueError("weights must be a square matrix")
    if (w < 0).any():
        raise ValueError("weights must be non-negative")
    n = w.shape[0]
    best = _best_weight(w)
    tol = 1e-9 * max(1.0, abs(best))

    chosen: list[tuple[int, int]] = []
    free_cols = np.ones(n, dtype=bool)
    target = best
    next_row = 0
    while target > tol:
        for i in range(next_row, n):
            hit = None
            for j in np.flatnonzero(free_cols & (w[i] > 0)):
                cols = free_cols.copy()
                cols[j] = False
                rest = _best_weight(w[i + 1:][:, cols])
                if w[i, j] + rest >= target - tol:
                    hit = int(j)
                    break
            if hit is not None:
                chosen.append((i, hit))
                free_cols[hit] = False
                target -= w[i, hit]
                next_row = i + 1
                break
        else:  # pragma: no cover - the optimum is always reachable
            raise RuntimeError("tie-break failed to reconstruct the optimum")
    total = float(sum(w[i, j] for i, j in chosen))
    return MatchingResult(tuple(chosen), total)


def matching_weight(x, weights) -> float:
    return float((np.asarray(x) * np.asarray(weights)).sum())


def baseline_step(kind: str, state: SwitchState, rr_state: RoundRobinPolicy) -> PortSchedules:
    """Input and output decisions of RR-RR or LQF-RR for one slot."""
    if kind not in BASELINE_KINDS:
        raise ValueError(f"kind must be one of {BASELINE_KINDS}")
    n = state.n_ports
    q, b, k = state.queues, state.xbuf, state.buffer_cap
    s_in = np.zeros((n, n), dtype=np.int64)
    for i in range(n):
        eligible = (q[i] > 0) & (b[i] < k)
        if not eligible.any():
            continue
        if kind == "rr-rr":
            j = rr_state.pick_for_input(i, eligible)
        else:
            j = int(np.argmax(np.where(eligible, q[i], -1)))
        s_in[i, j] = 1
    b_after = b + s_in
    s_out = np.zeros((n, n), dtype=np.int64)
    for j in range(n):
        i = rr_state.pick_for_output(j, b_after[:, j] > 0)
        if i >= 0:
            s_out[i, j] = 1
    return PortSchedules(s_in, s_out)


class BaselineScheduler:
    uses_coins = False
    stream = None
    schedule = None

    def __init__(self, kind: str, n: int):
        if kind not in BASELINE_KINDS:
            raise ValueError(f"kind must be one of {BASELINE_KINDS}")
        self.kind = kind
        self.n = n
        self.rr = RoundRobinPolicy(n)
        self._ports = None

    def input_phase(self, state, h, h_next, coins):
        self._ports = baseline_step(self.kind, state, self.rr)
        return self._ports.input_sched

    def output_phase(self, state, h, h_next, received):
        return self._ports.output_sched


class MWMScheduler:
    """Centralized max-weight matching on W = f(Q), augmented by free ports."""

    kind = "mwm"
    uses_coins = False
    stream = None

    def __init__(self, n: int):
        self.n = n
        self.rr = RoundRobinPolicy(n)
        self.schedule = np.zeros((n, n), dtype=np.int64)
        self._ports = None

    def input_phase(self, state, h, h_next, coins):
        w = f(state.queues.astype(float))
        x = np.zeros((self.n, self.n), dtype=np.int64)
        if w.any():
            rows, cols = linear_sum_assignment(w, maximize=True)
            keep = w[rows, cols] > 0
            x[rows[keep], cols[keep]] = 1
        self.schedule = x
        self._ports = derive_port_schedules(x, state, self.rr, None)
        return self._ports.input_sched

    def output_phase(self, state, h, h_next, received):
        return self._ports.output_sched


class OQState:
    """Ideal output-queued switch: one FIFO per output, one departure per slot."""

    def __init__(self, n: int):
        self.n = n
        self.fifos = [deque() for _ in range(n)]
        self.clock = 0

    @property
    def backlog(self) -> int:
        return sum(len(q) for q in self.fifos)


def oq_reference_step(oq_state: OQState, arrivals) -> list[tuple[int, int]]:
    """Serve every output once, then enqueue this slot's arrivals.

    Returns ``(output, delay)`` per departure. Simultaneous arrivals to one
    output are queued in input order.
    """
    slot = oq_state.clock
    out = []
    for j, fifo in enumerate(oq_state.fifos):
        if fifo:
            out.append((j, slot - fifo.popleft()))
    arrivals = np.asarray(arrivals)
    for i, j in np.argwhere(arrivals):
        oq_state.fifos[int(j)].extend([slot] * int(arrivals[i, j]))
    oq_state.clock += 1
    return out
