"""Fully distributed DISQUO: inputs and outputs only talk through crosspoint buffers.

Each input keeps its own row of the schedule and each output its own
column. An input announces a decision on its H(n) pair by sending (or not
sending) a cell into that crosspoint; an output learns it by watching the
buffer fill. A free input sends a cell toward its H(n+1) pair so that, next
slot, an empty buffer means the output was free (it would have drained the
cell) and a full one means it was busy.

The signalling is only exact while inputs always have a cell to send. When
a VOQ is empty the two views can disagree; :func:`view_consistency_check`
reports each such disagreement and says why it happened.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .disquo import SlotWeights, WeightConfig, basic_update, logistic_scalar


class AccessViolation(AttributeError):
    """A port tried to read state that is not part of its local view."""


class _LocalView:
    __slots__ = ()

    def __getattr__(self, name):
        raise AccessViolation(f"{type(self).__name__} has no field {name!r}")


class InputLocalView(_LocalView):
    """What input ``port`` can see: its schedule row, VOQs, and crosspoints."""

    __slots__ = ("port", "active", "queues", "buffers", "weights", "pointer")

    def __init__(self, port, active, queues, buffers, weights, pointer):
        self.port = port
        self.active = active      # output this input is matched to, or -1
        self.queues = queues      # Q[i, :]
        self.buffers = buffers    # B[i, :] at the start of the slot
        self.weights = weights    # W[i, :] from local queues (+ broadcast floor)
        self.pointer = pointer    # round-robin pointer for augmentation


class OutputLocalView(_LocalView):
    """What output ``port`` can see: its schedule column and crosspoints."""

    __slots__ = ("port", "active", "buffers", "arrivals", "pointer")

    def __init__(self, port, active, buffers, arrivals, pointer):
        self.port = port
        self.active = active      # input this output is matched to, or -1
        self.buffers = buffers    # B[:, j] after the input phase
        self.arrivals = arrivals  # 1 where a cell entered CB[i, j] this slot
        self.pointer = pointer


@dataclass(frozen=True)
class ISADecision:
    active: int     # new row state: matched output or -1
    send_to: int    # crosspoint receiving a cell this slot, or -1
    case: str       # branch taken for the H(n) pair: b..g
    pointer: int
    silent: bool    # H(n) pair is on but no cell went in to announce it


@dataclass(frozen=True)
class OSADecision:
    active: int
    serve_from: int
    case: str
    pointer: int


def _rr_pick(eligible, pointer: int) -> tuple[int, int]:
    n = len(eligible)
    for step in range(n):
        k = (pointer + step) % n
        if eligible[k]:
            return k, (k + 1) % n
    return -1, pointer


def isa_step(view: InputLocalView, h, h_next, coin: float) -> ISADecision:
    """Input scheduling for one slot (buffers of one cell)."""
    i = view.port
    d = int(h[i])
    active = view.active
    if active >= 0 and active != d:
        case = "d"
    elif active == d:
        if coin < logistic_scalar(view.weights[d]):
            case = "b"
        else:
            case, active = "c", -1
    elif view.buffers[d] == 0:
        # empty crosspoint: the output was free last slot
        if coin < logistic_scalar(view.weights[d]):
            case, active = "e", d
        else:
            case = "f"
    else:
        case = "g"

    send, pointer = -1, view.pointer
    if active >= 0:
        if view.queues[active] > 0 and view.buffers[active] == 0:
            send = active
    else:
        d_next = int(h_next[i])
        # a cell into CB[i, d] would read as "pair (i, d) is on" at output d
        if d_next != d and view.buffers[d_next] == 0 and view.queues[d_next] > 0:
            send = d_next
        else:
            eligible = [
                j != d and view.queues[j] > 0 and view.buffers[j] == 0
                for j in range(len(view.queues))
            ]
            send, pointer = _rr_pick(eligible, pointer)
    silent = case in ("b", "e") and send != d
    return ISADecision(active, send, case, pointer, silent)


def osa_step(view: OutputLocalView, h, h_next) -> OSADecision:
    """Output scheduling for one slot, after inputs have sent their cells."""
    j = view.port
    e = int(np.flatnonzero(np.asarray(h) == j)[0])
    active = view.active
    if active >= 0 and active != e:
        case = "d"
    elif active == e:
        if view.arrivals[e]:
            case = "b"
        else:
            case, active = "c", -1
    elif view.arrivals[e]:
        case, active = "e", e
    else:
        case = "f"

    serve, pointer = -1, view.pointer
    if active >= 0:
        if view.buffers[active] > 0:
            serve = active
    else:
        e_next = int(np.flatnonzero(np.asarray(h_next) == j)[0])
        if view.buffers[e_next] > 0:
            serve = e_next
        else:
            serve, pointer = _rr_pick([b > 0 for b in view.buffers], pointer)
    return OSADecision(active, serve, case, pointer)


DIVERGENCE_KINDS = ("unprobed-busy-output", "silent-activation", "inherited")


@dataclass
class DivergenceReport:
    pairs: list = field(default_factory=list)         # (i, j, kind)
    unclassified: list = field(default_factory=list)  # (i, j)
    rows: np.ndarray | None = None
    cols: np.ndarray | None = None

    @property
    def fatal(self) -> bool:
        return bool(self.unclassified)


def view_matrices(in_active, out_active) -> tuple[np.ndarray, np.ndarray]:
    n = len(in_active)
    xi = np.zeros((n, n), dtype=np.int64)
    xo = np.zeros((n, n), dtype=np.int64)
    for i, j in enumerate(in_active):
        if j >= 0:
            xi[i, j] = 1
    for j, i in enumerate(out_active):
        if i >= 0:
            xo[i, j] = 1
    return xi, xo


def view_consistency_check(
    in_active,
    out_active,
    h=None,
    silent=None,
    unprobed=None,
    prev_rows=None,
    prev_cols=None,
) -> DivergenceReport:
    """Compare the input-side rows with the output-side columns.

    A mismatch on the H(n) pair of an input counts as explained when that
    input either activated the pair on an empty crosspoint while the output
    was busy, or kept or turned the pair on without a cell to announce it.
    Mismatches on a row or column that already disagreed at the end of the
    previous slot are carried-over effects. Everything else is unclassified.
    """
    n = len(in_active)
    xi, xo = view_matrices(in_active, out_active)
    zeros = np.zeros(n, dtype=bool)
    silent = zeros if silent is None else np.asarray(silent, dtype=bool)
    unprobed = zeros if unprobed is None else np.asarray(unprobed, dtype=bool)
    prev_rows = zeros if prev_rows is None else prev_rows
    prev_cols = zeros if prev_cols is None else prev_cols

    report = DivergenceReport(rows=np.zeros(n, dtype=bool), cols=np.zeros(n, dtype=bool))
    for i, j in np.argwhere(xi != xo):
        i, j = int(i), int(j)
        on_h = h is not None and int(h[i]) == j
        if on_h and unprobed[i]:
            kind = "unprobed-busy-output"
        elif on_h and silent[i]:
            kind = "silent-activation"
        elif prev_rows[i] or prev_cols[j]:
            kind = "inherited"
        else:
            kind = None
        if kind is None:
            report.unclassified.append((i, j))
        else:
            report.pairs.append((i, j, kind))
        report.rows[i] = True
        report.cols[j] = True
    return report


class DistributedDisquo:
    """Slot driver for the ISA/OSA protocol.

    With ``shadow=True`` a centralized Basic DISQUO chain is advanced in
    lockstep with the same H(n), weights and coins, and every slot where the
    distributed schedule leaves it is counted.
    """

    kind = "disquo-distributed"
    uses_coins = True

    def __init__(self, n: int, stream, weight_config: WeightConfig | None = None,
                 buffer_cap: int = 1, shadow: bool = False):
        if buffer_cap != 1:
            raise ValueError("the distributed protocol is defined for one-cell crosspoint buffers")
        self.n = n
        self.stream = stream
        self.weights = SlotWeights(n, weight_config)
        self.in_active = np.full(n, -1, dtype=np.int64)
        self.out_active = np.full(n, -1, dtype=np.int64)
        self.in_ptr = np.zeros(n, dtype=np.int64)
        self.out_ptr = np.zeros(n, dtype=np.int64)
        self.shadow = np.zeros((n, n), dtype=np.int64) if shadow else None
        self.divergences = Counter()
        self.unclassified = 0
        self.mismatch_slots = 0
        self.first_mismatch = -1
        self.last_report = DivergenceReport(rows=np.zeros(n, bool), cols=np.zeros(n, bool))
        self._silent = np.zeros(n, dtype=bool)
        self._unprobed = np.zeros(n, dtype=bool)
        self._h = None
        self._slot = 0

    @property
    def schedule(self) -> np.ndarray:
        return view_matrices(self.in_active, self.out_active)[0]

    @property
    def output_schedule(self) -> np.ndarray:
        return view_matrices(self.in_active, self.out_active)[1]

    def input_phase(self, state, h, h_next, coins):
        n = self.n
        w = self.weights.pair_weights(state.queues, h, state.clock)
        if self.shadow is not None:
            self.shadow = basic_update(self.shadow, h, w, coins)
        s_in = np.zeros((n, n), dtype=np.int64)
        for i in range(n):
            view = InputLocalView(i, int(self.in_active[i]), state.queues[i].copy(),
                                  state.xbuf[i].copy(), w[i].copy(), int(self.in_ptr[i]))
            dec = isa_step(view, h, h_next, coins[i])
            d = int(h[i])
            # instrumentation only: the port itself cannot see the output's state
            self._unprobed[i] = dec.case == "e" and self.out_active[d] not in (-1, i)
            self._silent[i] = dec.silent
            self.in_active[i] = dec.active
            self.in_ptr[i] = dec.pointer
            if dec.send_to >= 0:
                s_in[i, dec.send_to] = 1
        self._h = h
        self._slot = state.clock
        return s_in

    def output_phase(self, state, h, h_next, received):
        n = self.n
        s_out = np.zeros((n, n), dtype=np.int64)
        for j in range(n):
            view = OutputLocalView(j, int(self.out_active[j]), state.xbuf[:, j].copy(),
                                   received[:, j].copy(), int(self.out_ptr[j]))
            dec = osa_step(view, h, h_next)
            self.out_active[j] = dec.active
            self.out_ptr[j] = dec.pointer
            if dec.serve_from >= 0:
                s_out[dec.serve_from, j] = 1
        self._audit()
        return s_out

    def _audit(self) -> None:
        prev = self.last_report
        report = view_consistency_check(self.in_active, self.out_active, self._h,
                                        self._silent, self._unprobed, prev.rows, prev.cols)
        for _, _, kind in report.pairs:
            self.divergences[kind] += 1
        self.unclassified += len(report.unclassified)
        self.last_report = report
        if self.shadow is not None:
            xi, xo = view_matrices(self.in_active, self.out_active)
            if not (np.array_equal(xi, self.shadow) and np.array_equal(xo, self.shadow)):
                self.mismatch_slots += 1
                if self.first_mismatch < 0:
                    self.first_mismatch = self._slot
