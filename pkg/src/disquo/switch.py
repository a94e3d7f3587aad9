"""Physical state of an N x N crosspoint-buffered switch and the slot loop.

A slot runs in three phases:

I.   every port reads H(n) (and H(n+1)) from the shared permutation stream;
II.  inputs settle their schedule and move at most one cell each from a VOQ
     into a crosspoint buffer;
III. outputs settle their schedule and move at most one cell each out of a
     crosspoint buffer.

Arrivals are appended after phase III, so a cell that arrives in slot n can
leave at slot n + 1 at the earliest and the smallest possible delay is 1.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np


class InfeasibleScheduleError(RuntimeError):
    """A scheduler asked for a transfer that the switch cannot perform."""


@dataclass
class SwitchState:
    n_ports: int
    buffer_cap: int = 1
    queues: np.ndarray = field(init=False)
    xbuf: np.ndarray = field(init=False)
    clock: int = 0
    voq: list = field(init=False, repr=False)
    cells: list = field(init=False, repr=False)

    def __post_init__(self):
        n = self.n_ports
        self.queues = np.zeros((n, n), dtype=np.int64)
        self.xbuf = np.zeros((n, n), dtype=np.int64)
        # arrival slots of the cells held in each VOQ / crosspoint buffer
        self.voq = [[deque() for _ in range(n)] for _ in range(n)]
        self.cells = [[deque() for _ in range(n)] for _ in range(n)]

    @property
    def backlog(self) -> int:
        return int(self.queues.sum() + self.xbuf.sum())

    def enqueue(self, i: int, j: int, slot: int, count: int = 1) -> None:
        self.voq[i][j].extend([slot] * count)
        self.queues[i, j] += count

    def place(self, i: int, j: int, stamps) -> None:
        """Load cells straight into crosspoint buffer (i, j); test helper."""
        stamps = list(stamps)
        if self.xbuf[i, j] + len(stamps) > self.buffer_cap:
            raise ValueError("crosspoint buffer overflow")
        self.cells[i][j].extend(stamps)
        self.xbuf[i, j] += len(stamps)


def new_switch(n_ports: int, buffer_cap: int = 1) -> SwitchState:
    if n_ports < 1:
        raise ValueError("n_ports must be >= 1")
    if buffer_cap < 1:
        raise ValueError("buffer_cap must be >= 1")
    return SwitchState(n_ports, buffer_cap)


@dataclass
class PortSchedules:
    input_sched: np.ndarray
    output_sched: np.ndarray

    def transfers(self) -> list[tuple[int, int]]:
        return [tuple(map(int, p)) for p in np.argwhere(self.input_sched)]

    def services(self) -> list[tuple[int, int]]:
        return [tuple(map(int, p)) for p in np.argwhere(self.output_sched)]


@dataclass
class SlotReport:
    slot: int
    arrivals: list            # (input, output, arrival_slot)
    input_transfers: list     # (input, output)
    output_departures: list   # (input, output, delay)
    schedule: np.ndarray | None
    port_schedules: PortSchedules

    def key(self) -> tuple:
        """Hashable summary, used to compare runs for determinism."""
        x = None if self.schedule is None else self.schedule.tobytes()
        return (
            self.slot,
            tuple(self.arrivals),
            tuple(self.input_transfers),
            tuple(self.output_departures),
            x,
            self.port_schedules.input_sched.tobytes(),
            self.port_schedules.output_sched.tobytes(),
        )


class RoundRobinPolicy:
    """Per-port pointers; a port scans from its pointer and then moves it past the pick."""

    def __init__(self, n: int):
        self.n = n
        self.in_ptr = np.zeros(n, dtype=np.int64)
        self.out_ptr = np.zeros(n, dtype=np.int64)

    @staticmethod
    def _scan(ptrs: np.ndarray, port: int, eligible) -> int:
        n = len(eligible)
        start = int(ptrs[port])
        for step in range(n):
            k = (start + step) % n
            if eligible[k]:
                ptrs[port] = (k + 1) % n
                return k
        return -1

    def pick_for_input(self, i: int, eligible) -> int:
        return self._scan(self.in_ptr, i, eligible)

    def pick_for_output(self, j: int, eligible) -> int:
        return self._scan(self.out_ptr, j, eligible)


def _as_policy(policy, n: int) -> RoundRobinPolicy:
    if isinstance(policy, RoundRobinPolicy):
        return policy
    if policy in (None, "round-robin"):
        return RoundRobinPolicy(n)
    raise ValueError(f"unknown free-port policy {policy!r}")


def derive_port_schedules(x, state: SwitchState, free_port_policy="round-robin", h_next=None) -> PortSchedules:
    """Turn a DISQUO schedule into input and output transfer decisions.

    Active pairs send when the VOQ holds a cell and the crosspoint has room,
    and are served when the crosspoint holds a cell after the input phase.
    Free ports augment the schedule: a free input first tries the crosspoint
    its H(n+1) pair points at, then falls back on ``free_port_policy``; free
    outputs do the same over non-empty crosspoints.
    """
    x = np.asarray(x)
    n = state.n_ports
    if x.shape != (n, n):
        raise ValueError("schedule shape does not match the switch")
    if (x.sum(axis=1) > 1).any() or (x.sum(axis=0) > 1).any():
        raise ValueError("invalid schedule: a row or column has more than one active pair")
    policy = _as_policy(free_port_policy, n)
    q, b, k = state.queues, state.xbuf, state.buffer_cap

    s_in = np.zeros((n, n), dtype=np.int64)
    for i in range(n):
        active = np.flatnonzero(x[i])
        if active.size:
            j = int(active[0])
            if q[i, j] > 0 and b[i, j] < k:
                s_in[i, j] = 1
            continue
        eligible = (q[i] > 0) & (b[i] < k)
        if h_next is not None and eligible[h_next[i]]:
            s_in[i, h_next[i]] = 1
            continue
        j = policy.pick_for_input(i, eligible)
        if j >= 0:
            s_in[i, j] = 1

    b_after = b + s_in
    s_out = np.zeros((n, n), dtype=np.int64)
    h_next_inv = None
    if h_next is not None:
        h_next_inv = np.empty(n, dtype=np.int64)
        h_next_inv[np.asarray(h_next)] = np.arange(n)
    for j in range(n):
        active = np.flatnonzero(x[:, j])
        if active.size:
            i = int(active[0])
            if b_after[i, j] > 0:
                s_out[i, j] = 1
            continue
        eligible = b_after[:, j] > 0
        if h_next_inv is not None and eligible[h_next_inv[j]]:
            s_out[h_next_inv[j], j] = 1
            continue
        i = policy.pick_for_output(j, eligible)
        if i >= 0:
            s_out[i, j] = 1
    return PortSchedules(s_in, s_out)


def check_input_schedule(state: SwitchState, s_in: np.ndarray) -> None:
    if (s_in.sum(axis=1) > 1).any():
        raise InfeasibleScheduleError("an input sends more than one cell")
    bad = (s_in == 1) & ((state.queues == 0) | (state.xbuf >= state.buffer_cap))
    if bad.any():
        i, j = map(int, np.argwhere(bad)[0])
        raise InfeasibleScheduleError(f"input {i} cannot send to crosspoint ({i}, {j})")


def check_output_schedule(state: SwitchState, s_out: np.ndarray) -> None:
    if (s_out.sum(axis=0) > 1).any():
        raise InfeasibleScheduleError("an output serves more than one cell")
    bad = (s_out == 1) & (state.xbuf == 0)
    if bad.any():
        i, j = map(int, np.argwhere(bad)[0])
        raise InfeasibleScheduleError(f"output {j} cannot serve empty crosspoint ({i}, {j})")


def step_slot(state: SwitchState, scheduler, traffic, rng) -> SlotReport:
    """Advance the switch by one slot.

    ``rng`` carries two generators: ``rng.coins`` for scheduler randomness and
    ``rng.traffic`` for arrivals.
    """
    n = state.n_ports
    if scheduler.n != n or traffic.n != n:
        raise ValueError("scheduler, traffic and switch disagree on N")
    slot = state.clock

    # phase I
    stream = scheduler.stream
    h = stream.current if stream is not None else None
    h_next = stream.upcoming if stream is not None else None
    coins = rng.coins.random(n) if scheduler.uses_coins else None

    # phase II
    s_in = scheduler.input_phase(state, h, h_next, coins)
    check_input_schedule(state, s_in)
    transfers = []
    for i, j in np.argwhere(s_in):
        i, j = int(i), int(j)
        state.cells[i][j].append(state.voq[i][j].popleft())
        state.queues[i, j] -= 1
        state.xbuf[i, j] += 1
        transfers.append((i, j))

    # phase III
    s_out = scheduler.output_phase(state, h, h_next, s_in)
    check_output_schedule(state, s_out)
    departures = []
    for i, j in np.argwhere(s_out):
        i, j = int(i), int(j)
        stamp = state.cells[i][j].popleft()
        state.xbuf[i, j] -= 1
        departures.append((i, j, slot - stamp))

    arrived = traffic.arrivals(rng.traffic)
    arrivals = []
    for i, j in np.argwhere(arrived):
        i, j = int(i), int(j)
        c = int(arrived[i, j])
        state.enqueue(i, j, slot, c)
        arrivals.extend([(i, j, slot)] * c)

    state.clock += 1
    if stream is not None:
        stream.advance()
    x = scheduler.schedule
    return SlotReport(
        slot,
        arrivals,
        transfers,
        departures,
        None if x is None else x.copy(),
        PortSchedules(s_in, s_out),
    )
