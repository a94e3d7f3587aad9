"""Reference slot loop built on the object model in :mod:`disquo.switch`."""
from __future__ import annotations

from types import SimpleNamespace

import numpy as np

from .baselines import BaselineScheduler, MWMScheduler, OQState, oq_reference_step
from .disquo import CentralDisquo
from .distributed import DistributedDisquo
from .engine import EngineResult, EngineSpec
from .hamiltonian import PermutationStream
from .switch import new_switch, step_slot
from .traffic import make_source


def make_scheduler(spec: EngineSpec, g_h):
    n = spec.n
    if spec.scheduler in ("disquo-central", "disquo-distributed"):
        stream = PermutationStream(n, spec.h_mode, g_h if spec.h_mode == "shared-random" else None)
        if spec.scheduler == "disquo-central":
            return CentralDisquo(n, stream, spec.weight_config)
        return DistributedDisquo(n, stream, spec.weight_config, spec.buffer_cap, spec.shadow)
    if spec.scheduler == "mwm":
        return MWMScheduler(n)
    return BaselineScheduler(spec.scheduler, n)


def simulate(spec: EngineSpec) -> EngineResult:
    n, m = spec.n, spec.measured
    g_traffic, g_coins, g_h = spec.generators()
    source = make_source(spec.rates, spec.arrival, spec.alpha, spec.l_max)
    rng = SimpleNamespace(traffic=g_traffic, coins=g_coins)

    oq = spec.scheduler == "oq"
    if oq:
        oq_state = OQState(n)
        for _ in range(spec.prefill):
            for j in range(n):
                oq_state.fifos[j].extend([-1] * n)
        scheduler = None
    else:
        state = new_switch(n, spec.buffer_cap)
        for i in range(n):
            for j in range(n):
                state.enqueue(i, j, -1, spec.prefill)
        scheduler = make_scheduler(spec, g_h)

    delay_sum = np.zeros(spec.batches, dtype=np.int64)
    delay_count = np.zeros(spec.batches, dtype=np.int64)
    win_sum = np.zeros(spec.windows, dtype=np.int64)
    win_len = np.zeros(spec.windows, dtype=np.int64)
    trace = {k: np.zeros(spec.slots, dtype=np.int64)
             for k in ("backlog", "arrivals", "departures")} if spec.record else None
    arr_m = dep_m = arr_tot = dep_tot = 0

    for slot in range(spec.slots):
        if oq:
            arrived = source.arrivals(g_traffic)
            delays = [d for _, d in oq_reference_step(oq_state, arrived)]
            n_arr = int(arrived.sum())
            backlog = oq_state.backlog
        else:
            rep = step_slot(state, scheduler, source, rng)
            delays = [d for _, _, d in rep.output_departures]
            n_arr = len(rep.arrivals)
            backlog = state.backlog
        arr_tot += n_arr
        dep_tot += len(delays)
        if trace is not None:
            trace["backlog"][slot] = backlog
            trace["arrivals"][slot] = n_arr
            trace["departures"][slot] = len(delays)
        if slot < spec.warmup:
            continue
        t = slot - spec.warmup
        arr_m += n_arr
        dep_m += len(delays)
        b = t * spec.batches // m
        delay_sum[b] += sum(delays)
        delay_count[b] += len(delays)
        w = t * spec.windows // m
        win_sum[w] += backlog
        win_len[w] += 1

    extra = {}
    if oq:
        q = np.zeros((n, n), dtype=np.int64)
        b_final = np.zeros((n, n), dtype=np.int64)
        x = np.zeros((n, n), dtype=np.int64)
        final_backlog = oq_state.backlog
    else:
        q, b_final = state.queues.copy(), state.xbuf.copy()
        x = scheduler.schedule
        x = np.zeros((n, n), dtype=np.int64) if x is None else x.copy()
        final_backlog = state.backlog
        if isinstance(scheduler, DistributedDisquo):
            extra = dict(
                divergences={k: v for k, v in scheduler.divergences.items() if v},
                unclassified=scheduler.unclassified,
                mismatch_slots=scheduler.mismatch_slots,
                first_mismatch=scheduler.first_mismatch,
            )
    return EngineResult(
        n=n,
        measured=m,
        arrivals=arr_m,
        departures=dep_m,
        delay_sum=delay_sum,
        delay_count=delay_count,
        window_backlog=win_sum / win_len,
        total_arrivals=arr_tot,
        total_departures=dep_tot,
        prefilled=spec.prefill * n * n,
        final_backlog=final_backlog,
        final_queues=q,
        final_xbuf=b_final,
        final_schedule=x,
        trace=trace,
        backend="python",
        **extra,
    )
