from types import SimpleNamespace

import numpy as np
import pytest

from disquo.disquo import WeightConfig
from disquo.distributed import (
    AccessViolation,
    DistributedDisquo,
    InputLocalView,
    OutputLocalView,
    isa_step,
    osa_step,
    view_consistency_check,
    view_matrices,
)
from disquo.engine import EngineSpec, simulate
from disquo.hamiltonian import ScriptedStream
from disquo.switch import new_switch, step_slot
from disquo.traffic import BernoulliSource, make_rates

from conftest import FixedCoins


def three_port_example():
    state = new_switch(3)
    for i, j in [(0, 1), (1, 0), (2, 1), (2, 2)]:
        state.enqueue(i, j, -5, 2)
    state.place(0, 2, [-3])
    sched = DistributedDisquo(3, ScriptedStream([[1, 0, 2], [2, 0, 1]]), WeightConfig())
    sched.in_active[:] = [-1, 0, 2]
    sched.out_active[:] = [1, -1, 2]
    rng = SimpleNamespace(coins=FixedCoins([0.0, 0.0, 0.9999]), traffic=np.random.default_rng(0))
    return state, sched, rng


def test_three_port_example():
    state, sched, rng = three_port_example()
    rep = step_slot(state, sched, BernoulliSource(np.zeros((3, 3))), rng)
    assert sched.in_active.tolist() == [1, 0, -1]
    assert sched.out_active.tolist() == [1, 0, -1]
    assert {tuple(p) for p in np.argwhere(rep.schedule)} == {(0, 1), (1, 0)}
    assert set(rep.input_transfers) == {(0, 1), (1, 0), (2, 1)}
    assert {(i, j) for i, j, _ in rep.output_departures} == {(0, 1), (1, 0), (0, 2)}
    assert sched.unclassified == 0


def test_three_port_branch_cases():
    h, hn = np.array([1, 0, 2]), np.array([2, 0, 1])
    w = np.zeros(3)
    q = np.array([[0, 2, 0], [2, 0, 0], [0, 2, 2]])
    b = np.array([[0, 0, 1], [0, 0, 0], [0, 0, 0]])
    cases = [isa_step(InputLocalView(i, a, q[i], b[i], w, 0), h, hn, c).case
             for i, a, c in [(0, -1, 0.0), (1, 0, 0.0), (2, 2, 0.9999)]]
    assert cases == ["e", "b", "c"]
    arrivals = np.array([[0, 1, 0], [1, 0, 0], [1, 0, 0]])
    bufs = b.copy()
    bufs[0, 1] = bufs[1, 0] = bufs[2, 1] = 1
    outs = [osa_step(OutputLocalView(j, a, bufs[:, j], arrivals[:, j], 0), h, hn)
            for j, a in [(0, 1), (1, -1), (2, 2)]]
    assert [o.case for o in outs] == ["b", "e", "c"]
    assert [o.serve_from for o in outs] == [1, 0, 0]


def test_views_are_sealed():
    v = InputLocalView(0, -1, np.zeros(2), np.zeros(2), np.zeros(2), 0)
    for name in ("out_active", "xbuf", "queues_all", "state"):
        with pytest.raises(AccessViolation):
            getattr(v, name)
    o = OutputLocalView(0, -1, np.zeros(2), np.zeros(2), 0)
    with pytest.raises(AccessViolation):
        o.queues
    with pytest.raises(AttributeError):
        o.weights


def test_input_sees_only_its_row():
    state, sched, rng = three_port_example()
    seen = []
    orig = InputLocalView.__init__

    def spy(self, port, active, queues, buffers, weights, pointer):
        seen.append((port, queues.copy(), buffers.copy()))
        orig(self, port, active, queues, buffers, weights, pointer)

    InputLocalView.__init__ = spy
    try:
        snapshot_q, snapshot_b = state.queues.copy(), state.xbuf.copy()
        step_slot(state, sched, BernoulliSource(np.zeros((3, 3))), rng)
    finally:
        InputLocalView.__init__ = orig
    for port, q, b in seen:
        assert np.array_equal(q, snapshot_q[port]) and np.array_equal(b, snapshot_b[port])


def test_free_input_probe_skips_own_h_output():
    # H(n+1) pairs input 0 with the same output as H(n)
    v = InputLocalView(0, -1, np.array([3, 3]), np.array([1, 0]), np.zeros(2), 0)
    dec = isa_step(v, np.array([0, 1]), np.array([0, 1]), 0.99)
    assert dec.case == "g" and dec.send_to == 1


def test_active_input_with_full_buffer_holds():
    v = InputLocalView(0, 1, np.array([0, 4]), np.array([0, 1]), np.zeros(2), 0)
    dec = isa_step(v, np.array([1, 0]), np.array([0, 1]), 0.0)
    assert dec.active == 1 and dec.send_to == -1


def test_view_matrices_and_clean_check():
    xi, xo = view_matrices(np.array([1, -1]), np.array([-1, 0]))
    assert xi.tolist() == xo.tolist() == [[0, 1], [0, 0]]
    rep = view_consistency_check(np.array([1, -1]), np.array([-1, 0]), np.array([1, 0]),
                                 np.zeros(2, bool), np.zeros(2, bool),
                                 np.zeros(2, bool), np.zeros(2, bool))
    assert not rep.pairs and not rep.unclassified and not rep.fatal


def test_unprobed_busy_output_is_classified():
    # input 0 activates towards output 1 whose owner is input 1
    state = new_switch(2)
    state.enqueue(0, 1, -1, 3)
    state.enqueue(1, 1, -1, 3)
    state.place(1, 1, [-1])
    sched = DistributedDisquo(2, ScriptedStream([[1, 0], [0, 1]]), WeightConfig())
    sched.in_active[:] = [-1, 1]
    sched.out_active[:] = [-1, 1]
    rng = SimpleNamespace(coins=FixedCoins([0.0, 0.0]), traffic=np.random.default_rng(0))
    step_slot(state, sched, BernoulliSource(np.zeros((2, 2))), rng)
    assert sched.unclassified == 0
    assert dict(sched.divergences) == {"unprobed-busy-output": 1}
    assert sched.last_report.pairs == [(0, 1, "unprobed-busy-output")]
    assert sched.in_active.tolist() == [1, 1] and sched.out_active.tolist() == [-1, 1]


def test_buffer_cap_must_be_one():
    with pytest.raises(ValueError):
        DistributedDisquo(2, ScriptedStream([[0, 1]]), buffer_cap=2)


@pytest.mark.parametrize("n", [2, 3, 4])
def test_saturated_matches_centralized(n):
    spec = EngineSpec(n=n, scheduler="disquo-distributed", rates=make_rates("uniform", n, 0.5),
                      h_mode="shared-random", slots=20000, prefill=20001, shadow=True, seed=n)
    res = simulate(spec)
    assert res.mismatch_slots == 0 and res.unclassified == 0 and res.conserved


@pytest.mark.parametrize("n,pattern,omega", [(8, "uniform", None), (8, "hot-spot", 0.5)])
def test_heavy_load_divergences_are_classified(n, pattern, omega):
    spec = EngineSpec(n=n, scheduler="disquo-distributed", rates=make_rates(pattern, n, 0.9, omega),
                      h_mode="shared-random", slots=200000, seed=11)
    res = simulate(spec)
    assert res.unclassified == 0
    assert res.conserved


@pytest.mark.slow
def test_heavy_load_million_slots():
    spec = EngineSpec(n=8, scheduler="disquo-distributed", rates=make_rates("uniform", 8, 0.95),
                      slots=10**6, seed=3)
    res = simulate(spec)
    assert res.unclassified == 0 and res.conserved
