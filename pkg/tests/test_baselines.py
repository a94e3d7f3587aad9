import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from disquo.baselines import (
    BaselineScheduler,
    OQState,
    baseline_step,
    matching_weight,
    mwm,
)
from disquo.engine import EngineSpec, simulate
from disquo.switch import RoundRobinPolicy, new_switch
from disquo.traffic import make_rates


def all_matchings(n):
    out = []
    for k in range(n + 1):
        for rows in itertools.combinations(range(n), k):
            for cols in itertools.permutations(range(n), k):
                out.append(tuple(zip(rows, cols)))
    return out


def brute_best(w):
    return max(sum(w[i][j] for i, j in m) for m in all_matchings(len(w)))


def test_matching_count():
    assert len(all_matchings(4)) == 209


def test_mwm_examples():
    assert mwm([[0]]).matching == () and mwm([[0]]).weight == 0
    r = mwm([[1, 2], [3, 0]])
    assert r.matching == ((0, 1), (1, 0)) and r.weight == 5
    assert matching_weight(r.as_matrix(2), [[1, 2], [3, 0]]) == 5


def test_mwm_tie_break_is_lexicographic():
    assert mwm(np.ones((2, 2))).matching == ((0, 0), (1, 1))
    assert mwm([[0, 1], [1, 0]]).matching == ((0, 1), (1, 0))


def test_mwm_rejects_bad_input():
    with pytest.raises(ValueError):
        mwm([[1, 2, 3]])
    with pytest.raises(ValueError):
        mwm([[-1]])


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 4).flatmap(
    lambda n: st.lists(st.integers(0, 9), min_size=n * n, max_size=n * n)))
def test_mwm_matches_enumeration(flat):
    n = int(round(len(flat) ** 0.5))
    w = np.array(flat, dtype=float).reshape(n, n)
    r = mwm(w)
    assert r.weight == pytest.approx(brute_best(w.tolist()))
    assert len({i for i, _ in r.matching}) == len(r.matching)
    assert len({j for _, j in r.matching}) == len(r.matching)


def test_empty_queues_no_service():
    state = new_switch(3)
    rr = RoundRobinPolicy(3)
    ps = baseline_step("rr-rr", state, rr)
    assert ps.transfers() == [] and ps.services() == []
    assert rr.in_ptr.tolist() == [0, 0, 0] and rr.out_ptr.tolist() == [0, 0, 0]


def test_rr_wraps_past_pointer():
    state = new_switch(3)
    state.enqueue(0, 0, 0)
    state.enqueue(0, 2, 0)
    rr = RoundRobinPolicy(3)
    rr.in_ptr[0] = 1
    ps = baseline_step("rr-rr", state, rr)
    assert ps.transfers() == [(0, 2)] and rr.in_ptr[0] == 0


def test_lqf_tie_goes_to_lowest_index():
    state = new_switch(3)
    for j, c in enumerate((5, 9, 9)):
        state.enqueue(0, j, 0, c)
    ps = baseline_step("lqf-rr", state, RoundRobinPolicy(3))
    assert ps.transfers() == [(0, 1)]


def test_unknown_kind():
    with pytest.raises(ValueError):
        BaselineScheduler("islip", 2)
    with pytest.raises(ValueError):
        baseline_step("islip", new_switch(2), RoundRobinPolicy(2))


def test_oq_fifo_delays():
    from disquo.baselines import oq_reference_step
    oq = OQState(2)
    oq_reference_step(oq, np.array([[0, 1], [0, 0]]))
    assert oq_reference_step(oq, np.zeros((2, 2), int)) == [(1, 1)]
    oq = OQState(2)
    oq_reference_step(oq, np.array([[1, 0], [1, 0]]))
    d1 = oq_reference_step(oq, np.zeros((2, 2), int))
    d2 = oq_reference_step(oq, np.zeros((2, 2), int))
    assert d1 == [(0, 1)] and d2 == [(0, 2)]
    assert oq.backlog == 0


def binomial_fifo_delay(n, sigma, slots, seed):
    """Standalone output-queue model: post-arrival backlog over arrival rate."""
    rng = np.random.default_rng(seed)
    arrivals = rng.binomial(n, sigma / n, size=(slots, n))
    q = np.zeros(n, dtype=np.int64)
    total = 0
    for a in arrivals:
        q = np.maximum(q - 1, 0) + a
        total += int(q.sum())
    return total / int(arrivals.sum())


def test_oq_delay_matches_independent_models():
    n, sigma = 16, 0.8
    closed_form = 1 + (n - 1) / n * sigma / (2 * (1 - sigma))
    spec = EngineSpec(n=n, scheduler="oq", rates=make_rates("uniform", n, sigma),
                      slots=10**6, warmup=10**4, seed=7)
    res = simulate(spec)
    from disquo.stats import ci_from_batch_means
    iv = ci_from_batch_means(res.batch_delay_means())
    assert abs(iv.mean - closed_form) <= max(iv.half_width, 0.01 * closed_form)
    assert binomial_fifo_delay(n, sigma, 200000, 3) == pytest.approx(closed_form, rel=0.03)


@pytest.mark.parametrize("scheduler", ["rr-rr", "lqf-rr", "mwm"])
def test_baselines_carry_light_load(scheduler):
    n = 4
    spec = EngineSpec(n=n, scheduler=scheduler, rates=make_rates("uniform", n, 0.5),
                      slots=4000, warmup=500, seed=2)
    res = simulate(spec)
    assert res.conserved
    assert res.throughput == pytest.approx(0.5, abs=0.05)
