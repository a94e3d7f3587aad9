import itertools

import numpy as np
import pytest

from disquo import engine
from disquo.engine import EngineSpec, simulate
from disquo.traffic import make_rates

compiled = pytest.mark.skipif(engine.BACKEND != "compiled", reason="kernel not built")


def spec(**kw):
    base = dict(n=4, scheduler="disquo-distributed", rates=make_rates("uniform", 4, 0.8),
                slots=3000, warmup=500, seed=1)
    base.update(kw)
    return EngineSpec(**base)


def test_spec_validation():
    with pytest.raises(ValueError):
        spec(scheduler="islip")
    with pytest.raises(ValueError):
        spec(buffer_cap=2)
    with pytest.raises(ValueError):
        spec(slots=100, warmup=100)
    with pytest.raises(ValueError):
        spec(shadow=True, scheduler="rr-rr")
    with pytest.raises(ValueError):
        spec(rates=np.zeros((3, 3)))
    with pytest.raises(ValueError):
        spec(rates=np.full((4, 4), 1.5))
    with pytest.raises(ValueError):
        spec(slots=550, warmup=500)


def test_generators_reproducible():
    a = [g.random() for g in spec().generators()]
    b = [g.random() for g in spec().generators()]
    assert a == b and len(set(a)) == 3


@pytest.mark.parametrize("backend", ["python", None])
def test_determinism(backend):
    assert simulate(spec(), backend).same_as(simulate(spec(), backend))


def test_unknown_backend():
    with pytest.raises(ValueError):
        simulate(spec(), "gpu")


@compiled
@pytest.mark.parametrize("scheduler,arrival,h_mode,qmax_mode,k", [
    (s, a, h, q, k)
    for s, a, h, q, k in itertools.product(
        ["disquo-distributed", "disquo-central", "rr-rr", "lqf-rr", "oq"],
        ["bernoulli", "bursty"],
        ["hamiltonian", "shared-random"],
        ["conjecture", "exact", "broadcast"],
        [1, 2])
    if not (s == "disquo-distributed" and k > 1)
    and (s.startswith("disquo") or (h == "hamiltonian" and q == "conjecture"))
])
def test_backends_agree(scheduler, arrival, h_mode, qmax_mode, k):
    s = spec(scheduler=scheduler, arrival=arrival, h_mode=h_mode, qmax_mode=qmax_mode,
             buffer_cap=k, rates=make_rates("hot-spot", 4, 0.9, 0.5), record=True,
             shadow=scheduler == "disquo-distributed", prefill=2, slots=1500, warmup=300)
    a = simulate(s, "python")
    b = simulate(s, "compiled")
    assert a.backend == "python" and b.backend == "compiled"
    assert a.same_as(b)
    assert a.conserved and b.conserved


@pytest.mark.parametrize("scheduler", ["disquo-distributed", "rr-rr", "oq", "mwm"])
def test_conservation_and_throughput_cap(scheduler):
    r = simulate(spec(scheduler=scheduler, rates=make_rates("uniform", 4, 0.6), slots=5000))
    assert r.conserved
    assert r.throughput <= 1.0
    assert np.isfinite(r.mean_delay) and r.mean_delay >= 1


def test_zero_traffic():
    r = simulate(spec(rates=np.zeros((4, 4))))
    assert r.departures == 0 and np.isnan(r.mean_delay) and r.conserved


def test_overload_grows():
    r = simulate(spec(scheduler="rr-rr", rates=make_rates("uniform", 4, 1.0) * 1.05 / 1.0,
                      slots=4000))
    assert r.final_backlog > 0 and r.throughput <= 1.0


def test_pure_python_switch(monkeypatch):
    monkeypatch.setattr(engine, "_kernel", None)
    with pytest.raises(RuntimeError):
        simulate(spec(), "compiled")
