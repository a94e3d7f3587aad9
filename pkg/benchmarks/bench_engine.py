"""Compare the compiled kernel with the pure-Python slot loop.

    python benchmarks/bench_engine.py [--slots 2000] [--n 4 8 16]

Both backends run the same spec; the script checks the results agree and
prints slots per second for each.
"""
from __future__ import annotations

import argparse
import time

from disquo import engine
from disquo.engine import EngineSpec, simulate
from disquo.traffic import make_rates


def timed(spec, backend):
    t0 = time.perf_counter()
    res = simulate(spec, backend)
    return res, time.perf_counter() - t0


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--slots", type=int, default=2000)
    p.add_argument("--n", type=int, nargs="+", default=[4, 8, 16])
    p.add_argument("--schedulers", nargs="+", default=["disquo-distributed", "disquo-central",
                                                       "rr-rr"])
    args = p.parse_args(argv)
    if engine.BACKEND != "compiled":
        raise SystemExit("compiled kernel not available; build with pip install -e .")
    print(f"{'scheduler':<20}{'n':>4}{'python slots/s':>16}{'compiled slots/s':>18}"
          f"{'speedup':>10}  equal")
    for name in args.schedulers:
        for n in args.n:
            spec = EngineSpec(n=n, scheduler=name, rates=make_rates("uniform", n, 0.8),
                              slots=args.slots, seed=1)
            py, t_py = timed(spec, "python")
            cc, t_cc = timed(spec, "compiled")
            print(f"{name:<20}{n:>4}{args.slots / t_py:>16.0f}{args.slots / t_cc:>18.0f}"
                  f"{t_py / t_cc:>10.0f}  {py.same_as(cc)}")


if __name__ == "__main__":
    main()
