"""Command-line interface: ``simulate``, ``analyze`` and ``sweep``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .chain import CHAIN_H_MODES, MAX_EXACT_N, analysis_report
from .engine import BACKEND
from .experiments import SWEEP_PARAMS, ExperimentConfig, run_experiment, sweep

WEIGHT_PRESETS = ("zeros", "ones", "random", "diag-log2")


def preset_weights(name: str, n: int, seed: int = 0) -> np.ndarray:
    if name == "zeros":
        return np.zeros((n, n))
    if name == "ones":
        return np.ones((n, n))
    if name == "random":
        return np.random.default_rng(seed).uniform(0.0, 3.0, size=(n, n))
    if name == "diag-log2":
        w = np.zeros((n, n))
        w[0, 0] = np.log(2.0)
        return w
    raise ValueError(f"unknown preset {name!r}; choose from {WEIGHT_PRESETS}")


def load_weights(spec: str, n: int, seed: int = 0) -> np.ndarray:
    path = Path(spec)
    if path.is_file():
        with open(path) as fh:
            w = np.asarray(json.load(fh), dtype=float)
        if w.shape != (n, n):
            raise ValueError(f"weights file holds a {w.shape} matrix, expected ({n}, {n})")
        return w
    return preset_weights(spec, n, seed)


def _out_dir(path: str) -> Path:
    out = Path(path)
    if not out.is_dir():
        raise SystemExit(f"error: output directory {out} does not exist")
    return out


def _parse_values(raw: list[str]) -> list[float]:
    vals = []
    for item in raw:
        vals += [float(v) for v in item.split(",") if v]
    return vals


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="disquo", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run the experiment described by a JSON config")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--raw", action="store_true", help="also write per-slot samples (JSON lines)")
    s.add_argument("--workers", type=int, default=None, help="parallel replications")

    a = sub.add_parser("analyze", help="exact Markov-chain checks for a small switch")
    a.add_argument("--n", type=int, required=True, choices=range(1, MAX_EXACT_N + 1))
    a.add_argument("--weights", required=True,
                   help=f"JSON file with an n x n matrix, or a preset: {', '.join(WEIGHT_PRESETS)}")
    a.add_argument("--out", required=True)
    a.add_argument("--h-mode", default="uniform-random", choices=CHAIN_H_MODES)
    a.add_argument("--seed", type=int, default=0)

    w = sub.add_parser("sweep", help="re-run a config over several values of one parameter")
    w.add_argument("--config", required=True)
    w.add_argument("--param", required=True, choices=SWEEP_PARAMS)
    w.add_argument("--values", required=True, nargs="+")
    w.add_argument("--out", required=True)
    w.add_argument("--raw", action="store_true")
    w.add_argument("--workers", type=int, default=None)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "analyze":
            out = _out_dir(args.out)
            report = analysis_report(load_weights(args.weights, args.n, args.seed), args.h_mode,
                                     seed=args.seed)
            with open(out / "analysis.json", "w") as fh:
                json.dump(report, fh, indent=2)
            print(f"wrote {out / 'analysis.json'}")
            return 0

        out = _out_dir(args.out)
        config = ExperimentConfig.load(args.config)
        if args.workers is not None:
            config.workers = args.workers
        logging.getLogger(__name__).info("engine backend: %s", BACKEND)
        if args.command == "simulate":
            rows = run_experiment(config, out, raw=args.raw)
        else:
            rows = sweep(config, args.param, _parse_values(args.values), out, raw=args.raw)
        print(f"wrote {len(rows)} rows to {out / 'results.csv'}")
        return 0
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
