import csv
import json

import numpy as np
import pytest

from disquo.experiments import (
    CSV_HEADER,
    ExperimentConfig,
    replication_seed,
    run_experiment,
    splitmix64,
    sweep,
)


def small(**kw):
    base = dict(n_ports=4, schedulers=["disquo-distributed", "oq"], sigmas=[0.5],
                slots=3000, warmup=500, replications=2, seed=3)
    base.update(kw)
    return ExperimentConfig(**base)


def test_splitmix_reference_values():
    # first outputs of the published generator seeded with 0
    assert splitmix64(0) == 0xE220A8397B1DCDAF
    assert replication_seed(1, 0) != replication_seed(1, 1)
    assert replication_seed(7, 3) == replication_seed(7, 3)


def test_config_validation():
    with pytest.raises(ValueError):
        small(slots=10, warmup=10)
    with pytest.raises(ValueError):
        small(pattern="hot-spot")
    with pytest.raises(ValueError):
        small(batches=5)
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict({"n_ports": 4, "colour": "red"})
    cfg = ExperimentConfig.from_dict({"scheduler": "oq", "sigma": 0.3})
    assert cfg.schedulers == ["oq"] and cfg.sigmas == [0.3]


def test_zero_rate_row(tmp_path):
    [row] = run_experiment(small(sigmas=[0.0], schedulers=["oq"]), tmp_path)
    assert row.throughput == 0 and row.mean_delay is None and row.stable
    assert not row.delay_defined


def test_csv_format_and_reproducibility(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    a.mkdir()
    b.mkdir()
    run_experiment(small(), a, raw=True)
    run_experiment(small(), b, raw=True)
    assert (a / "results.csv").read_bytes() == (b / "results.csv").read_bytes()
    assert (a / "raw.jsonl").read_bytes() == (b / "raw.jsonl").read_bytes()
    rows = list(csv.reader(open(a / "results.csv")))
    assert tuple(rows[0]) == CSV_HEADER
    assert [r[0] for r in rows[1:]] == ["disquo-distributed", "oq"]
    first = json.loads((a / "raw.jsonl").open().readline())
    assert {"slot", "backlog", "arrivals", "departures", "replication"} <= set(first)


def test_parallel_matches_serial(tmp_path):
    s = run_experiment(small(workers=1))
    p = run_experiment(small(workers=2))
    assert [r.csv_row() for r in s] == [r.csv_row() for r in p]


def test_missing_output_dir(tmp_path):
    with pytest.raises(FileNotFoundError):
        run_experiment(small(), tmp_path / "nope")


def test_buffer_sweep_uses_central(tmp_path, caplog):
    rows = sweep(small(schedulers=["disquo-distributed"]), "buffer_cap", [1, 2], tmp_path)
    assert [r.scheduler for r in rows] == ["disquo-distributed", "disquo-central"]
    assert [r.k for r in rows] == [1, 2]
    lines = (tmp_path / "results.csv").read_text().splitlines()
    assert len(lines) == 3


def test_sigma_sweep(tmp_path):
    rows = sweep(small(schedulers=["oq"]), "sigma", [0.2, 0.4], tmp_path)
    assert [r.sigma for r in rows] == [0.2, 0.4]
    with pytest.raises(ValueError):
        sweep(small(), "alpha", [1])


def test_unstable_row_reports_slope_only():
    rows = run_experiment(small(schedulers=["rr-rr"], sigmas=[1.2], slots=20000, warmup=2000,
                                replications=1))
    assert not rows[0].stable and rows[0].mean_delay is None and rows[0].slope > 0.01


def _fake(slope, seed):
    from types import SimpleNamespace
    rng = np.random.default_rng(seed)
    windows = 1000.0 + slope * 100 * np.arange(100) + rng.normal(0, 0.5, 100)
    return SimpleNamespace(window_backlog=windows, departures=10,
                           batch_delay_means=lambda: np.full(20, 3.0))


def test_row_verdict_uses_replication_average():
    from disquo.experiments import aggregate
    cfg = small(slots=10_500, warmup=500, replications=2)
    mixed = aggregate(cfg, "oq", 0.5, [_fake(0.05, 1), _fake(-0.05, 2)])
    assert mixed.rep_stable == [False, True]
    assert mixed.stable and abs(mixed.slope) < 0.01
    growing = aggregate(cfg, "oq", 0.5, [_fake(0.05, 1), _fake(0.05, 2)])
    assert not growing.stable and growing.slope == pytest.approx(0.05, rel=0.05)
    assert growing.mean_delay is None


@pytest.mark.slow
def test_uniform_high_load_stable_n8():
    cfg = ExperimentConfig(n_ports=8, schedulers=["disquo-distributed"], sigmas=[0.95],
                           h_mode="shared-random", slots=1_000_000, warmup=500_000,
                           replications=10, seed=8)
    [row] = run_experiment(cfg)
    assert all(row.rep_stable), row.rep_slopes
    assert row.throughput == pytest.approx(0.95, abs=0.01)
