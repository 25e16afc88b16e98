import pytest

from randcompute.config import RunConfig
from randcompute.experiments import (
    INCONCLUSIVE,
    STABLE,
    UNSTABLE,
    StabilityVerdict,
    compare_bounds,
    estimate_beta_star,
    measure_latency,
    split_seeds,
    stability_probe,
    trail_is_monotone,
)


def star5(**over):
    data = {
        "topology": {"kind": "star", "n": 5},
        "schema": {"expression": "(x1*x2)+x3"},
        "network": {"sources": [1, 2, 3], "sink": 4, "mapping": {"1,0": 0, "0,0": 4}},
        "run": {"seed": 11},
        "experiment": {"horizon": 10_000, "replicas": 3},
    }
    for k, v in over.items():
        data.setdefault(k, {}).update(v)
    return RunConfig(data)


def test_split_seeds_deterministic_and_distinct():
    a = split_seeds(5, 4)
    assert a == split_seeds(5, 4)
    assert len(set(a)) == 4
    assert a != split_seeds(5, 4, stream=1)
    assert a != split_seeds(6, 4)


def test_probe_preconditions():
    cfg = star5()
    with pytest.raises(ValueError):
        stability_probe(cfg, 0.1, horizon=5000)
    with pytest.raises(ValueError):
        stability_probe(cfg, 0.1, replicas=2)


def test_probe_zero_rate():
    v = stability_probe(star5(), 0.0)
    assert v.verdict == STABLE and v.slope == 0.0


def test_probe_far_sides():
    cfg = star5()
    lo = stability_probe(cfg, 0.03)
    hi = stability_probe(cfg, 0.5)
    assert lo.verdict == STABLE and lo.max_queue <= cfg.queue_cap
    assert hi.verdict == UNSTABLE and all(r.slope > hi.slope_threshold for r in hi.replicas)
    # replica independence: distinct seeds, distinct streams, same verdict
    assert len({r.seed for r in hi.replicas}) == 3
    assert len({r.max_queue for r in lo.replicas} | {r.c_hat for r in lo.replicas}) > 1


def test_probe_queue_cap_makes_inconclusive():
    cfg = star5(experiment={"queue_cap": 1})
    assert stability_probe(cfg, 0.05).verdict == INCONCLUSIVE


def test_probe_csv_rows():
    v = stability_probe(star5(), 0.03)
    rows = v.csv_rows()
    assert len(rows) == 3 and rows[0].split(",")[2] == STABLE


def _v(beta, verdict):
    return StabilityVerdict(beta, verdict, 0.0, 0, 0.0, [], 10_000, 1e-3, 150)


def test_trail_monotonicity():
    assert trail_is_monotone([_v(0.1, STABLE), _v(0.3, UNSTABLE), _v(0.2, STABLE)])
    assert not trail_is_monotone([_v(0.1, UNSTABLE), _v(0.3, STABLE)])
    assert trail_is_monotone([_v(0.1, INCONCLUSIVE), _v(0.05, STABLE)])


def test_beta_star_bracket_and_trail():
    cfg = star5(experiment={"beta_low": 0.05, "beta_high": 0.5, "tolerance": 0.05})
    bs = estimate_beta_star(cfg)
    assert bs.width <= 0.05 and bs.monotone
    assert bs.trail[0].beta == 0.05 and bs.trail[1].beta == 0.5
    assert 0.05 <= bs.low < bs.high <= 0.5
    with pytest.raises(ValueError):
        estimate_beta_star(cfg, tolerance=0)


def test_beta_star_single_hop_pipeline():
    cfg = RunConfig(
        {
            "topology": {"kind": "path", "n": 2},
            "schema": {"expression": "x"},
            "network": {"sources": [1], "sink": 0, "mapping": {}},
            "experiment": {"horizon": 10_000, "beta_low": 0.5},
        }
    )
    bs = estimate_beta_star(cfg)
    assert bs.unbounded and bs.high == 1.0


def test_latency_single_round_and_invariants():
    cfg = star5()
    rep = measure_latency(cfg, 0.05, 1, replicas=3)
    for row in rep.rows:
        assert row.tau_fK >= row.tau_app
        assert row.tau_bar == row.tau_fK
        assert row.mismatches == 0
    rep = measure_latency(cfg, 0.05, 30, replicas=2)
    assert rep.tau_bar_min <= rep.tau_bar_median <= rep.tau_bar_max
    assert sum(rep.histogram.values()) == 60
    assert rep.csv(["h"]).splitlines()[1] == "replica,ell,tau_app,tau_fK,tau_bar"


def test_latency_rejects_unverified_rate():
    with pytest.raises(ValueError):
        measure_latency(star5(), 0.2, 10, verified_stable=0.1)


def test_latency_slot_cap_is_inconclusive():
    cfg = star5(run={"slot_cap": 50})
    rep = measure_latency(cfg, 0.05, 20, replicas=2)
    assert rep.status == INCONCLUSIVE and all(r.status == "slot-cap" for r in rep.rows)


def test_c_hat_increases_with_rate():
    cfg = RunConfig({"topology": {"kind": "complete", "n": 16}, "schema": {"complete": 2}})
    lo = measure_latency(cfg, 0.01, 100, replicas=3).c_hat
    hi = measure_latency(cfg, 0.05, 100, replicas=3).c_hat
    assert lo <= hi + 0.02


def test_compare_bounds_empty_and_analytic_only():
    assert compare_bounds([]) == []
    rows = compare_bounds([star5()], measure_rate=False, measure_time=False)
    assert rows[0]["delta"] == pytest.approx(0.25)
    assert rows[0]["rate_lower"] < rows[0]["delta"]


def test_compare_bounds_with_latency():
    cfg = RunConfig({"topology": {"kind": "complete", "n": 8}, "schema": {"complete": 2}, "run": {"rounds": 30}})
    row = compare_bounds([cfg], measure_rate=False, latency_replicas=2)[0]
    assert row["tau_bar"] > 0 and "theorem2" in row and "theorem3" in row
