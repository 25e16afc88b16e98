"""Acceptance suite: each criterion is a function returning a :class:`Criterion`.

Run all of them with :func:`run_all` (used by ``randcompute verify`` and by
``tests/test_acceptance.py``).
"""

from __future__ import annotations

import contextlib
import math
import random
import tempfile
import time
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from pathlib import Path
from typing import Callable

import numpy as np

from .analytics import (
    PeriodicChainError,
    degree_s2,
    fundamental_zvv,
    graph_stationary,
    hitting_time_worst,
    hitting_times,
    min_mincut_bruteforce,
    mixing_time,
    nu,
    spectrum,
    theorem1_bounds,
)
from .config import RunConfig, parse_config
from .engine import check_conservation, run
from .experiments import estimate_beta_star, measure_latency, stability_probe
from .topology import build_topology, is_bipartite, transition_matrix

UNBALANCED = "((x1*x2)+x3)*x4"
ORACLE_TOPOLOGIES = (
    ({"kind": "cycle", "n": 16}, 0),
    ({"kind": "star", "n": 17}, 0),
    ({"kind": "complete", "n": 16}, 0),
)
ORACLE_SCHEMAS = ({"complete": 4, "op": "append"}, {"expression": UNBALANCED})


@dataclass
class Criterion:
    number: int
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0
    limit: float | None = None
    extra: dict = field(default_factory=dict)

    @property
    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        budget = f"/{self.limit:.0f}s" if self.limit else ""
        return f"[{status}] {self.number}. {self.name} ({self.seconds:.1f}s{budget}): {self.detail}"


def config_path(name: str) -> Path:
    return Path(str(resources.files("randcompute") / "configs" / name))


def _timed(number: int, name: str, limit: float | None):
    def wrap(fn: Callable[[], tuple[bool, str, dict]]):
        def inner() -> Criterion:
            t0 = time.perf_counter()
            ok, detail, extra = fn()
            dt = time.perf_counter() - t0
            if limit is not None and dt > limit:
                ok = False
                detail += f"; runtime {dt:.1f}s over {limit:.0f}s"
            return Criterion(number, name, ok, detail, dt, limit, extra)

        inner.__name__ = fn.__name__
        inner.__doc__ = fn.__doc__
        return inner

    return wrap


@contextlib.contextmanager
def _quiet_periodic():
    # callers never drain the periodic flexible cases, so the warning is moot
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", "flexible mode on a periodic walk", RuntimeWarning)
        yield


def oracle_configs(beta: float = 0.02):
    for topo, sink in ORACLE_TOPOLOGIES:
        for mode in ("fixed", "flexible"):
            for schema in ORACLE_SCHEMAS:
                yield RunConfig(
                    {
                        "topology": dict(topo),
                        "schema": dict(schema),
                        "network": {"mode": mode, "sink": sink, "mapping_seed": 11},
                        "arrival": {"beta": beta},
                    }
                )


def _may_drain(cfg: RunConfig) -> bool:
    """Stop arrivals after the measured rounds unless that can livelock.

    In flexible mode on a periodic walk the last two siblings may swap sides
    forever once nothing else moves; later arrivals break the lockstep.
    """
    g = cfg.graph
    return not (cfg.mode == "flexible" and not any(g.self_loop_prob) and is_bipartite(g))


@_timed(1, "correctness oracle", 120)
@_quiet_periodic()
def criterion_1():
    runs = mismatches = consumed = incomplete = 0
    for cfg in oracle_configs():
        for seed in (1, 2, 3):
            m = run(cfg.build_state(seed), rounds=500, drain=_may_drain(cfg))
            # independent recheck of every consumed root payload
            s_ref = cfg.build_state(seed)
            for r, trace, value in m.consumed:
                ref = s_ref.reference(r)
                if trace != ref.trace or value != ref.value:
                    mismatches += 1
            mismatches += m.mismatches
            consumed += len(m.consumed)
            incomplete += any(r not in m.completion for r in range(1, 501))
            runs += 1
    ok = mismatches == 0 and incomplete == 0
    return ok, f"{runs} runs, {consumed} roots checked, {mismatches} mismatches, {incomplete} incomplete", {}


@_timed(2, "analytic table reproduction", None)
def criterion_2():
    errs = []
    for n in (4, 8, 16):
        lam = _lambda2({"kind": "complete", "n": n})
        errs.append(abs(lam + 1.0 / (n - 1)))
    errs.append(abs(_lambda2({"kind": "star", "n": 9})))
    for n in (4, 8, 32):
        errs.append(abs(_lambda2({"kind": "cycle", "n": n}) - math.cos(2 * math.pi / n)))
    lb = theorem1_bounds(build_topology({"kind": "complete", "n": 4}), 2)["rate_lower"]
    errs.append(abs(lb - 4 / (6 * math.sqrt(3))))
    worst = max(errs)
    return worst <= 1e-9, f"max abs error {worst:.3g}; complete-4 K=2 rate_lower={lb:.12g}", {}


def _lambda2(spec) -> float:
    g = build_topology(spec)
    return spectrum(transition_matrix(g), graph_stationary(g)).lambda2


@_timed(3, "stable-rate sandwich", 180)
def criterion_3():
    cfg = parse_config(config_path("star5_sandwich.toml"))
    g = cfg.graph
    delta, _ = min_mincut_bruteforce(transition_matrix(g), cfg.sink)
    lb = theorem1_bounds(g, cfg.schema.K, cfg.sink)["rate_lower"]
    low = stability_probe(cfg, 0.05, 200_000, 3, stream=101)
    high = stability_probe(cfg, 0.5, 200_000, 3, stream=102)
    bs = estimate_beta_star(cfg, horizon=200_000, replicas=3)
    ok = (
        abs(delta - 0.25) < 1e-12
        and low.verdict == "stable"
        and high.verdict == "unstable"
        and bs.monotone
        and lb <= bs.low
        and bs.high <= delta + 0.02
    )
    detail = (
        f"delta={delta:.6g}, rate_lower={lb:.6g}, probe(0.05)={low.verdict}, "
        f"probe(0.5)={high.verdict}, beta*=[{bs.low:.6g}, {bs.high:.6g}]"
    )
    return ok, detail, {"beta_star": bs.to_dict()}


@_timed(4, "hitting and mixing oracles", None)
def criterion_4():
    bad = []
    for n in (4, 8, 16):
        th, _ = hitting_time_worst(transition_matrix(build_topology({"kind": "complete", "n": n})))
        if abs(th - (n - 1)) > 1e-9:
            bad.append(f"complete-{n} t_hit={th}")
        th, _ = hitting_time_worst(transition_matrix(build_topology({"kind": "cycle", "n": n})))
        if abs(th - n * n // 4) > 1e-9:
            bad.append(f"cycle-{n} t_hit={th}")
    tm = mixing_time(build_topology({"kind": "complete", "n": 8}), 0.25)
    if tm != 1:
        bad.append(f"complete-8 t_mix={tm}")
    try:
        mixing_time(build_topology({"kind": "cycle", "n": 8}), 0.25)
        bad.append("even cycle did not raise")
    except PeriodicChainError:
        pass
    return not bad, "all exact" if not bad else "; ".join(bad), {}


def lazy_random_graphs(count: int = 20):
    """Seeded lazy random regular / geometric graphs with ``n <= 64``."""
    rng = random.Random("lemma-graphs")
    out = []
    for i in range(count):
        n = rng.randrange(8, 65)
        if i % 2 == 0:
            r = rng.choice([3, 4, 5])
            n += (n * r) % 2
            n = min(n, 64)
            spec = {"kind": "random_regular", "n": n, "r": r, "seed": i}
        else:
            radius = math.sqrt(3.0 * math.log(n) / (math.pi * n))
            spec = {"kind": "geometric", "n": n, "radius": radius, "seed": i}
        spec["epsilon"] = 0.5
        out.append(build_topology(spec))
    return out


@_timed(5, "fundamental-matrix numerics", 60)
def criterion_5():
    worst_bound = -math.inf
    worst_rel = 0.0
    graphs = lazy_random_graphs()
    for g in graphs:
        rep = fundamental_zvv(g)
        worst_bound = max(worst_bound, float(np.max(rep.z_diag - rep.lemma_bound)))
        H = hitting_times(transition_matrix(g))
        direct = rep.pi @ H
        rel = np.abs(rep.expected_hitting_pi - direct) / np.abs(direct)
        worst_rel = max(worst_rel, float(rel.max()))
    ok = worst_bound <= 1e-9 and worst_rel <= 1e-6
    return ok, f"{len(graphs)} graphs, max(Z_vv - bound)={worst_bound:.3g}, max rel err={worst_rel:.3g}", {}


def acceptance_topologies():
    specs = [topo for topo, _ in ORACLE_TOPOLOGIES]
    specs += [{"kind": "star", "n": 5}, {"kind": "cycle", "n": 8}, {"kind": "complete", "n": 4},
              {"kind": "complete", "n": 8}]
    return [build_topology(s) for s in specs] + lazy_random_graphs()


@_timed(6, "degree second-moment identity", None)
def criterion_6():
    bad = [g.name for g in acceptance_topologies() if not degree_s2(g)[2]]
    for n in (5, 9, 17, 33):
        if nu(build_topology({"kind": "star", "n": n})) != Fraction(n * n, 4 * (n - 1)):
            bad.append(f"nu(star-{n})")
    return not bad, "exact on all topologies" if not bad else "; ".join(bad), {}


@_timed(7, "latency scaling", 300)
def criterion_7():
    def cfg(kind, n):
        return RunConfig(
            {
                "topology": {"kind": kind, "n": n},
                "schema": {"complete": 2, "op": "add"},
                "network": {"mode": "fixed", "sink": 0, "mapping_seed": 3},
                "run": {"seed": 7},
            }
        )

    c8 = measure_latency(cfg("cycle", 8), 0.01, 200, 5)
    c16 = measure_latency(cfg("cycle", 16), 0.01, 200, 5)
    k16 = cfg("complete", 16)
    lo = measure_latency(k16, 0.01, 200, 5)
    hi = measure_latency(k16, 0.05, 200, 5)
    ratio = c16.tau_bar_median / c8.tau_bar_median
    lat_ratio = c16.mean_round_latency / c8.mean_round_latency
    ok = 2.0 <= ratio <= 8.0 and lo.c_hat <= hi.c_hat + 0.02
    detail = (
        f"tau_bar cycle16/cycle8={ratio:.4g} (window [2,8]); "
        f"per-round latency ratio={lat_ratio:.4g}; c_hat(0.01)={lo.c_hat:.4g}, c_hat(0.05)={hi.c_hat:.4g}"
    )
    return ok, detail, {"tau_bar_ratio": ratio, "latency_ratio": lat_ratio}


@_timed(8, "determinism", None)
def criterion_8():
    from .cli import main

    cfg = str(config_path("cycle8_k2.toml"))
    outs = []
    with tempfile.TemporaryDirectory() as tmp:
        for rep in range(2):
            d = Path(tmp) / str(rep)
            codes = [
                main(["simulate", "--config", cfg, "--seed", "7", "--out", str(d / "sim"), "--audit", "--quiet"]),
                main(["sweep", "--config", cfg, "--seed", "7", "--out", str(d / "sweep"),
                      "--beta", "0.02", "--beta", "0.3", "--horizon", "10000", "--quiet"]),
            ]
            if any(codes):
                return False, f"cli exit codes {codes}", {}
            outs.append({p.relative_to(d): p.read_bytes() for p in sorted(d.rglob("*")) if p.is_file()})
    same = outs[0] == outs[1]
    return same and len(outs[0]) >= 3, f"{len(outs[0])} files, identical={same}", {}


@_timed(9, "conservation invariant", None)
@_quiet_periodic()
def criterion_9(samples: int = 1000):
    cfgs = list(oracle_configs())
    rng = random.Random("conservation")
    per_run = [samples // len(cfgs) + (i < samples % len(cfgs)) for i in range(len(cfgs))]
    checked = violations = 0
    for cfg, k in zip(cfgs, per_run):
        s = cfg.build_state(rng.randrange(2**32))
        s.round_limit = 100
        horizon = int(100 / cfg.beta)
        slots = sorted(rng.sample(range(1, horizon + 1), k))
        for t in slots:
            while s.slot < t:
                s.step()
            violations += len(check_conservation(s))
            checked += 1
    return violations == 0 and checked == samples, f"{checked} sampled slots, {violations} violations", {}


CRITERIA = (criterion_1, criterion_2, criterion_3, criterion_4, criterion_5,
            criterion_6, criterion_7, criterion_8, criterion_9)


def run_all(only: set[int] | None = None, echo: Callable[[str], None] | None = print) -> list[Criterion]:
    results = []
    for i, fn in enumerate(CRITERIA, 1):
        if only and i not in only:
            continue
        res = fn()
        results.append(res)
        if echo:
            echo(res.line)
    return results
