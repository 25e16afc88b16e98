"""Stable-rate and latency experiments built on the engine.

The stability verdict is a finite-horizon proxy: a replica is *unstable* when
the least-squares slope of the transmission-queue population over the
post-burn-in window exceeds ``slope_threshold``, *stable* when the slope is
below it and no queue ever exceeded ``queue_cap``, and *inconclusive*
otherwise.  Operand buffers are reported alongside but do not enter the
verdict: with independent sources the number of half-finished rounds drifts
like a random walk at every positive rate.
"""

from __future__ import annotations

import math
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Iterable, Sequence

import numpy as np

from .analytics import (
    bound_report,
    theorem2_bound,
    theorem3_bound,
)
from .config import RunConfig
from .engine import SlotCapExceeded, run

STABLE, UNSTABLE, INCONCLUSIVE = "stable", "unstable", "inconclusive"
MIN_HORIZON = 10_000
MIN_REPLICAS = 3


def split_seeds(seed: int, count: int, stream: int = 0) -> list[int]:
    """Counter-based split of one seed into ``count`` independent seeds."""
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(stream,))
    return [int(s.generate_state(1, dtype=np.uint64)[0]) for s in ss.spawn(count)]


def _pmap(fn: Callable, tasks: Sequence, workers: int) -> list:
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks))


def _slope(series: np.ndarray) -> float:
    if len(series) < 2:
        return 0.0
    x = np.arange(len(series), dtype=float)
    x -= x.mean()
    y = series.astype(float) - series.mean()
    return float((x * y).sum() / (x * x).sum())


# -- stability -------------------------------------------------------------------


@dataclass
class ReplicaStat:
    beta: float
    seed: int
    verdict: str
    slope: float
    slope_total: float
    max_queue: int
    max_buffer: int
    c_hat: float


@dataclass
class StabilityVerdict:
    beta: float
    verdict: str
    slope: float
    max_queue: int
    c_hat: float
    replicas: list[ReplicaStat]
    horizon: int
    slope_threshold: float
    queue_cap: int
    proxy: str = "slope+cap on transmission queues"

    def csv_rows(self) -> list[str]:
        return [
            f"{_g(r.beta)},{r.seed},{r.verdict},{_g(r.slope)},{r.max_queue},{_g(r.c_hat)}"
            for r in self.replicas
        ]


def _g(x: float) -> str:
    return f"{x:.12g}"


def _probe_replica(task) -> ReplicaStat:
    cfg, beta, seed, horizon = task
    ex = cfg.experiment
    if beta == 0.0:
        return ReplicaStat(beta, seed, STABLE, 0.0, 0.0, 0, 0, 0.0)
    s = cfg.build_state(seed, beta, keep_payloads=False)
    m = run(s, slots=horizon, slot_cap=int(cfg.run["slot_cap"]))
    start = int(horizon * float(ex["window_burn_in"]))
    slope = _slope(m.q_series[start:])
    slope_total = _slope(m.total_series[start:])
    maxq = max(m.max_queue)
    thr = float(ex["slope_threshold"])
    if slope > thr:
        verdict = UNSTABLE
    elif maxq <= cfg.queue_cap:
        verdict = STABLE
    else:
        verdict = INCONCLUSIVE
    return ReplicaStat(
        beta, seed, verdict, slope, slope_total, maxq, max(m.max_c), m.c_hat(float(cfg.run["burn_in"]))
    )


def stability_probe(
    cfg: RunConfig,
    beta: float,
    horizon: int | None = None,
    replicas: int | None = None,
    *,
    seeds: Sequence[int] | None = None,
    stream: int = 0,
    workers: int | None = None,
) -> StabilityVerdict:
    horizon = int(horizon if horizon is not None else cfg.experiment["horizon"])
    replicas = int(replicas if replicas is not None else cfg.experiment["replicas"])
    if horizon < MIN_HORIZON:
        raise ValueError(f"horizon {horizon} is below the minimum of {MIN_HORIZON} slots")
    if replicas < MIN_REPLICAS:
        raise ValueError(f"need at least {MIN_REPLICAS} replicas, got {replicas}")
    if seeds is None:
        seeds = split_seeds(cfg.seed, replicas, stream)
    workers = int(workers if workers is not None else cfg.experiment["workers"])
    stats = _pmap(_probe_replica, [(cfg, beta, s, horizon) for s in seeds], workers)
    verdicts = {r.verdict for r in stats}
    verdict = verdicts.pop() if len(verdicts) == 1 else INCONCLUSIVE
    return StabilityVerdict(
        beta=beta,
        verdict=verdict,
        slope=statistics.median(r.slope for r in stats),
        max_queue=max(r.max_queue for r in stats),
        c_hat=statistics.median(r.c_hat for r in stats),
        replicas=stats,
        horizon=horizon,
        slope_threshold=float(cfg.experiment["slope_threshold"]),
        queue_cap=cfg.queue_cap,
    )


@dataclass
class BetaStar:
    low: float
    high: float
    trail: list[StabilityVerdict]
    monotone: bool
    unbounded: bool = False
    note: str = ""

    @property
    def width(self) -> float:
        return self.high - self.low

    def to_dict(self) -> dict[str, Any]:
        return {
            "low": self.low,
            "high": self.high,
            "monotone": self.monotone,
            "unbounded": self.unbounded,
            "note": self.note,
            "trail": [(v.beta, v.verdict) for v in self.trail],
        }


def trail_is_monotone(trail: Iterable[StabilityVerdict]) -> bool:
    """No stable verdict at a rate strictly above an unstable one."""
    trail = list(trail)
    stable = [v.beta for v in trail if v.verdict == STABLE]
    unstable = [v.beta for v in trail if v.verdict == UNSTABLE]
    return not (stable and unstable and max(stable) > min(unstable))


def estimate_beta_star(
    cfg: RunConfig,
    tolerance: float | None = None,
    *,
    low: float | None = None,
    high: float | None = None,
    horizon: int | None = None,
    replicas: int | None = None,
    workers: int | None = None,
) -> BetaStar:
    """Bracket the critical rate by bisection on :func:`stability_probe`.

    ``low`` only moves to rates probed *stable*; anything else (unstable or
    inconclusive) moves ``high``.  Every probe uses fresh seeds.
    """
    tol = float(tolerance if tolerance is not None else cfg.experiment["tolerance"])
    if tol <= 0:
        raise ValueError("tolerance must be positive")
    lo = float(low if low is not None else cfg.experiment["beta_low"])
    hi = float(high if high is not None else cfg.experiment["beta_high"])
    trail: list[StabilityVerdict] = []

    def probe(beta: float) -> str:
        v = stability_probe(cfg, beta, horizon, replicas, stream=len(trail) + 1, workers=workers)
        trail.append(v)
        return v.verdict

    while probe(lo) != STABLE:
        if lo < tol / 4:
            return BetaStar(0.0, lo, trail, trail_is_monotone(trail), note="no stable rate found")
        lo /= 2
    if probe(hi) == STABLE:
        return BetaStar(
            max(hi, 1.0 - tol) if hi >= 1.0 else hi,
            1.0,
            trail,
            trail_is_monotone(trail),
            unbounded=True,
            note="no unstable rate found up to the upper end",
        )
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if probe(mid) == STABLE:
            lo = mid
        else:
            hi = mid
    mono = trail_is_monotone(trail)
    return BetaStar(lo, hi, trail, mono, note="" if mono else "non-monotone probe trail; inconclusive")


# -- latency ----------------------------------------------------------------------


@dataclass
class LatencyRow:
    replica: int
    seed: int
    ell: int
    tau_app: int | None
    tau_fK: int | None
    tau_bar: float | None
    mean_round_latency: float | None
    c_hat: float
    mismatches: int
    slots: int
    status: str = "ok"

    def csv(self) -> str:
        def f(x):
            return "" if x is None else (_g(x) if isinstance(x, float) else str(x))

        return f"{self.replica},{self.ell},{f(self.tau_app)},{f(self.tau_fK)},{f(self.tau_bar)}"


@dataclass
class LatencyReport:
    beta: float
    ell: int
    rows: list[LatencyRow]
    tau_bar_min: float | None
    tau_bar_median: float | None
    tau_bar_max: float | None
    mean_round_latency: float | None
    c_hat: float
    appearance_shape: float  # ell * log(e K) * b / beta, reported only
    status: str = "ok"
    histogram: dict[int, int] = field(default_factory=dict)

    def csv(self, header: Sequence[str] = ()) -> str:
        lines = [f"# {h}" for h in header]
        lines.append("replica,ell,tau_app,tau_fK,tau_bar")
        lines.extend(r.csv() for r in self.rows)
        return "\n".join(lines) + "\n"


def _latency_replica(task) -> tuple[LatencyRow, list[int]]:
    cfg, beta, ell, replica, seed = task
    s = cfg.build_state(seed, beta)
    try:
        m = run(s, rounds=ell, slot_cap=int(cfg.run["slot_cap"]))
    except SlotCapExceeded:
        m = s.metrics()
        return LatencyRow(replica, seed, ell, m.tau_app(ell), None, None, None,
                          m.c_hat(), m.mismatches, m.slots, "slot-cap"), []
    lat = [m.round_latency(r) for r in range(1, ell + 1)]
    return (
        LatencyRow(
            replica,
            seed,
            ell,
            m.tau_app(ell),
            m.tau_f(ell),
            m.tau_bar(ell),
            float(np.mean(lat)),
            m.c_hat(float(cfg.run["burn_in"])),
            m.mismatches,
            m.slots,
        ),
        lat,
    )


def measure_latency(
    cfg: RunConfig,
    beta: float,
    ell: int,
    replicas: int = 5,
    *,
    verified_stable: float | None = None,
    seed_stream: int = 1000,
    workers: int | None = None,
) -> LatencyReport:
    """Run ``replicas`` independent drains of ``ell`` rounds at rate ``beta``."""
    if ell < 1 or replicas < 1:
        raise ValueError("ell and replicas must be positive")
    if verified_stable is not None and beta >= verified_stable:
        raise ValueError(f"beta={beta} is not below the verified-stable rate {verified_stable}")
    seeds = split_seeds(cfg.seed, replicas, seed_stream)
    workers = int(workers if workers is not None else cfg.experiment["workers"])
    out = _pmap(_latency_replica, [(cfg, beta, ell, i, s) for i, s in enumerate(seeds)], workers)
    rows = [r for r, _ in out]
    hist: dict[int, int] = {}
    for _, lat in out:
        for x in lat:
            hist[x] = hist.get(x, 0) + 1
    good = [r.tau_bar for r in rows if r.tau_bar is not None]
    lats = [r.mean_round_latency for r in rows if r.mean_round_latency is not None]
    K = cfg.schema.K
    return LatencyReport(
        beta=beta,
        ell=ell,
        rows=rows,
        tau_bar_min=min(good) if good else None,
        tau_bar_median=statistics.median(good) if good else None,
        tau_bar_max=max(good) if good else None,
        mean_round_latency=statistics.mean(lats) if lats else None,
        c_hat=statistics.median(r.c_hat for r in rows),
        appearance_shape=ell * math.log(math.e * K) * float(cfg.bounds["b"]) / beta,
        status="ok" if len(good) == len(rows) else INCONCLUSIVE,
        histogram=dict(sorted(hist.items())),
    )


# -- consolidated ----------------------------------------------------------------


def compare_bounds(
    configs: Sequence[RunConfig],
    *,
    measure_rate: bool = True,
    measure_time: bool = True,
    latency_rounds: int | None = None,
    latency_replicas: int = 3,
    workers: int | None = None,
) -> list[dict[str, Any]]:
    """One row per config: analytic bounds next to what the simulator measured."""
    rows = []
    for cfg in configs:
        g, t = cfg.graph, cfg.schema
        an = cfg.analytics
        rep = bound_report(
            g, t.K, t.h, cfg.sink,
            eps_mix=float(an["mix_eps"]), laziness=float(an["laziness"]),
            log_base=float(an["log_base"]), constants=cfg.bounds,
        )
        row: dict[str, Any] = {
            "graph": g.name,
            "n": g.n,
            "K": t.K,
            "mode": cfg.mode,
            "rate_lower": rep.rate_lower,
            "delta": rep.rate_upper,
            "lambda2": rep.lambda2,
            "t_hit": rep.t_hit,
            "t_mix": rep.t_mix,
            "nu": rep.nu,
            "violations": [],
        }
        if measure_rate:
            bs = estimate_beta_star(cfg, workers=workers)
            row["beta_star"] = [bs.low, bs.high]
            row["beta_star_monotone"] = bs.monotone
            if cfg.mode == "fixed" and t.K >= 2:
                if rep.rate_lower > bs.low + 1e-12:
                    row["violations"].append("rate_lower above measured beta* interval")
                if bs.high > rep.rate_upper + float(cfg.experiment["tolerance"]):
                    row["violations"].append("measured beta* above min-mincut")
        if measure_time:
            ell = int(latency_rounds or cfg.run["rounds"])
            lat = measure_latency(cfg, cfg.beta, ell, latency_replicas, workers=workers)
            row["tau_bar"] = lat.tau_bar_median
            row["mean_round_latency"] = lat.mean_round_latency
            row["c_hat"] = lat.c_hat
            if t.K >= 2 and cfg.beta > 0 and lat.c_hat < 1.0:
                b = float(an["log_base"])
                row["theorem2"] = theorem2_bound(t.K, t.h, cfg.beta, lat.c_hat, rep.t_hit,
                                                 float(cfg.bounds["alpha"]), b)
                row["theorem3"] = theorem3_bound(g, t.K, t.h, cfg.beta, lat.c_hat, rep.t_mix,
                                                 float(cfg.bounds["alpha_hat"]), b)
        rows.append(row)
    return rows


def verdict_dict(v: StabilityVerdict) -> dict[str, Any]:
    return asdict(v)
