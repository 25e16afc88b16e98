"""Random-walk quantities and the rate/latency bound formulas.

Everything here is dense linear algebra over the routing matrix of a
:class:`~randcompute.topology.Graph`; sizes up to a couple of thousand nodes
are fine.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Any

import networkx as nx
import numpy as np
import scipy.linalg

from .topology import Graph, is_bipartite, transition_matrix


class AnalyticsError(ValueError):
    pass


class PeriodicChainError(AnalyticsError):
    """The chain is periodic; add self-loop probability (laziness) first."""


@dataclass(frozen=True)
class WalkSpectrum:
    eigenvalues: np.ndarray

    @property
    def lambda2(self) -> float:
        return float(self.eigenvalues[1]) if len(self.eigenvalues) > 1 else 0.0

    @property
    def spectral_gap(self) -> float:
        return 1.0 - self.lambda2


def stationary(P: np.ndarray) -> np.ndarray:
    """Stationary distribution from the left null space of ``P - I``."""
    n = P.shape[0]
    A = np.vstack([P.T - np.eye(n), np.ones((1, n))])
    b = np.zeros(n + 1)
    b[-1] = 1.0
    pi, *_ = np.linalg.lstsq(A, b, rcond=None)
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


def graph_stationary(g: Graph) -> np.ndarray:
    """Closed form ``pi(v) ∝ d(v) / (1 - eps(v))`` (``d(v)/2m`` without laziness)."""
    w = np.array([d / (1.0 - e) for d, e in zip(g.degree, g.self_loop_prob)])
    return w / w.sum()


def spectrum(P: np.ndarray, pi: np.ndarray | None = None) -> WalkSpectrum:
    """Eigenvalues of a reversible ``P`` in descending order.

    Uses the symmetric similarity ``Pi^(1/2) P Pi^(-1/2)``; for the simple walk
    ``Pi`` is proportional to the degree matrix.
    """
    if pi is None:
        pi = stationary(P)
    s = np.sqrt(pi)
    A = (s[:, None] * P) / s[None, :]
    asym = np.max(np.abs(A - A.T))
    if asym > 1e-9:
        raise AnalyticsError(f"chain is not reversible (asymmetry {asym:.3g})")
    try:
        ev = scipy.linalg.eigvalsh((A + A.T) / 2.0)
    except np.linalg.LinAlgError as exc:
        raise AnalyticsError(f"eigensolver failed: {exc}") from exc
    return WalkSpectrum(ev[::-1].copy())


def hitting_times(P: np.ndarray) -> np.ndarray:
    """Matrix ``H[x, y] = E_x(tau_y)``, one linear solve per target ``y``."""
    n = P.shape[0]
    H = np.zeros((n, n))
    for y in range(n):
        keep = [x for x in range(n) if x != y]
        A = np.eye(n - 1) - P[np.ix_(keep, keep)]
        try:
            H[keep, y] = scipy.linalg.solve(A, np.ones(n - 1))
        except np.linalg.LinAlgError as exc:
            raise AnalyticsError(f"singular hitting system for target {y}") from exc
    return H


def hitting_time_worst(P: np.ndarray) -> tuple[float, np.ndarray]:
    H = hitting_times(P)
    return float(H.max()), H


def _require_aperiodic(g: Graph) -> None:
    if is_bipartite(g) and not any(g.self_loop_prob):
        raise PeriodicChainError(
            f"{g.name} is bipartite without self-loops; set epsilon > 0 for a lazy walk"
        )


def tv_profile(P: np.ndarray, pi: np.ndarray, t_max: int) -> list[float]:
    """``max_u ||P^t(u, .) - pi||_TV`` for ``t = 0..t_max`` by repeated multiplication."""
    M = np.eye(P.shape[0])
    out = [0.5 * float(np.abs(M - pi).sum(axis=1).max())]
    for _ in range(t_max):
        M = M @ P
        out.append(0.5 * float(np.abs(M - pi).sum(axis=1).max()))
    return out


def mixing_time(g: Graph, eps_mix: float = 0.25, t_max: int = 10**6) -> int:
    """Smallest ``t`` with worst-start total variation ``<= eps_mix`` (matrix powering)."""
    _require_aperiodic(g)
    P = transition_matrix(g)
    pi = graph_stationary(g)
    M = np.eye(g.n)
    for t in range(t_max + 1):
        if 0.5 * np.abs(M - pi).sum(axis=1).max() <= eps_mix:
            return t
        M = M @ P
    raise AnalyticsError(f"no mixing within {t_max} steps")


def mixing_time_spectral(g: Graph, eps_mix: float = 0.25, t_max: int = 10**6) -> int:
    """Same quantity as :func:`mixing_time`, via the eigen-expansion of ``P^t``."""
    _require_aperiodic(g)
    P = transition_matrix(g)
    pi = graph_stationary(g)
    s = np.sqrt(pi)
    A = (s[:, None] * P) / s[None, :]
    lam, U = np.linalg.eigh((A + A.T) / 2.0)
    left = U / s[:, None]
    right = U.T * s[None, :]
    for t in range(t_max + 1):
        Pt = (left * lam**t) @ right
        if 0.5 * np.abs(Pt - pi).sum(axis=1).max() <= eps_mix:
            return t
    raise AnalyticsError(f"no mixing within {t_max} steps")


@dataclass(frozen=True)
class FundamentalReport:
    z_diag: np.ndarray
    pi: np.ndarray
    lambda2: float
    expected_hitting_pi: np.ndarray  # Z_vv / pi_v
    lemma_bound: float  # 1 / (1 - lambda2)

    @property
    def lemma_holds(self) -> bool:
        return bool(np.all(self.z_diag <= self.lemma_bound + 1e-9))


def fundamental_zvv(g: Graph) -> FundamentalReport:
    """Diagonal of ``Z = sum_t (P^t - 1 pi)`` via ``(I - P + 1 pi)^-1 - 1 pi``."""
    _require_aperiodic(g)
    P = transition_matrix(g)
    pi = graph_stationary(g)
    Pi = np.tile(pi, (g.n, 1))
    try:
        Z = np.linalg.inv(np.eye(g.n) - P + Pi) - Pi
    except np.linalg.LinAlgError as exc:
        raise AnalyticsError("fundamental matrix is singular") from exc
    z = np.diag(Z).copy()
    lam2 = spectrum(P, pi).lambda2
    return FundamentalReport(z, pi, lam2, z / pi, 1.0 / (1.0 - lam2))


# -- cuts ----------------------------------------------------------------------


def _cut_value(P: np.ndarray, inside: set[int]) -> float:
    return float(sum(P[u, v] for u in inside for v in range(P.shape[0]) if v not in inside))


def min_mincut(P: np.ndarray, sink: int) -> tuple[float, dict[int, float]]:
    """Return ``(delta, {i: delta_i})`` where ``delta_i`` is the ``i -> sink`` min cut.

    Capacities are the routing probabilities ``P(u, v)``; each ``delta_i`` is a
    max-flow value on the directed capacity graph.
    """
    n = P.shape[0]
    D = nx.DiGraph()
    D.add_nodes_from(range(n))
    for u in range(n):
        for v in range(n):
            if u != v and P[u, v] > 0:
                D.add_edge(u, v, capacity=float(P[u, v]))
    per = {}
    for i in range(n):
        if i == sink:
            continue
        per[i] = float(nx.maximum_flow_value(D, i, sink))
    return (min(per.values()) if per else math.inf), per


def min_mincut_bruteforce(P: np.ndarray, sink: int) -> tuple[float, dict[int, float]]:
    """Enumerate all ``2^(n-1)`` sink-free node sets; for checking small graphs."""
    n = P.shape[0]
    others = [v for v in range(n) if v != sink]
    per = {i: math.inf for i in others}
    for r in range(1, len(others) + 1):
        for U in itertools.combinations(others, r):
            val = _cut_value(P, set(U))
            for i in U:
                if val < per[i]:
                    per[i] = val
    return min(per.values()), per


# -- degree statistics -------------------------------------------------------


def nu(g: Graph) -> Fraction:
    """Degree variability ``sum d(v)^2 / (d^2 n)`` with ``d = 2m/n``."""
    s2 = sum(d * d for d in g.degree)
    return Fraction(s2 * g.n, (2 * g.m) ** 2)


def log_k(x: float, base: float = 2.0) -> float:
    return math.log(x) / math.log(base)


def l_star(g: Graph, K: int, base: float = 2.0) -> float:
    return max(2.0, min(g.n / float(nu(g)), log_k(K, base)))


def degree_s2(g: Graph) -> tuple[int, Fraction, bool]:
    """``(sum d(v)^2, (2m)^2 nu / n, equal)`` with exact arithmetic."""
    lhs = sum(d * d for d in g.degree)
    rhs = Fraction((2 * g.m) ** 2) * nu(g) / g.n
    return lhs, rhs, rhs == lhs


# -- bounds --------------------------------------------------------------------


def theorem1_bounds(g: Graph, K: int, sink: int | None = None) -> dict[str, Any]:
    """Stable-rate sandwich for the fixed model.

    ``rate_lower = (1 - lambda2) / (2 sqrt(3) (K - 1)) * sqrt(d_min / d_max)``;
    ``rate_upper`` is the min-mincut ``delta`` (needs ``sink``).
    """
    if K < 2:
        raise AnalyticsError("rate bounds need K >= 2")
    P = transition_matrix(g)
    lam2 = spectrum(P, graph_stationary(g)).lambda2
    dmin, dmax = min(g.degree), max(g.degree)
    lower = (1.0 - lam2) / (2.0 * math.sqrt(3.0) * (K - 1)) * math.sqrt(dmin / dmax)
    out: dict[str, Any] = {
        "lambda2": lam2,
        "d_min": dmin,
        "d_max": dmax,
        "K": K,
        "rate_lower": lower,
    }
    if sink is not None:
        delta, per = min_mincut(P, sink)
        out["rate_upper"] = delta
        out["delta_i"] = per
        out["consistent"] = lower <= delta + 1e-12
    return out


def theorem2_bound(
    K: int, h: int, beta: float, c_hat: float, t_hit: float, alpha: float = 1.0, base: float = 2.0
) -> dict[str, float]:
    """Fixed-model latency bound ``alpha log K (1/beta + h t_hit / (1 - c))``."""
    _check_rate(beta, c_hat)
    logk = log_k(K, base)
    if c_hat == 1.0:
        return {"bound": math.inf, "arrival_term": 1.0 / beta, "routing_term": math.inf, "logK": logk}
    routing = h * t_hit / (1.0 - c_hat)
    return {
        "bound": alpha * logk * (1.0 / beta + routing),
        "arrival_term": 1.0 / beta,
        "routing_term": routing,
        "logK": logk,
    }


def theorem3_bound(
    g: Graph,
    K: int,
    h: int,
    beta: float,
    c_hat: float,
    t_mix: float,
    alpha_hat: float = 1.0,
    base: float = 2.0,
) -> dict[str, float]:
    """Flexible-model bound ``a log K (1/beta + h t_mix (log^2 K + n/(nu log n)) / (1 - c))``."""
    _check_rate(beta, c_hat)
    logk = log_k(K, base)
    spread = logk**2 + g.n / (float(nu(g)) * log_k(g.n, base))
    if c_hat == 1.0:
        return {"bound": math.inf, "arrival_term": 1.0 / beta, "routing_term": math.inf,
                "logK": logk, "coalescence_factor": spread}
    routing = h * t_mix * spread / (1.0 - c_hat)
    return {
        "bound": alpha_hat * logk * (1.0 / beta + routing),
        "arrival_term": 1.0 / beta,
        "routing_term": routing,
        "logK": logk,
        "coalescence_factor": spread,
    }


def _check_rate(beta: float, c_hat: float) -> None:
    if not 0.0 < beta <= 1.0:
        raise AnalyticsError(f"beta must be in (0, 1], got {beta}")
    if not 0.0 <= c_hat <= 1.0:
        raise AnalyticsError(f"c_hat must be in [0, 1], got {c_hat}")


@dataclass
class BoundReport:
    graph: str
    n: int
    m: int
    K: int
    h: int
    sink: int
    lambda2: float
    spectral_gap: float
    rate_lower: float
    rate_upper: float
    delta_i: dict[int, float]
    t_hit: float
    t_mix: int | None
    mix_graph_epsilon: float
    nu: float
    l_star: float
    degree_s2: int
    fixed_latency_bound: float | None
    flexible_latency_bound: float | None
    constants: dict[str, float] = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def bound_report(
    g: Graph,
    K: int,
    h: int,
    sink: int,
    *,
    beta: float | None = None,
    c_hat: float = 0.0,
    eps_mix: float = 0.25,
    laziness: float = 0.5,
    log_base: float = 2.0,
    constants: dict[str, float] | None = None,
) -> BoundReport:
    """All bound ingredients for one topology/schema/sink.

    Mixing time needs an aperiodic chain; for a periodic graph it is computed
    on the lazy copy with self-loop probability ``laziness``.
    """
    consts = {"alpha": 1.0, "alpha_hat": 1.0, "b": 1.0, "D": 1.0, **(constants or {})}
    notes = []
    P = transition_matrix(g)
    lam2 = spectrum(P, graph_stationary(g)).lambda2
    rate = theorem1_bounds(g, K, sink) if K >= 2 else None
    t_hit, _ = hitting_time_worst(P)
    mix_g = g
    if is_bipartite(g) and not any(g.self_loop_prob):
        mix_g = g.with_epsilon(laziness)
        notes.append(f"t_mix computed on lazy copy (epsilon={laziness}); base chain is periodic")
    t_mix = mixing_time(mix_g, eps_mix)
    fixed = flexible = None
    if beta is not None and beta > 0 and K >= 2:
        fixed = theorem2_bound(K, h, beta, c_hat, t_hit, consts["alpha"], log_base)["bound"]
        flexible = theorem3_bound(g, K, h, beta, c_hat, t_mix, consts["alpha_hat"], log_base)["bound"]
    if rate is not None and not rate["consistent"]:
        notes.append("rate_lower exceeds rate_upper on this instance")
    return BoundReport(
        graph=g.name,
        n=g.n,
        m=g.m,
        K=K,
        h=h,
        sink=sink,
        lambda2=lam2,
        spectral_gap=1.0 - lam2,
        rate_lower=rate["rate_lower"] if rate else math.nan,
        rate_upper=rate["rate_upper"] if rate else math.nan,
        delta_i=rate["delta_i"] if rate else {},
        t_hit=t_hit,
        t_mix=t_mix,
        mix_graph_epsilon=mix_g.self_loop_prob[0],
        nu=float(nu(g)),
        l_star=l_star(g, K, log_base) if K >= 1 else math.nan,
        degree_s2=degree_s2(g)[0],
        fixed_latency_bound=fixed,
        flexible_latency_bound=flexible,
        constants=consts,
        notes=notes,
    )
