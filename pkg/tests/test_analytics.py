import math
import random
from fractions import Fraction

import numpy as np
import pytest

from randcompute.analytics import (
    AnalyticsError,
    PeriodicChainError,
    bound_report,
    degree_s2,
    fundamental_zvv,
    graph_stationary,
    hitting_time_worst,
    hitting_times,
    l_star,
    min_mincut,
    min_mincut_bruteforce,
    mixing_time,
    mixing_time_spectral,
    nu,
    spectrum,
    stationary,
    theorem1_bounds,
    theorem2_bound,
    theorem3_bound,
    tv_profile,
)
from randcompute.topology import Graph, build_topology, transition_matrix

SQ3 = math.sqrt(3.0)


def lam2(spec):
    g = build_topology(spec)
    return spectrum(transition_matrix(g), graph_stationary(g)).lambda2


@pytest.mark.parametrize("n", [4, 8, 16])
def test_lambda2_complete(n):
    assert lam2({"kind": "complete", "n": n}) == pytest.approx(-1 / (n - 1), abs=1e-12)


@pytest.mark.parametrize("n", [4, 5, 8, 32])
def test_lambda2_cycle_matches_circulant(n):
    # circulant oracle: eigenvalues of the cycle walk are cos(2 pi k / n)
    eig = sorted(math.cos(2 * math.pi * k / n) for k in range(n))
    assert lam2({"kind": "cycle", "n": n}) == pytest.approx(eig[-2], abs=1e-12)


def test_lambda2_star_and_hypercube():
    assert abs(lam2({"kind": "star", "n": 9})) < 1e-12
    for m in (3, 4):
        assert lam2({"kind": "hypercube", "n": 2**m}) == pytest.approx(1 - 2 / m, abs=1e-12)


def test_stationary_methods_agree():
    g = build_topology({"kind": "geometric", "n": 25, "radius": 0.4, "seed": 2, "epsilon": 0.1})
    P = transition_matrix(g)
    assert np.allclose(stationary(P), graph_stationary(g), atol=1e-12)


def test_spectrum_rejects_irreversible():
    # lazy directed 3-cycle: uniform stationary law, not reversible
    P = 0.5 * np.eye(3) + 0.5 * np.roll(np.eye(3), 1, axis=1)
    with pytest.raises(AnalyticsError):
        spectrum(P)


# -- closed-form rate lower bounds, instantiated with computed lambda2 -----------


@pytest.mark.parametrize("n", [8, 16])
@pytest.mark.parametrize("K", [2, 4])
def test_table_formulas(n, K):
    def lb(spec):
        return theorem1_bounds(build_topology(spec), K)["rate_lower"]

    assert lb({"kind": "complete", "n": n}) == pytest.approx(n / (2 * SQ3 * (n - 1) * (K - 1)), rel=1e-9)
    star = 1 / (2 * SQ3 * math.sqrt(n - 1) * (K - 1))
    assert lb({"kind": "star", "n": n}) == pytest.approx(star, rel=1e-9)
    cyc = (1 - math.cos(2 * math.pi / n)) / (2 * SQ3 * (K - 1))
    assert lb({"kind": "cycle", "n": n}) == pytest.approx(cyc, rel=1e-9)
    m = int(math.log2(n))
    assert lb({"kind": "hypercube", "n": n}) == pytest.approx((2 / m) / (2 * SQ3 * (K - 1)), rel=1e-9)


def test_rate_lower_k_scaling():
    g = build_topology({"kind": "torus", "side": 4, "dim": 2})
    assert theorem1_bounds(g, 2)["rate_lower"] == pytest.approx(2 * theorem1_bounds(g, 3)["rate_lower"])
    with pytest.raises(AnalyticsError):
        theorem1_bounds(g, 1)


# -- hitting / mixing --------------------------------------------------------


@pytest.mark.parametrize("n", [4, 8, 16])
def test_hitting_closed_forms(n):
    t, _ = hitting_time_worst(transition_matrix(build_topology({"kind": "complete", "n": n})))
    assert t == pytest.approx(n - 1, abs=1e-9)
    t, H = hitting_time_worst(transition_matrix(build_topology({"kind": "cycle", "n": n})))
    assert t == pytest.approx(n * n // 4, abs=1e-9)
    # cycle: E_i tau_0 = k (n - k) with k the distance
    for k in range(n):
        assert H[k, 0] == pytest.approx(k * (n - k), abs=1e-8)


def test_hitting_times_vs_monte_carlo():
    g = build_topology({"kind": "star", "n": 6, "epsilon": 0.3})
    H = hitting_times(transition_matrix(g))
    rng = random.Random(0)
    steps = []
    for _ in range(4000):
        u, t = 1, 0
        while u != 2:
            if rng.random() >= 0.3:
                u = rng.choice(g.adjacency[u])
            t += 1
        steps.append(t)
    assert np.mean(steps) == pytest.approx(H[1, 2], rel=0.05)


def test_mixing_times():
    assert mixing_time(build_topology({"kind": "complete", "n": 8}), 0.25) == 1
    lazy = build_topology({"kind": "cycle", "n": 8, "epsilon": 0.5})
    assert mixing_time(lazy) == mixing_time_spectral(lazy) == 6
    with pytest.raises(PeriodicChainError):
        mixing_time(build_topology({"kind": "cycle", "n": 8}))
    with pytest.raises(PeriodicChainError):
        mixing_time(build_topology({"kind": "cycle", "n": 4}))
    assert mixing_time(build_topology({"kind": "cycle", "n": 7})) >= 1


def test_tv_profile_monotone():
    g = build_topology({"kind": "grid", "rows": 3, "cols": 3, "epsilon": 0.5})
    prof = tv_profile(transition_matrix(g), graph_stationary(g), 30)
    assert all(a >= b - 1e-12 for a, b in zip(prof, prof[1:]))


# -- fundamental matrix -------------------------------------------------------


def test_fundamental_complete_graph():
    g = build_topology({"kind": "complete", "n": 4, "epsilon": 0.25})
    rep = fundamental_zvv(g)
    H = hitting_times(transition_matrix(g))
    assert np.allclose(rep.expected_hitting_pi, rep.pi @ H)
    assert rep.lemma_holds


@pytest.mark.parametrize("seed", range(6))
def test_fundamental_lemma_random(seed):
    rng = random.Random(seed)
    n = rng.randrange(10, 40)
    spec = (
        {"kind": "random_regular", "n": n + n % 2, "r": 3, "seed": seed}
        if seed % 2
        else {"kind": "geometric", "n": n, "radius": 0.45, "seed": seed}
    )
    g = build_topology({**spec, "epsilon": 0.5})
    rep = fundamental_zvv(g)
    assert np.all(rep.z_diag <= rep.lemma_bound + 1e-9)
    H = hitting_times(transition_matrix(g))
    assert np.allclose(rep.expected_hitting_pi, rep.pi @ H, rtol=1e-8)


# -- cuts ----------------------------------------------------------------------


def test_min_mincut_known_values():
    star = transition_matrix(build_topology({"kind": "star", "n": 5}))
    assert min_mincut(star, 4)[0] == pytest.approx(0.25)
    assert min_mincut(star, 0)[0] == pytest.approx(1.0)
    cyc = transition_matrix(build_topology({"kind": "cycle", "n": 6}))
    assert min_mincut(cyc, 0)[0] == pytest.approx(1.0)


@pytest.mark.parametrize("seed", range(8))
def test_min_mincut_vs_enumeration(seed):
    rng = random.Random(seed)
    n = rng.randrange(4, 13)
    g = build_topology({"kind": "geometric", "n": n, "radius": 0.6, "seed": seed, "epsilon": rng.random() * 0.5})
    P = transition_matrix(g)
    sink = rng.randrange(n)
    fast, per_fast = min_mincut(P, sink)
    slow, per_slow = min_mincut_bruteforce(P, sink)
    assert fast == pytest.approx(slow, abs=1e-9)
    for i in per_fast:
        assert per_fast[i] == pytest.approx(per_slow[i], abs=1e-9)


# -- degree statistics ---------------------------------------------------------


@pytest.mark.parametrize("n", [3, 5, 17, 33])
def test_nu_star(n):
    assert nu(build_topology({"kind": "star", "n": n})) == Fraction(n * n, 4 * (n - 1))


def test_nu_regular_and_s2():
    assert nu(build_topology({"kind": "cycle", "n": 10})) == 1
    g = build_topology({"kind": "star", "n": 5})
    lhs, rhs, ok = degree_s2(g)
    assert (lhs, rhs, ok) == (20, Fraction(20), True)


def test_l_star_clamps():
    g = build_topology({"kind": "star", "n": 9})
    assert l_star(g, 2) == 2.0
    c = build_topology({"kind": "cycle", "n": 64})
    assert l_star(c, 2**10) == pytest.approx(10.0)


# -- latency bounds ------------------------------------------------------------


def test_theorem2_and_3():
    b = theorem2_bound(4, 2, 0.1, 0.5, 10.0)
    assert b["bound"] == pytest.approx(2 * (10 + 2 * 10 / 0.5))
    assert theorem2_bound(4, 2, 0.1, 1.0, 10.0)["bound"] == math.inf
    g = build_topology({"kind": "cycle", "n": 16})
    b3 = theorem3_bound(g, 4, 2, 0.1, 0.0, 5.0)
    assert b3["coalescence_factor"] == pytest.approx(4 + 16 / 4)
    with pytest.raises(AnalyticsError):
        theorem2_bound(4, 2, 0.0, 0.1, 1.0)
    with pytest.raises(AnalyticsError):
        theorem2_bound(4, 2, 0.1, 1.5, 1.0)


def test_bound_report_periodic_note():
    g = build_topology({"kind": "cycle", "n": 8})
    rep = bound_report(g, 2, 1, 0, beta=0.01)
    assert rep.t_mix == 6 and rep.mix_graph_epsilon == 0.5
    assert rep.notes and rep.fixed_latency_bound is not None
    assert rep.to_dict()["rate_upper"] == pytest.approx(1.0)


def test_bound_report_single_operand():
    g = Graph.from_edges(2, [(0, 1)], epsilon=0.1)
    rep = bound_report(g, 1, 0, 0)
    assert math.isnan(rep.rate_lower) and rep.fixed_latency_bound is None
