import math
from dataclasses import replace
from fractions import Fraction

import numpy as np
import pytest

from sceneryrec.events import (
    Thresholds, TrialSetup, containment_trial, d_envelope_chernoff, d_envelope_literal,
    d1_factor, eval_B, eval_C, eval_D, eval_F, eval_G, margin_floor,
)
from sceneryrec.observe import StopTimes, observe, oracle_stops
from sceneryrec.paths import PathFunction, check_delta_path
from sceneryrec.reconstruct import manual_params
from sceneryrec.scenery import IIDScenery
from sceneryrec.simulation import derive_seed, seed_int
from sceneryrec.walk import WalkRun, geometric_tail, lazy_simple, simulate


def brute_F(sc, p, sb, max_jump):
    """Depth-first enumeration of every colour-matching delta-path."""
    w = p.pattern_w.colors.tolist()
    steps = len(w) - 1
    cap = math.floor(p.delta * steps)
    moves = [-1, 1] + [v for v in range(-max_jump, max_jump + 1) if abs(v) != 1]
    lo_i, hi_i = p.interval_I
    lo_j, hi_j = p.interval_J

    def dfs(x, j, k, var, left_i):
        if j == steps:
            return left_i or not (lo_j <= x <= hi_j)
        for s in moves:
            nk = k + (abs(s) != 1)
            nv = var + (abs(s) if abs(s) != 1 else 0)
            y = x + s
            if nk > cap or nv > cap or abs(y) > sb or sc(y) != w[j + 1]:
                continue
            if dfs(y, j + 1, nk, nv, left_i or not (lo_i <= y <= hi_i)):
                return True
        return False

    for x in range(-sb, sb + 1):
        if sc(x) == w[0] and dfs(x, 0, 0, 0, not (lo_i <= x <= hi_i)):
            return False
    return True


def test_eval_F_matches_brute_force():
    rng = np.random.default_rng(0)
    outcomes = set()
    for trial in range(100):
        n = int(rng.integers(3, 11))
        sc = IIDScenery(int(rng.integers(0, 2**32)))
        known = sc.window(-n, n)
        k2 = int(rng.integers(-n // 2, n + 1))
        k1 = max(-n, k2 - int(rng.integers(1, 5)))
        delta = Fraction(int(rng.integers(0, 3)), max(1, k2 - k1))
        p = manual_params(n, (k1, k2), 1, known, 100, delta=delta)
        sb = int(rng.integers(n + 2, 40))
        got = eval_F(sc, p, sb, max_jump=3)
        assert got == brute_F(sc, p, sb, 3)
        outcomes.add(got)
    assert outcomes == {True, False}


def test_F_implies_nu_stops_end_in_J():
    d = lazy_simple(0.1)
    n = 5
    checked = 0
    for seed in range(20):
        sc = IIDScenery(seed)
        p = manual_params(n, (-3, 1), 2, sc.window(-n, n), 50_000, delta=Fraction(1, 4))
        p = replace(p, interval_J=(0, 2))
        run = simulate(d, 0, 50_000, seed)
        if not eval_F(sc, p, int(np.abs(run.positions).max()) + 1, max_jump=1):
            continue
        chi = observe(sc, run)
        nu = oracle_stops(run, chi, p.pattern_w, n, 50_000)
        # every nu stop comes from a delta-path inside I, so it ends in J
        delta_paths = [t for t in nu if check_delta_path(
            PathFunction.from_positions(run.positions[t - 4:t + 1]), p.delta).is_delta]
        assert all(0 <= run.positions[t] <= 2 for t in delta_paths)
        checked += len(delta_paths)
    assert checked > 0


def test_eval_D_consistency_with_window_checks():
    d = lazy_simple(0.01)
    rng = np.random.default_rng(2)
    for seed in range(10):
        run = simulate(d, 0, 20_000, seed)
        n, delta = 20, Fraction(1, 10)
        ok = eval_D(run, n, delta)
        starts = rng.integers(0, 20_000 - n, size=100)
        if ok:
            for s in starts:
                seg = PathFunction.from_positions(run.positions[s:s + n + 1])
                assert check_delta_path(seg, delta).is_delta
    bad = WalkRun(np.array([0, 1, 1, 1, 2, 3]))
    assert not eval_D(bad, 4, Fraction(1, 4))
    assert eval_D(bad, 4, Fraction(1, 2))
    assert eval_D(bad, 4, Fraction(1, 4), horizon=1) is True


def test_eval_B_and_C():
    run = WalkRun(np.array([0, 1, 2, 3, 2]))
    assert eval_B(run, 1, radius=3)
    assert not eval_B(run, 1, radius=2.9)
    assert eval_B(run, 1, radius=2, horizon=2)
    stops = StopTimes(np.array([1, 5, 9]))
    assert eval_C(stops, 2, threshold_base=math.sqrt(3))
    assert not eval_C(stops, 2, threshold_base=math.sqrt(3), horizon=8)


def test_eval_G_rules():
    p = (0.2, 0.2, 0.2, 0.2, 0.2)
    assert eval_G(p, [], 0.5) == (False, None)
    g, dev = eval_G(p, [1, 2, 3, 4, 5], 0.01)
    assert g and dev == pytest.approx(0.0)
    g, dev = eval_G(p, [1, 1, 1, 1, 1], 0.5)
    assert not g and dev == pytest.approx(0.8)
    assert eval_G(p, [1, 2, 3, 4, 5], -0.1)[0] is False


def test_desk_thresholds():
    th = Thresholds.for_n(12, t_effective=10**6)
    assert th.horizon_T == 10**6
    assert th.b_radius == pytest.approx((10 ** 0.25 * 2.45 / 2.4) ** 12)
    assert th.c_count == pytest.approx(1.1 ** 12)
    # the confinement radius stays above the diffusive scale sqrt(T)
    assert th.b_radius > math.sqrt(th.horizon_T)
    full = Thresholds.for_n(5)
    assert full.horizon_T == math.ceil(2.4 ** 10)
    assert full.b_radius == pytest.approx(2.45 ** 5)


def exact_segment_failure(d, n, delta):
    """P(a length-n segment is not a delta-path), by DP over (count, variation)."""
    cap = math.floor(Fraction(delta) * n)
    a = np.abs(d.steps)
    ok = np.zeros((cap + 1, cap + 1))
    ok[0, 0] = 1.0
    for _ in range(n):
        nxt = np.zeros_like(ok)
        for i, m in zip(a, d.pmf):
            if m == 0:
                continue
            if i == 1:
                nxt += m * ok
                continue
            # a non-unit step adds one to the count and i to the variation;
            # whatever leaves the table has failed for good
            if i <= cap:
                nxt[1:, i:] += m * ok[:-1, :cap + 1 - i]
        ok = nxt
    return 1.0 - ok.sum()


@pytest.mark.parametrize("law,n,delta", [
    (lambda: geometric_tail(0.01, 3.0), 20, Fraction(1, 4)),
    (lambda: geometric_tail(0.2, 1.0), 20, Fraction(1, 4)),
    (lambda: geometric_tail(0.3, 0.7), 12, Fraction(1, 3)),
    (lambda: lazy_simple(0.1), 16, Fraction(1, 8)),
])
def test_chernoff_envelope_bounds_exact_failure(law, n, delta):
    d = law()
    assert exact_segment_failure(d, n, delta) <= d_envelope_chernoff(d, n, delta)


def test_printed_segment_bound_can_undershoot():
    # the printed form drops the binomial factor, so it falls below the exact value
    d = geometric_tail(0.2, 1.0)
    exact = exact_segment_failure(d, 20, Fraction(1, 4))
    assert d_envelope_literal(0.2, 1.0, 20) < exact
    assert d1_factor(0.2, 1.0) == pytest.approx(0.2 * (1 + math.exp(-2) / (1 - math.exp(-1))))


def test_containment_on_a_small_batch():
    setup = TrialSetup(lazy_simple(0.02), 12, Fraction(1, 64), t_effective=200_000)
    for i in range(20):
        out = containment_trial(setup, seed_int(derive_seed(5, i, 0)), derive_seed(5, i, 1))
        r = out.report
        assert not r.violates_containment
        assert r.stops_nu <= r.stops_tau
        assert r.stops_disagree == r.stops_tau - r.stops_nu
        assert r.no_data == (r.stops_tau == 0)


@pytest.mark.parametrize("n", [10, 11, 12, 13, 14])
def test_margin_floor_lazy_point_mass_parity(n):
    # point mass at n*: the floor holds exactly when r and the distance to n+1 share parity
    from sceneryrec.reconstruct import derive_params, margin_terms
    from sceneryrec.scenery import Scenery
    from sceneryrec.walk import point_law
    delta = Fraction(1, 64)
    p = derive_params(n, delta, Scenery(-n, [1] * (2 * n + 1)))
    m = margin_terms(point_law(p.n_star), lazy_simple(0.02), p.offset_r, n).margin
    same_parity = (p.offset_r - (n + 1 - p.n_star)) % 2 == 0
    assert (m >= margin_floor(0.02, delta, n)) == same_parity


def test_margin_floor_fails_for_stationary_mu_at_desk_scale():
    from sceneryrec.reconstruct import derive_params, exact_chain_mu, margin_terms
    d = lazy_simple(0.02)
    for n in (11, 12):
        sc = IIDScenery(0).window(-n, n)
        p = derive_params(n, Fraction(1, 64), sc)
        m = margin_terms(exact_chain_mu(p, sc, d), d, p.offset_r, n).margin
        assert m < 0 < margin_floor(0.02, Fraction(1, 64), n)
