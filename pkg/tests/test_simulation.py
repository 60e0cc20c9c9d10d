from fractions import Fraction

import numpy as np
import pytest

from sceneryrec.observe import observe, oracle_stops, pattern_stops
from sceneryrec.paths import windows_failing
from sceneryrec.scenery import IIDScenery, Pattern
from sceneryrec.simulation import (
    TrialScanner, derive_seed, iter_walk, observed_arrays, scan, seed_int, stream_from_run,
)
from sceneryrec.walk import geometric_tail, lazy_simple, simulate


@pytest.mark.parametrize("chunk", [7, 1000, 1 << 16])
def test_scanner_agrees_with_whole_array_route(chunk):
    d = geometric_tail(0.2, 1.0, None, 6)
    sc = IIDScenery(21)
    T, r, n = 30_000, 5, 3
    run = simulate(d, 0, T + r, seed=3)
    chi = observe(sc, run)
    w = Pattern(sc.window(-1, 1).colors)
    scanner = TrialScanner(w, r, n, T, Fraction(1, 4), window_n=8)
    res = scan(scanner, stream_from_run(sc, run, chunk))

    tau = pattern_stops(chi, w, T).times
    nu = oracle_stops(run, chi, w, n, T).times
    assert res.tau.tolist() == tau.tolist()
    assert res.nu.tolist() == nu.tolist()
    assert res.tau_colors.tolist() == chi.colors[tau + r].tolist()
    assert res.nu_positions.tolist() == run.positions[nu].tolist()
    assert res.max_abs == int(np.abs(run.positions[:T + 1]).max())
    fails = windows_failing(run.increments[:T], 8, Fraction(1, 4))
    assert res.delta_failures == int(fails.sum())
    assert res.windows_checked == fails.size
    assert res.unresolved == 0


def test_stops_near_the_end_are_dropped_when_offset_unseen():
    sc = IIDScenery(1)
    run = simulate(lazy_simple(0.5), 0, 2_000, seed=0)
    w = Pattern([sc(0)])
    scanner = TrialScanner(w, 10, 5, 2_000, Fraction(1, 4))
    res = scan(scanner, stream_from_run(sc, run, 128))
    assert res.unresolved > 0 or res.tau.max() + 10 <= 2_000
    assert (res.tau + 10 <= 2_000).all()


def test_iter_walk_matches_simulate():
    d = lazy_simple(0.3)
    pos = np.concatenate(list(iter_walk(d, 2, 5_000, seed=7, chunk=333)))
    assert np.array_equal(pos, simulate(d, 2, 5_000, seed=7).positions)


def test_observed_arrays():
    sc = IIDScenery(4)
    run, chi = observed_arrays(sc, lazy_simple(0.1), 1_000, seed=2)
    assert len(run) == len(chi) == 1_001
    assert chi.colors.tolist() == [sc(int(x)) for x in run.positions]


def test_derived_seeds_are_stable_and_distinct():
    a = seed_int(derive_seed(7, 1, 0))
    assert a == seed_int(derive_seed(7, 1, 0))
    assert len({seed_int(derive_seed(7, i, k)) for i in range(50) for k in range(2)}) == 100
    assert a != seed_int(derive_seed(8, 1, 0))
