import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sceneryrec.walk import (
    IncrementDistribution, InvalidDistribution, decay_ratio, decay_ratio_two_step,
    geometric_tail, iter_steps, lazy_simple, lazy_state_mass, max_tail_fraction, point_law,
    simulate, state_distribution, uniform_law,
)


def brute_lazy_mass(eps, t, x):
    # sum over all 3^t step sequences
    import itertools
    g = (1 - eps) / 2
    total = 0 * eps
    for seq in itertools.product((-1, 0, 1), repeat=t):
        if sum(seq) == x:
            p = 1
            for s in seq:
                p *= eps if s == 0 else g
            total += p
    return total


def test_lazy_simple_laws():
    d = lazy_simple(0.2)
    assert d.pmf.tolist() == pytest.approx([0.4, 0.2, 0.4])
    assert d.gamma == pytest.approx(0.4)
    assert d.p_zero == pytest.approx(0.2)
    assert d.variance == pytest.approx(0.8)
    assert all(d.conditions().values())


def test_simple_walk_is_allowed_but_flagged_periodic():
    d = lazy_simple(0)
    cond = d.conditions()
    assert cond["aperiodic"] is False
    assert all(v for k, v in cond.items() if k != "aperiodic")
    assert d.exact_pmf == (Fraction(1, 2), Fraction(0), Fraction(1, 2))


@pytest.mark.parametrize("eps", [-0.1, 1.0, 1.5])
def test_lazy_simple_rejects_bad_epsilon(eps):
    with pytest.raises(InvalidDistribution):
        lazy_simple(eps)


def test_geometric_tail_default_is_valid_and_heaviest():
    d = geometric_tail(0.01, 3.0)
    assert all(d.conditions().values())
    f = max_tail_fraction(3.0)
    tail = 1 - d.p_zero / 0.01
    assert tail == pytest.approx(f, rel=1e-9)
    # conditional law of |step| = 2 sits exactly on the cap
    assert d.jump_law[2] / 0.01 == pytest.approx(math.exp(-6), rel=1e-9)
    assert d.max_jump == 64


def test_geometric_tail_half_zero_violates_tail_condition():
    # with half the non-unit mass in the tail, P(|step|=2 | non-unit) is far above e^{-2c}
    with pytest.raises(InvalidDistribution, match="exponential_tail"):
        geometric_tail(0.1, 2.0, 0.5, 64)


def test_geometric_tail_rejects_zero_free_law():
    with pytest.raises(InvalidDistribution):
        geometric_tail(0.1, 2.0, 0.0)


def test_custom_asymmetric_law_rejected():
    with pytest.raises(InvalidDistribution, match="symmetric"):
        IncrementDistribution(0.1, 1.0, np.array([0.5, 0.1, 0.4]))


def test_custom_bad_mass_rejected():
    with pytest.raises(InvalidDistribution, match="total_mass"):
        IncrementDistribution(0.1, 1.0, np.array([0.5, 0.1, 0.5]))


def test_mean_and_variance_of_simple_walk():
    d = lazy_simple(0)
    inc = np.concatenate(list(iter_steps(d, 1_000_000, seed=5)))
    assert set(np.unique(inc).tolist()) == {-1, 1}
    assert abs(inc.mean()) <= 3 / math.sqrt(inc.size)
    assert inc.var() == pytest.approx(1.0, abs=1e-3)


def test_simulation_is_chunk_independent():
    d = geometric_tail(0.3, 1.0)
    a = np.concatenate(list(iter_steps(d, 10_000, seed=3, chunk=77)))
    b = np.concatenate(list(iter_steps(d, 10_000, seed=3)))
    assert np.array_equal(a, b)
    run = simulate(d, 4, 10_000, seed=3)
    assert run.positions[0] == 4
    assert np.array_equal(run.increments, b)


def test_empirical_law_matches_exact_state_distribution():
    d = lazy_simple(0.3)
    t, N = 10, 40_000
    rng = np.random.default_rng(8)
    ends = np.concatenate([[0], np.cumsum(rng.choice([-1, 0, 1], size=(N, t),
                                                    p=[0.35, 0.3, 0.35]), axis=1)[:, -1]])[1:]
    law = state_distribution(d, point_law(0), t)
    emp = np.bincount(ends + t, minlength=2 * t + 1) / N
    exact = np.array([law.mass(x) for x in range(-t, t + 1)])
    assert 0.5 * np.abs(emp - exact).sum() <= 5 / math.sqrt(N)


@pytest.mark.parametrize("eps", [0.0, 0.1, 0.3])
def test_dp_matches_closed_form(eps):
    d = lazy_simple(eps)
    for t in range(13):
        law = state_distribution(d, point_law(0), t)
        assert law.total() == pytest.approx(1.0, abs=1e-12)
        for x in range(-t - 2, t + 3):
            assert law.mass(x) == pytest.approx(lazy_state_mass(eps, t, x), abs=1e-10)


@pytest.mark.parametrize("eps", [Fraction(0), Fraction(1, 3)])
def test_closed_form_matches_brute_force_exactly(eps):
    for t in range(7):
        for x in range(-t, t + 1):
            assert lazy_state_mass(eps, t, x) == brute_lazy_mass(eps, t, x)


def test_rational_mode_is_exact():
    d = lazy_simple(Fraction(1, 10))
    law = state_distribution(d, point_law(0, exact=True), 6)
    assert law.exact
    assert law.total() == 1
    assert law.mass(6) == Fraction(9, 20) ** 6


def test_rational_mode_needs_exact_law():
    with pytest.raises(ValueError):
        state_distribution(lazy_simple(0.1), point_law(0, exact=True), 3)


def test_confinement_kills_mass():
    d = lazy_simple(0)
    law = state_distribution(d, point_law(0), 2, confine=(-1, 1))
    # paths +1+1 and -1-1 leave [-1, 1] at step 2
    assert law.total() == pytest.approx(0.5)
    assert law.mass(0) == pytest.approx(0.5)
    law3 = state_distribution(d, point_law(0, exact=False), 3, confine=(0, 5))
    # never below 0: the only allowed first step is +1
    assert law3.total() == pytest.approx(3 / 8)


def test_example_hitting_probabilities_exact():
    d = lazy_simple(Fraction(0))
    law = state_distribution(d, uniform_law([1, 3], exact=True), 4)
    assert law.mass(5) == Fraction(5, 32)
    assert law.mass_outside(-4, 5) == Fraction(1, 32)


def test_one_step_decay_ratio_can_exceed_the_simple_walk_bound():
    # with lazy steps the next cell may be heavier: S_1 = 1 has mass 0.4 against 0.2 at 0
    d = lazy_simple(Fraction(1, 5))
    assert decay_ratio(d, 1, 0, exact=True) == 2
    assert Fraction(1 - 0, 1 + 0 + 1) < 2


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 30), st.data(), st.sampled_from([Fraction(0), Fraction(1, 5),
                                                     Fraction(1, 2)]))
def test_two_step_decay_ratio_bound(t, data, eps):
    x = data.draw(st.integers(0, t))
    d = lazy_simple(eps)
    law = state_distribution(d, point_law(0, exact=True), t)
    if law.mass(x) == 0:
        return
    assert decay_ratio_two_step(d, t, x, exact=True) <= Fraction(t - x, t + x + 2)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 40), st.data())
def test_simple_walk_one_step_decay_bound(t, data):
    x = data.draw(st.integers(0, t))
    if (t - x) % 2:
        return
    assert decay_ratio(lazy_simple(0), t, x) <= (t - x) / (t + x + 1) + 1e-12


def test_decay_ratio_zero_denominator():
    with pytest.raises(ZeroDivisionError):
        decay_ratio(lazy_simple(0), 3, 0)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.01, 0.9), st.floats(0.5, 4.0), st.integers(2, 40))
def test_geometric_tail_default_always_satisfies_conditions(eps, c, b):
    d = geometric_tail(eps, c, None, b)
    assert all(d.conditions().values())
    assert d.pmf.sum() == pytest.approx(1.0, abs=1e-12)
