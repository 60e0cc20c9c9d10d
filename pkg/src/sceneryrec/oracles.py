"""Exact small-instance checks with known answers, run as one report."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Optional

from .paths import count_delta_paths_dp, enumerate_delta_paths, lemma2_bound
from .walk import lazy_simple, lazy_state_mass, point_law, state_distribution, uniform_law

# the worked example: simple walk, mu uniform on {1, 3}, four steps, window [-4, 4]
EXAMPLE_SCENERY = (2, 4, 3, 2, 4, 5, 1, 5, 3)
EXAMPLE_MU_SUPPORT = (1, 3)
EXAMPLE_R = 4
EXAMPLE_N = 4


@dataclass(frozen=True)
class OracleCheck:
    name: str
    expected: object
    computed: object
    passed: bool

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"{tag}  {self.name}: expected {self.expected}, computed {self.computed}"


def _example_terms(dp: Callable, exact: bool) -> tuple:
    d = lazy_simple(Fraction(0) if exact else 0.0)
    mu = uniform_law(EXAMPLE_MU_SUPPORT, exact=exact)
    law = dp(d, mu, EXAMPLE_R)
    n = EXAMPLE_N
    hit = law.mass(n + 1)
    out = law.total() - law.mass_in(-n, n + 1)
    return hit, out, (hit - out) / 2


def verify_oracles(dp: Optional[Callable] = None, decay_t: int = 40,
                   lemma2_n: tuple = (6, 8, 10, 12)) -> list:
    """Every exact check, each with its expected and computed value.

    ``dp`` replaces the state-distribution routine (signature of
    ``state_distribution(d, start_law, t)``), which lets a test inject faults.
    """
    dp = dp or state_distribution
    checks = []

    def add(name, expected, computed, ok):
        checks.append(OracleCheck(name, expected, computed, bool(ok)))

    hit, out, margin = _example_terms(dp, exact=True)
    add("example P(S_4 = 5), rational", Fraction(5, 32), hit, hit == Fraction(5, 32))
    add("example P(S_4 outside [-4, 5]), rational", Fraction(1, 32), out, out == Fraction(1, 32))
    add("example margin, rational", Fraction(1, 16), margin, margin == Fraction(1, 16))
    hit_f, out_f, margin_f = _example_terms(dp, exact=False)
    add("example P(S_4 = 5), float", 5 / 32, hit_f, abs(hit_f - 5 / 32) <= 1e-12)
    add("example P(S_4 outside [-4, 5]), float", 1 / 32, out_f, abs(out_f - 1 / 32) <= 1e-12)

    for eps in (Fraction(0), Fraction(1, 10), Fraction(3, 10)):
        d = lazy_simple(eps)
        worst = None
        for t in range(13):
            law = dp(d, point_law(0, exact=True), t)
            for x in range(-t - 1, t + 2):
                if law.mass(x) != lazy_state_mass(eps, t, x):
                    worst = (t, x, law.mass(x), lazy_state_mass(eps, t, x))
                    break
            if worst:
                break
        add(f"state law vs closed form, eps={eps}, t<=12", "identical",
            "identical" if worst is None else f"differs at (t, x)={worst[:2]}", worst is None)

    # one-step ratio for the simple walk; two-step (equal parity) ratio for both
    for eps, step, gap in ((Fraction(0), 1, 1), (Fraction(0), 2, 2), (Fraction(1, 5), 2, 2)):
        d = lazy_simple(eps)
        worst = Fraction(-1)
        where = None
        for t in range(decay_t + 1):
            law = dp(d, point_law(0, exact=True), t)
            for x in range(0, t + 1):
                den = law.mass(x)
                if den == 0:
                    continue
                slack = law.mass(x + step) / den - Fraction(t - x, t + x + gap)
                if slack > worst:
                    worst, where = slack, (t, x)
        add(f"P(S_t=x+{step})/P(S_t=x) <= (t-x)/(t+x+{gap}), eps={eps}, t<={decay_t}",
            "max slack <= 0", f"max slack {float(worst):.3g} at {where}", worst <= 0)

    for n in lemma2_n:
        for delta in (Fraction(1, 5), Fraction(1, 4), Fraction(1, 3)):
            for mj in (2, 3):
                cnt = enumerate_delta_paths(n, delta, max_jump=mj).count
                dp_cnt = count_delta_paths_dp(n, delta, mj)
                bound = lemma2_bound(n, delta)
                add(f"delta-path count n={n} delta={delta} max_jump={mj}",
                    f"= {dp_cnt} and <= {bound:.6g}", cnt, cnt == dp_cnt and cnt <= bound)
    for n, delta in ((6, Fraction(1, 10)), (8, Fraction(1, 10)), (6, Fraction(1, 7))):
        cnt = enumerate_delta_paths(n, delta, max_jump=2).count
        add(f"delta-path count n={n} delta={delta} (delta n < 1)", 2 ** n, cnt, cnt == 2 ** n)
    return checks


def report(checks: list) -> str:
    lines = [c.line() for c in checks]
    failed = sum(not c.passed for c in checks)
    lines.append(f"{len(checks) - failed}/{len(checks)} checks passed")
    return "\n".join(lines)


def all_passed(checks: list) -> bool:
    return all(c.passed for c in checks)

