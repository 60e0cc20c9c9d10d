"""Increment laws, trajectory simulation and exact state distributions."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator, Optional, Sequence

import numpy as np

MASS_TOL = 1e-12
DEFAULT_TRUNCATION = 64


class InvalidDistribution(ValueError):
    """Raised when an increment law violates one of the walk conditions."""


@dataclass(frozen=True, eq=False)
class IncrementDistribution:
    """Symmetric law of ``S[t+1] - S[t]`` supported on ``[-bound, bound]``.

    ``pmf[k]`` is the mass of the step ``k - truncation_bound``. ``exact_pmf``
    carries the same law as fractions when it is known exactly.
    """

    epsilon: float
    decay_c: float
    pmf: np.ndarray
    family: str = "custom"
    exact_pmf: Optional[tuple] = field(default=None, repr=False)

    def __post_init__(self):
        pmf = np.asarray(self.pmf, dtype=float).copy()
        if pmf.ndim != 1 or pmf.size % 2 == 0:
            raise InvalidDistribution("pmf must have odd length 2*bound+1")
        pmf.setflags(write=False)
        object.__setattr__(self, "pmf", pmf)
        failures = [name for name, ok in self.conditions().items()
                    if not ok and name != "aperiodic"]
        if failures:
            raise InvalidDistribution(
                f"{self.family} law violates: {', '.join(failures)}")

    @property
    def truncation_bound(self) -> int:
        return (self.pmf.size - 1) // 2

    @property
    def steps(self) -> np.ndarray:
        b = self.truncation_bound
        return np.arange(-b, b + 1)

    @property
    def p_zero(self) -> float:
        return float(self.pmf[self.truncation_bound])

    @property
    def gamma(self) -> float:
        """Mass of each unit step, ``(1 - epsilon) / 2``."""
        return float(self.mass(1))

    @property
    def max_jump(self) -> int:
        nz = np.nonzero(self.pmf)[0]
        return int(max(abs(nz[0] - self.truncation_bound), abs(nz[-1] - self.truncation_bound)))

    def mass(self, i: int) -> float:
        b = self.truncation_bound
        if abs(i) > b:
            return 0.0
        return float(self.pmf[i + b])

    @property
    def jump_law(self) -> dict:
        """``{i: P(|step| = i)}`` for i >= 0 with nonzero mass."""
        b = self.truncation_bound
        out = {0: float(self.pmf[b])} if self.pmf[b] > 0 else {}
        for i in range(1, b + 1):
            m = float(self.pmf[b + i] + self.pmf[b - i])
            if m > 0:
                out[i] = m
        return out

    @property
    def variance(self) -> float:
        return float(np.sum(self.steps.astype(float) ** 2 * self.pmf))

    def conditions(self) -> dict:
        """Evaluate the five structural checks; ``aperiodic`` may fail (simple walk)."""
        b = self.truncation_bound
        pmf = self.pmf
        total_ok = bool(np.all(pmf >= 0)) and abs(pmf.sum() - 1.0) <= MASS_TOL
        nonunit = float(pmf.sum() - pmf[b + 1] - pmf[b - 1]) if b >= 1 else float(pmf.sum())
        eps_ok = abs(nonunit - self.epsilon) <= MASS_TOL
        tail_ok = True
        if nonunit > 0:
            for i, m in self.jump_law.items():
                if i == 1:
                    continue
                cap = 1.0 if i == 0 else math.exp(-self.decay_c * i)
                if m / nonunit > cap * (1 + 1e-12) + 1e-15:
                    tail_ok = False
                    break
        sym_ok = bool(np.allclose(pmf, pmf[::-1], rtol=0, atol=1e-15))
        return {
            "total_mass": total_ok,
            "nonunit_mass": eps_ok,
            "exponential_tail": tail_ok,
            "symmetric": sym_ok,
            "aperiodic": bool(pmf[b] > 0),
        }

    def reflected(self) -> "IncrementDistribution":
        # symmetric laws are their own mirror image
        return self


def _exact_lazy_pmf(epsilon) -> Optional[tuple]:
    if isinstance(epsilon, (int, Fraction)):
        e = Fraction(epsilon)
        g = (1 - e) / 2
        return (g, e, g)
    return None


def lazy_simple(epsilon) -> IncrementDistribution:
    """Stay put with probability ``epsilon``, otherwise step +-1 evenly.

    Passing ``epsilon`` as an ``int`` or ``Fraction`` also records the law
    exactly, which enables rational-mode state distributions.
    """
    if not 0 <= epsilon < 1:
        raise InvalidDistribution(f"epsilon must lie in [0, 1), got {epsilon}")
    e = float(epsilon)
    g = (1.0 - e) / 2.0
    return IncrementDistribution(
        epsilon=e, decay_c=math.inf, pmf=np.array([g, e, g]),
        family="lazy_simple", exact_pmf=_exact_lazy_pmf(epsilon))


def max_tail_fraction(decay_c: float, truncation_bound: int = DEFAULT_TRUNCATION) -> float:
    """Largest share of the non-unit mass a geometric tail on |i| >= 2 may carry.

    The tail conditional law is ``(1-f) e^{-c(i-2)} (1-e^{-c}) / Z`` and must
    stay under ``e^{-c i}`` for every ``i``; the binding case is ``i = 2``.
    """
    q = math.exp(-decay_c)
    z = 1.0 - q ** (truncation_bound - 1)
    return min(1.0, q * q * z / (1.0 - q))


def geometric_tail(epsilon: float, decay_c: float, p_zero_frac: Optional[float] = None,
                   truncation_bound: int = DEFAULT_TRUNCATION) -> IncrementDistribution:
    """Non-unit mass ``epsilon`` split between 0 and a symmetric geometric tail.

    The tail on ``|i| >= 2`` has ratio ``exp(-decay_c)`` and is renormalised
    after truncation at ``truncation_bound``. ``p_zero_frac=None`` picks the
    heaviest tail the exponential-tail condition allows.
    """
    if not 0 < epsilon < 1:
        raise InvalidDistribution(f"nonunit_mass: epsilon must lie in (0, 1), got {epsilon}")
    if decay_c <= 0:
        raise InvalidDistribution("exponential_tail: decay_c must be positive")
    if truncation_bound < 1:
        raise InvalidDistribution("truncation_bound must be at least 1")
    fmax = max_tail_fraction(decay_c, truncation_bound) if truncation_bound >= 2 else 0.0
    if p_zero_frac is None:
        p_zero_frac = 1.0 - fmax
    if not 0 < p_zero_frac <= 1:
        raise InvalidDistribution(
            f"aperiodic: p_zero_frac must lie in (0, 1], got {p_zero_frac}")
    tail = 1.0 - p_zero_frac
    if tail > fmax * (1 + 1e-12):
        raise InvalidDistribution(
            f"exponential_tail: tail share {tail:.6g} of the non-unit mass exceeds "
            f"{fmax:.6g}, the most allowed by P(|step|=i | non-unit) <= exp(-{decay_c} i)")
    b = truncation_bound
    pmf = np.zeros(2 * b + 1)
    pmf[b] = epsilon * p_zero_frac
    pmf[b + 1] = pmf[b - 1] = (1.0 - epsilon) / 2.0
    if tail > 0:
        i = np.arange(2, b + 1)
        w = np.exp(-decay_c * (i - 2))
        w /= w.sum()
        half = 0.5 * epsilon * tail * w
        pmf[b + i] = half
        pmf[b - i] = half
    # absorb rounding so the total is 1 to machine precision
    pmf[b] += 1.0 - pmf.sum()
    return IncrementDistribution(epsilon=epsilon, decay_c=decay_c, pmf=pmf,
                                 family="geometric_tail")


def truncation_error(decay_c: float, truncation_bound: int) -> float:
    q = math.exp(-decay_c)
    return q ** truncation_bound / (1.0 - q)


# --------------------------------------------------------------------------
# trajectories


@dataclass(frozen=True, eq=False)
class WalkRun:
    positions: np.ndarray
    seed: object = None

    def __len__(self) -> int:
        return int(self.positions.size)

    @property
    def horizon(self) -> int:
        return len(self) - 1

    @property
    def increments(self) -> np.ndarray:
        return np.diff(self.positions)

    def reflected(self) -> "WalkRun":
        return WalkRun(-self.positions, self.seed)


def iter_steps(d: IncrementDistribution, horizon: int, seed,
               chunk: int = 1 << 16) -> Iterator[np.ndarray]:
    """Yield the increments of one walk in chunks (inverse-CDF sampling).

    One uniform is drawn per step, so the concatenated output does not depend
    on ``chunk``.
    """
    rng = np.random.default_rng(seed)
    cdf = np.cumsum(d.pmf)
    cdf[-1] = 1.0
    steps = d.steps.astype(np.int64)
    done = 0
    while done < horizon:
        m = min(chunk, horizon - done)
        u = rng.random(m)
        yield steps[np.searchsorted(cdf, u, side="right")]
        done += m


def simulate(d: IncrementDistribution, start: int, horizon: int, seed) -> WalkRun:
    if horizon < 0:
        raise ValueError("horizon must be nonnegative")
    pos = np.empty(horizon + 1, dtype=np.int64)
    pos[0] = start
    k = 1
    acc = start
    for inc in iter_steps(d, horizon, seed):
        block = acc + np.cumsum(inc)
        pos[k:k + inc.size] = block
        k += inc.size
        acc = int(block[-1])
    return WalkRun(pos, seed)


# --------------------------------------------------------------------------
# exact state distributions


@dataclass(frozen=True, eq=False)
class StateDistribution:
    """Masses on the integer interval starting at ``support_offset``.

    ``masses`` is a float array, or a tuple of ``Fraction`` in rational mode.
    """

    support_offset: int
    masses: object

    @property
    def exact(self) -> bool:
        return isinstance(self.masses, tuple)

    def __len__(self) -> int:
        return len(self.masses)

    @property
    def support(self) -> range:
        return range(self.support_offset, self.support_offset + len(self))

    def mass(self, x: int):
        k = x - self.support_offset
        if 0 <= k < len(self):
            return self.masses[k]
        return Fraction(0) if self.exact else 0.0

    def total(self):
        return sum(self.masses) if self.exact else float(np.sum(self.masses))

    def mass_in(self, a: int, b: int):
        lo = max(a, self.support_offset) - self.support_offset
        hi = min(b, self.support_offset + len(self) - 1) - self.support_offset
        if hi < lo:
            return Fraction(0) if self.exact else 0.0
        if self.exact:
            return sum(self.masses[lo:hi + 1], Fraction(0))
        return float(np.sum(self.masses[lo:hi + 1]))

    def mass_outside(self, a: int, b: int):
        return self.total() - self.mass_in(a, b)

    def as_array(self) -> np.ndarray:
        return np.array([float(m) for m in self.masses]) if self.exact else np.asarray(self.masses)

    def reflected(self) -> "StateDistribution":
        hi = self.support_offset + len(self) - 1
        m = self.masses[::-1]
        return StateDistribution(-hi, tuple(m) if self.exact else np.array(m))


def point_law(x: int, exact: bool = False) -> StateDistribution:
    return StateDistribution(x, (Fraction(1),) if exact else np.array([1.0]))


def uniform_law(points: Sequence[int], exact: bool = False) -> StateDistribution:
    lo, hi = min(points), max(points)
    if exact:
        m = [Fraction(0)] * (hi - lo + 1)
        for p in points:
            m[p - lo] += Fraction(1, len(points))
        return StateDistribution(lo, tuple(m))
    m = np.zeros(hi - lo + 1)
    for p in points:
        m[p - lo] += 1.0 / len(points)
    return StateDistribution(lo, m)


def _convolve_exact(a: tuple, b: tuple) -> list:
    out = [Fraction(0)] * (len(a) + len(b) - 1)
    for i, x in enumerate(a):
        if x == 0:
            continue
        for j, y in enumerate(b):
            if y:
                out[i + j] += x * y
    return out


def _trim(offset: int, masses, exact: bool):
    """Drop exactly-zero cells at both ends of the support."""
    m = list(masses) if exact else masses
    n = len(m)
    lo = 0
    while lo < n - 1 and m[lo] == 0:
        lo += 1
    hi = n - 1
    while hi > lo and m[hi] == 0:
        hi -= 1
    cut = m[lo:hi + 1]
    return offset + lo, (tuple(cut) if exact else np.array(cut))


def state_distribution(d: IncrementDistribution, start_law: StateDistribution, t: int,
                       confine: Optional[tuple] = None, exact: Optional[bool] = None
                       ) -> StateDistribution:
    """Exact law of ``S_t`` by ``t`` convolutions of the increment law.

    With ``confine=(a, b)`` mass leaving ``[a, b]`` at any step is killed, so
    the result is the sub-probability ``P(S_t = x, S_s in [a, b] for s <= t)``.
    ``exact=True`` runs in rational arithmetic and needs ``d.exact_pmf``.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    if exact is None:
        exact = start_law.exact
    if exact and d.exact_pmf is None:
        raise ValueError("rational mode needs an exactly specified increment law")
    b = d.truncation_bound
    if exact:
        kernel = tuple(d.exact_pmf)
        offset = start_law.support_offset
        masses = tuple(Fraction(m) for m in start_law.masses)
    else:
        kernel = d.pmf
        offset = start_law.support_offset
        masses = np.asarray(start_law.as_array(), dtype=float)
    if confine is not None:
        lo, hi = confine
        if offset < lo or offset + len(masses) - 1 > hi:
            raise ValueError("start law must be supported inside the confining interval")
    for _ in range(t):
        if exact:
            masses = _convolve_exact(masses, kernel)
        else:
            masses = np.convolve(masses, kernel)
        offset -= b
        if confine is not None:
            lo, hi = confine
            a0 = max(lo - offset, 0)
            a1 = min(hi - offset, len(masses) - 1)
            masses = masses[a0:a1 + 1]
            offset += a0
        offset, masses = _trim(offset, masses, exact)
    if exact:
        masses = tuple(masses)
    return StateDistribution(offset, masses)


def lazy_state_mass(epsilon, t: int, x: int):
    """Closed-form ``P(S_t = x)`` for the lazy simple walk started at 0.

    Sums over the number ``s`` of zero steps; the remaining ``t - s`` unit
    steps need ``(t - s + x) / 2`` positive ones, so only ``s`` with
    ``t - s + x`` even contribute. Exact when ``epsilon`` is a ``Fraction``.
    """
    x = abs(x)
    if x > t:
        return 0 * epsilon
    if isinstance(epsilon, (int, Fraction)):
        eps = Fraction(epsilon)
        gam = (1 - eps) / 2
    else:
        eps = float(epsilon)
        gam = (1.0 - eps) / 2.0
    total = 0 * eps
    for s in range(0, t - x + 1):
        if (t - s + x) % 2:
            continue
        total += math.comb(t, s) * math.comb(t - s, (t - s + x) // 2) * eps ** s * gam ** (t - s)
    return total


def decay_ratio(d: IncrementDistribution, t: int, x: int, exact: bool = False):
    """``P(S_t = x + 1) / P(S_t = x)`` for the walk started at the origin."""
    law = state_distribution(d, point_law(0, exact=exact), t)
    den = law.mass(x)
    if den == 0:
        raise ZeroDivisionError(f"P(S_{t} = {x}) is zero")
    return law.mass(x + 1) / den


def decay_ratio_two_step(d: IncrementDistribution, t: int, x: int, exact: bool = False):
    """``P(S_t = x + 2) / P(S_t = x)``; compares cells of equal parity."""
    law = state_distribution(d, point_law(0, exact=exact), t)
    den = law.mass(x)
    if den == 0:
        raise ZeroDivisionError(f"P(S_{t} = {x}) is zero")
    return law.mass(x + 2) / den
