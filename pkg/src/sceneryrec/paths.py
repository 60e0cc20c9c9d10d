"""delta-paths: predicates, exhaustive enumeration and the counting bound."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator, Sequence

import numpy as np

ENUMERATION_LIMIT = 14


class BudgetExceeded(RuntimeError):
    pass


def as_fraction(x) -> Fraction:
    """Exact rational for a user-supplied fraction (``0.3`` becomes ``3/10``)."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, str):
        return Fraction(x)
    return Fraction(x).limit_denominator(10**9)


@dataclass(frozen=True)
class PathFunction:
    start: int
    steps: tuple

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(int(s) for s in self.steps))

    @classmethod
    def from_positions(cls, positions: Sequence[int]) -> "PathFunction":
        pos = [int(p) for p in positions]
        return cls(pos[0], tuple(b - a for a, b in zip(pos, pos[1:])))

    @property
    def n(self) -> int:
        return len(self.steps)

    @property
    def positions(self) -> np.ndarray:
        return self.start + np.concatenate([[0], np.cumsum(self.steps, dtype=np.int64)])


@dataclass(frozen=True)
class DeltaPathReport:
    is_delta: bool
    nonunit_count: int
    nonunit_variation: int


@dataclass(frozen=True)
class PathBudget:
    delta: Fraction
    n: int
    entropy_H: float

    @classmethod
    def of(cls, n: int, delta) -> "PathBudget":
        d = as_fraction(delta)
        if not 0 < d < Fraction(1, 2):
            raise ValueError("delta must lie in (0, 1/2)")
        return cls(d, n, binary_entropy(float(d)))

    @property
    def limit(self) -> Fraction:
        return self.delta * self.n


def nonunit_stats(steps: Sequence[int]) -> tuple:
    a = np.abs(np.asarray(steps, dtype=np.int64))
    mask = a != 1
    return int(mask.sum()), int(a[mask].sum())


def check_delta_path(p: PathFunction, delta) -> DeltaPathReport:
    """Non-unit steps number at most delta*n and move at most delta*n in total."""
    if p.n < 1:
        raise ValueError("a path needs at least one step")
    limit = as_fraction(delta) * p.n
    count, var = nonunit_stats(p.steps)
    return DeltaPathReport(count <= limit and var <= limit, count, var)


def check_k_delta_path(p: PathFunction, k, delta, n: int) -> bool:
    """(k, delta)-path: ``k*n`` steps, fewer than delta*n non-unit, variation under delta*n."""
    length = as_fraction(k) * n
    if length.denominator != 1 or p.n != length:
        raise ValueError(f"path has {p.n} steps, expected k*n = {length}")
    limit = as_fraction(delta) * n
    count, var = nonunit_stats(p.steps)
    return count < limit and var < limit


def nonunit_values(max_jump: int) -> tuple:
    """Admissible non-unit step values, in increasing order."""
    return tuple(sorted([0] + [s * j for j in range(2, max_jump + 1) for s in (1, -1)]))


def _skeletons(n: int, limit: int, max_jump: int) -> Iterator[tuple]:
    """Placements and values of the non-unit steps, lexicographic in placement."""
    values = nonunit_values(max_jump)
    for k in range(0, min(limit, n) + 1):
        for where in itertools.combinations(range(n), k):
            for vals in itertools.product(values, repeat=k):
                if sum(abs(v) for v in vals) <= limit:
                    yield where, vals


@dataclass
class DeltaPathCount:
    count: int
    n: int
    delta: Fraction
    max_jump: int
    start: int = 0

    def __iter__(self) -> Iterator[PathFunction]:
        return iter_delta_paths(self.n, self.delta, self.start, self.max_jump)


def enumerate_delta_paths(n: int, delta, start: int = 0, max_jump: int = 2,
                          limit: int = ENUMERATION_LIMIT) -> DeltaPathCount:
    """Count every delta-path of length ``n`` with non-unit steps up to ``max_jump``.

    Each placement of the non-unit steps and their values is visited once;
    the unit steps around it contribute ``2**(n - k)`` sign choices.
    """
    if n > limit:
        raise BudgetExceeded(f"n={n} exceeds the enumeration budget n <= {limit}")
    d = as_fraction(delta)
    cap = math.floor(d * n)
    total = 0
    for where, _ in _skeletons(n, cap, max_jump):
        total += 1 << (n - len(where))
    return DeltaPathCount(total, n, d, max_jump, start)


def iter_delta_paths(n: int, delta, start: int = 0, max_jump: int = 2,
                     limit: int = ENUMERATION_LIMIT) -> Iterator[PathFunction]:
    if n > limit:
        raise BudgetExceeded(f"n={n} exceeds the enumeration budget n <= {limit}")
    cap = math.floor(as_fraction(delta) * n)
    for where, vals in _skeletons(n, cap, max_jump):
        free = [i for i in range(n) if i not in where]
        for signs in itertools.product((-1, 1), repeat=len(free)):
            steps = [0] * n
            for i, v in zip(where, vals):
                steps[i] = v
            for i, s in zip(free, signs):
                steps[i] = s
            yield PathFunction(start, tuple(steps))


def count_delta_paths_dp(n: int, delta, max_jump: int) -> int:
    """Independent count by dynamic programming over (non-unit count, variation)."""
    cap = math.floor(as_fraction(delta) * n)
    values = nonunit_values(max_jump)
    # ways[k][v]: step sequences so far with k non-unit steps of variation v
    ways = np.zeros((cap + 1, cap + 1), dtype=object)
    ways[0, 0] = 1
    for _ in range(n):
        nxt = np.zeros_like(ways)
        for k in range(cap + 1):
            for v in range(cap + 1):
                cur = ways[k, v]
                if not cur:
                    continue
                nxt[k, v] += 2 * cur
                if k < cap:
                    for val in values:
                        nv = v + abs(val)
                        if nv <= cap:
                            nxt[k + 1, nv] += cur
        ways = nxt
    return int(sum(ways.flat))


def binary_entropy(delta: float) -> float:
    if delta in (0, 1):
        return 0.0
    return -delta * math.log2(delta) - (1 - delta) * math.log2(1 - delta)


def lemma2_bound(n: int, delta, variant: str = "standard") -> float:
    """Upper bound on the number of delta-paths of length ``n``.

    ``standard``: ``2^{n(1+H(d)+3d)}``, the exponent the counting argument
    actually delivers. ``statement``: the sharper ``2^{n(1+H(d)+2d)}`` as
    stated. ``ten_delta``: bound for (10d, d)-paths of length ``10 d n``.
    """
    d = float(as_fraction(delta))
    if not 0 < d < 0.5:
        raise ValueError("delta must lie in (0, 1/2)")
    if variant == "standard":
        return 2.0 ** (n * (1 + binary_entropy(d) + 3 * d))
    if variant == "statement":
        return 2.0 ** (n * (1 + binary_entropy(d) + 2 * d))
    if variant == "ten_delta":
        return 2.0 ** (10 * d * n * (1 + binary_entropy(0.1) + 0.3))
    raise ValueError(f"unknown variant {variant!r}")


def windows_failing(steps: np.ndarray, n: int, delta) -> np.ndarray:
    """For each length-``n`` window of ``steps``, whether it fails the delta-path test.

    Entry ``j`` covers ``steps[j:j+n]``, i.e. the path segment ``[j, j+n]``.
    """
    a = np.abs(np.asarray(steps, dtype=np.int64))
    if n < 1:
        # single points are trivially delta-paths
        return np.zeros(a.size + 1, dtype=bool)
    if a.size < n:
        return np.zeros(0, dtype=bool)
    mask = (a != 1).astype(np.int64)
    var = np.where(a != 1, a, 0)
    cm = np.concatenate([[0], np.cumsum(mask)])
    cv = np.concatenate([[0], np.cumsum(var)])
    wm = cm[n:] - cm[:-n]
    wv = cv[n:] - cv[:-n]
    limit = as_fraction(delta) * n
    # integer comparisons against an exact rational threshold
    cap = math.floor(limit)
    return (wm > cap) | (wv > cap)

