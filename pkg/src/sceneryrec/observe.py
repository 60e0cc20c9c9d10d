"""Observation streams and the pattern-based stopping times built on them."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, Union

import numpy as np

from .scenery import NUM_COLORS, IIDScenery, Pattern, Scenery
from .walk import WalkRun


@dataclass(frozen=True, eq=False)
class ObservationStream:
    colors: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.colors, dtype=np.int8)
        arr.setflags(write=False)
        object.__setattr__(self, "colors", arr)

    def __len__(self) -> int:
        return int(self.colors.size)

    def tobytes(self) -> bytes:
        return self.colors.astype(np.uint8).tobytes()


@dataclass(frozen=True, eq=False)
class StopTimes:
    times: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.times, dtype=np.int64)
        if arr.size > 1 and np.any(np.diff(arr) <= 0):
            raise ValueError("stop times must be strictly increasing")
        arr.setflags(write=False)
        object.__setattr__(self, "times", arr)

    def __len__(self) -> int:
        return int(self.times.size)

    def __iter__(self):
        return iter(self.times.tolist())

    def __eq__(self, other) -> bool:
        if isinstance(other, StopTimes):
            return np.array_equal(self.times, other.times)
        return NotImplemented


SceneryLike = Union[Scenery, IIDScenery]


def materialise(s: SceneryLike, a: int, b: int) -> Scenery:
    """The finite window ``[a, b]``; lazy sceneries grow on demand."""
    if isinstance(s, IIDScenery):
        return s.window(a, b)
    if not s.covers(a, b):
        raise IndexError(f"positions [{a}, {b}] leave the stored window [{s.lo}, {s.hi}]")
    return s.restrict(a, b)


def observe(s: SceneryLike, run: WalkRun) -> ObservationStream:
    pos = run.positions
    win = materialise(s, int(pos.min()), int(pos.max()))
    return ObservationStream(win.colors_at(pos))


def find_occurrences(hay: bytes, needle: bytes, start: int = 0) -> list:
    """Start indices of every (possibly overlapping) occurrence."""
    out = []
    i = hay.find(needle, start)
    while i >= 0:
        out.append(i)
        i = hay.find(needle, i + 1)
    return out


class StreamMatcher:
    """Single-pass matcher for a fixed pattern over a chunked colour stream.

    Only the last ``len(w) - 1`` colours are carried between chunks, so the
    stream itself is never stored. :meth:`feed` returns the absolute end
    times of the matches completed inside the chunk.
    """

    def __init__(self, w: Pattern):
        self.needle = w.tobytes()
        self.keep = len(w) - 1
        self._carry = b""
        self._t = 0  # absolute time of the next colour fed

    def feed(self, colors: np.ndarray) -> np.ndarray:
        buf = self._carry + np.asarray(colors, dtype=np.uint8).tobytes()
        base = self._t - len(self._carry)
        starts = find_occurrences(buf, self.needle)
        self._t += len(colors)
        self._carry = buf[-self.keep:] if self.keep else b""
        return np.asarray(starts, dtype=np.int64) + base + self.keep


def pattern_stops(chi: ObservationStream, w: Pattern, horizon: int) -> StopTimes:
    """All ``t <= horizon`` at which the last ``len(w)`` observations spell ``w``."""
    n = len(w) - 1
    hay = chi.colors[:horizon + 1].astype(np.uint8).tobytes()
    ends = np.asarray(find_occurrences(hay, w.tobytes()), dtype=np.int64) + n
    return StopTimes(ends)


def confined_windows(positions: np.ndarray, ends: Iterable[int], width: int,
                     lo: int, hi: int) -> np.ndarray:
    """Mask: did ``positions[t-width .. t]`` stay inside ``[lo, hi]`` for each end ``t``."""
    ends = np.asarray(list(ends), dtype=np.int64)
    if ends.size == 0:
        return np.zeros(0, dtype=bool)
    idx = ends[:, None] - np.arange(width + 1)[None, :]
    seg = positions[idx]
    return np.all((seg >= lo) & (seg <= hi), axis=1)


def oracle_stops(run: WalkRun, chi: ObservationStream, w: Pattern, n: int,
                 horizon: int) -> StopTimes:
    """Pattern stops whose generating stretch of the walk stayed in ``[-n, n]``.

    Needs the latent positions, so it exists only for simulated trials.
    """
    tau = pattern_stops(chi, w, horizon)
    keep = confined_windows(run.positions, tau.times, len(w) - 1, -n, n)
    return StopTimes(tau.times[keep])


# --------------------------------------------------------------------------
# prefix automaton


def failure_function(w) -> np.ndarray:
    """KMP border table: ``fail[k]`` is the longest proper border of ``w[:k]``."""
    w = np.asarray(getattr(w, "colors", w))
    m = w.size
    fail = np.zeros(m + 1, dtype=np.int64)
    k = 0
    for i in range(1, m):
        while k and w[i] != w[k]:
            k = fail[k]
        if w[i] == w[k]:
            k += 1
        fail[i + 1] = k
    return fail


def prefix_automaton(w) -> np.ndarray:
    """``delta[state, color-1]``: matched-prefix length after reading a colour.

    States run over ``0..len(w)``; state ``len(w)`` is a completed match and
    continues through its longest border, so overlapping matches are found.
    """
    w = np.asarray(getattr(w, "colors", w))
    m = w.size
    fail = failure_function(w)
    delta = np.zeros((m + 1, NUM_COLORS), dtype=np.int64)
    for state in range(m + 1):
        for c in range(1, NUM_COLORS + 1):
            k = state if state < m else fail[m]
            while k and w[k] != c:
                k = fail[k]
            delta[state, c - 1] = k + 1 if w[k] == c else 0
    return delta


def iter_chunks(a: np.ndarray, size: int) -> Iterator[np.ndarray]:
    for i in range(0, a.size, size):
        yield a[i:i + size]
