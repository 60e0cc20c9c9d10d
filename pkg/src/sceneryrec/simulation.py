"""Single-pass trial scanning: walk and observations are consumed chunk by chunk."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Optional

import numpy as np

from .observe import ObservationStream, StreamMatcher, materialise
from .paths import windows_failing
from .scenery import Pattern
from .walk import IncrementDistribution, WalkRun, iter_steps

CHUNK = 1 << 16


def derive_seed(master: int, *path: int) -> np.random.SeedSequence:
    """Seed for ``path`` under ``master``; distinct paths give independent streams."""
    return np.random.SeedSequence(entropy=int(master), spawn_key=tuple(int(p) for p in path))


def seed_int(ss: np.random.SeedSequence) -> int:
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def iter_walk(d: IncrementDistribution, start: int, horizon: int, seed,
              chunk: int = CHUNK) -> Iterator[np.ndarray]:
    """Positions ``S_0..S_horizon`` in consecutive chunks (same path as ``simulate``)."""
    yield np.array([start], dtype=np.int64)
    acc = start
    for inc in iter_steps(d, horizon, seed, chunk):
        block = acc + np.cumsum(inc)
        acc = int(block[-1])
        yield block


def iter_stored(run: WalkRun, chunk: int = CHUNK) -> Iterator[np.ndarray]:
    for i in range(0, len(run), chunk):
        yield run.positions[i:i + chunk]


def iter_observed(scenery, position_chunks) -> Iterator[tuple]:
    for pos in position_chunks:
        win = materialise(scenery, int(pos.min()), int(pos.max()))
        yield pos, win.colors_at(pos)


@dataclass
class ScanResult:
    horizon_T: int
    length: int
    max_abs: int
    delta_failures: int
    windows_checked: int
    tau: np.ndarray
    tau_colors: np.ndarray
    nu_mask: np.ndarray
    nu_positions: np.ndarray
    unresolved: int = 0

    @property
    def nu(self) -> np.ndarray:
        return self.tau[self.nu_mask]

    @property
    def nu_colors(self) -> np.ndarray:
        return self.tau_colors[self.nu_mask]

    @property
    def stops_disagree(self) -> int:
        return int((~self.nu_mask).sum())


@dataclass
class TrialScanner:
    """Collects every per-trial statistic in one pass over ``(S_t, chi_t)``.

    Tracks ``max |S_t|`` and failing delta-path windows up to ``T``, pattern
    stops ``tau <= T`` with the colour ``r`` steps later, and which of those
    stops were generated inside ``[-half_width, half_width]``.
    """

    w: Pattern
    r: int
    half_width: int
    horizon_T: int
    delta: object
    window_n: Optional[int] = None
    _matcher: StreamMatcher = field(init=False)
    _t: int = field(init=False, default=0)
    _pos_tail: np.ndarray = field(init=False)
    _pending: list = field(init=False, default_factory=list)
    _tau: list = field(init=False, default_factory=list)
    _tau_col: list = field(init=False, default_factory=list)
    _nu: list = field(init=False, default_factory=list)
    _nu_pos: list = field(init=False, default_factory=list)
    _max_abs: int = field(init=False, default=0)
    _dfail: int = field(init=False, default=0)
    _dcount: int = field(init=False, default=0)

    def __post_init__(self):
        self._matcher = StreamMatcher(self.w)
        if self.window_n is None:
            self.window_n = len(self.w) - 1
        self._pos_tail = np.zeros(0, dtype=np.int64)

    @property
    def _keep(self) -> int:
        return max(len(self.w) - 1, self.window_n)

    def feed(self, pos: np.ndarray, colors: np.ndarray) -> None:
        t0 = self._t
        t1 = t0 + pos.size  # exclusive
        T = self.horizon_T
        if t0 <= T:
            upto = min(pos.size, T - t0 + 1)
            self._max_abs = max(self._max_abs, int(np.abs(pos[:upto]).max()))
        buf = np.concatenate([self._pos_tail, pos])
        base = t0 - self._pos_tail.size

        # delta-path windows [s - n, s] for n <= s <= T ending in this chunk
        n = self.window_n
        fails = windows_failing(np.diff(buf), n, self.delta)
        if fails.size:
            ends = base + n + np.arange(fails.size)
            ok = (ends >= max(t0, n)) & (ends <= T)
            self._dfail += int(fails[ok].sum())
            self._dcount += int(ok.sum())

        # resolve offset colours of earlier stops
        if self._pending:
            still = []
            for i, tau in self._pending:
                k = tau + self.r
                if k < t1:
                    self._tau_col[i] = int(colors[k - t0])
                else:
                    still.append((i, tau))
            self._pending = still

        ends = self._matcher.feed(colors)
        ends = ends[ends <= T]
        if ends.size:
            width = len(self.w) - 1
            idx = ends[:, None] - base - np.arange(width + 1)[None, :]
            seg = buf[idx]
            inside = np.all(np.abs(seg) <= self.half_width, axis=1)
            for tau, ins in zip(ends.tolist(), inside.tolist()):
                self._tau.append(tau)
                self._nu.append(ins)
                self._nu_pos.append(int(buf[tau - base]))
                k = tau + self.r
                if k < t1:
                    self._tau_col.append(int(colors[k - t0]))
                else:
                    self._tau_col.append(0)
                    self._pending.append((len(self._tau) - 1, tau))

        keep = self._keep
        self._pos_tail = buf[-keep:] if keep else buf[:0]
        self._t = t1

    def result(self) -> ScanResult:
        tau = np.asarray(self._tau, dtype=np.int64)
        cols = np.asarray(self._tau_col, dtype=np.int64)
        nu = np.asarray(self._nu, dtype=bool)
        resolved = cols > 0
        pos = np.asarray(self._nu_pos, dtype=np.int64)
        return ScanResult(
            horizon_T=self.horizon_T, length=self._t, max_abs=self._max_abs,
            delta_failures=self._dfail, windows_checked=self._dcount,
            tau=tau[resolved], tau_colors=cols[resolved], nu_mask=nu[resolved],
            nu_positions=pos[resolved][nu[resolved]], unresolved=int((~resolved).sum()))


def scan(scanner: TrialScanner, observed) -> ScanResult:
    for pos, colors in observed:
        scanner.feed(pos, colors)
    return scanner.result()


def stream_from_run(scenery, run: WalkRun, chunk: int = CHUNK):
    return iter_observed(scenery, iter_stored(run, chunk))


def observed_arrays(scenery, d: IncrementDistribution, horizon: int, seed, start: int = 0):
    """Materialised run and observation stream for one seeded walk."""
    pos = np.concatenate(list(iter_walk(d, start, horizon, seed)))
    win = materialise(scenery, int(pos.min()), int(pos.max()))
    return WalkRun(pos, seed), ObservationStream(win.colors_at(pos))
