"""Single-point scenery reconstruction and the inductive whole-window loop."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import splu

from .observe import ObservationStream, StopTimes, pattern_stops, prefix_automaton
from .paths import as_fraction
from .scenery import COLORS, NUM_COLORS, Pattern, Scenery, window
from .walk import IncrementDistribution, StateDistribution, state_distribution

T_BASE = 2.4


class NoDataError(RuntimeError):
    """No usable pattern stop before the horizon: the estimate is undefined."""

    def __init__(self, msg: str, n: Optional[int] = None):
        super().__init__(msg)
        self.n = n


class ChainDegenerate(RuntimeError):
    pass


class ConditionWarning(UserWarning):
    pass


def round_half_up(x: Fraction) -> int:
    return math.floor(x + Fraction(1, 2))


@dataclass(frozen=True)
class ReconstructionParams:
    n: int
    delta: Fraction
    n_star: int
    interval_I: tuple
    interval_K: tuple
    interval_J: tuple
    interval_J_minus: tuple
    pattern_w: Pattern
    offset_r: int
    horizon_T: int
    horizon_T_uncapped: Optional[int] = None

    @property
    def capped(self) -> bool:
        return self.horizon_T_uncapped is not None and self.horizon_T < self.horizon_T_uncapped

    @property
    def target(self) -> int:
        """The cell being reconstructed, ``n + 1``."""
        return self.n + 1

    def digest(self) -> dict:
        return {
            "n": self.n, "delta": str(self.delta), "n_star": self.n_star,
            "I": list(self.interval_I), "K": list(self.interval_K),
            "J": list(self.interval_J), "J_minus": list(self.interval_J_minus),
            "w": str(self.pattern_w), "r": self.offset_r, "T": self.horizon_T,
            "T_uncapped": self.horizon_T_uncapped,
        }


def uncapped_horizon(n: int, t_base: float = T_BASE) -> int:
    exponent = 2 * n * math.log10(t_base)
    if exponent > 18:
        return 10**18
    return math.ceil(t_base ** (2 * n))


def derive_params(n: int, delta, scenery_window: Scenery, budget_cap: Optional[int] = None,
                  t_base: float = T_BASE) -> ReconstructionParams:
    """Intervals, pattern and offsets for reconstructing ``xi(n+1)`` from ``xi|[-n, n]``.

    The multiples ``delta*n``, ``21 delta n``, ``61 delta n`` and ``90 delta n``
    are rounded half-up; ``T`` is ``ceil(t_base**(2n))`` capped at ``budget_cap``.
    """
    d = as_fraction(delta)
    if not d > 0:
        raise ValueError("delta must be positive")
    if 63 * d >= 1:
        raise ValueError(f"delta = {d} violates 63*delta < 1")
    if n < 1:
        raise ValueError("n must be positive")
    if not scenery_window.covers(-n, n):
        raise ValueError(f"scenery window must cover [-{n}, {n}]")
    dn = round_half_up(d * n)
    d21 = round_half_up(21 * d * n)
    d61 = round_half_up(61 * d * n)
    n_star = n - d61
    k1, k2 = n_star - n, n_star
    r = max(1, round_half_up(90 * d * n))
    full = uncapped_horizon(n, t_base)
    T = full if budget_cap is None else min(full, int(budget_cap))
    return ReconstructionParams(
        n=n, delta=d, n_star=n_star,
        interval_I=(-n, n), interval_K=(k1, k2),
        interval_J=(n_star - d21, n_star + dn),
        interval_J_minus=(n_star - n - dn, n_star - n + d21),
        pattern_w=window(scenery_window, k1, k2), offset_r=r,
        horizon_T=T, horizon_T_uncapped=full)


def manual_params(n: int, K: tuple, r: int, scenery_window: Scenery, horizon_T: int,
                  delta=Fraction(0)) -> ReconstructionParams:
    """Parameters set by hand (worked examples, experiments off the formulas)."""
    if not scenery_window.covers(-n, n) or not (-n <= K[0] <= K[1] <= n):
        raise ValueError("K must lie inside a known window [-n, n]")
    return ReconstructionParams(
        n=n, delta=as_fraction(delta), n_star=K[1], interval_I=(-n, n), interval_K=tuple(K),
        interval_J=(K[1], K[1]), interval_J_minus=(K[0], K[0]),
        pattern_w=window(scenery_window, K[0], K[1]), offset_r=r,
        horizon_T=horizon_T, horizon_T_uncapped=horizon_T)


# --------------------------------------------------------------------------
# stationary law of the chain of positions at in-window pattern completions


@dataclass(frozen=True, eq=False)
class StationaryDistribution:
    offset: int
    masses: np.ndarray
    kernel: Optional[np.ndarray] = field(default=None, repr=False)
    iterations: int = 0
    residual: float = 0.0

    @property
    def support(self) -> np.ndarray:
        return self.offset + np.nonzero(self.masses > 0)[0]

    def mass(self, x: int) -> float:
        k = x - self.offset
        return float(self.masses[k]) if 0 <= k < self.masses.size else 0.0

    def as_law(self) -> StateDistribution:
        return StateDistribution(self.offset, np.asarray(self.masses, dtype=float))

    def total_variation(self, other: np.ndarray) -> float:
        return 0.5 * float(np.abs(self.masses - np.asarray(other)).sum())


def _stop_chain_kernel(params: ReconstructionParams, known: Scenery,
                       d: IncrementDistribution, buffer: Optional[int]) -> np.ndarray:
    """``P[x, y]``: from a completion at ``x``, the next completion is at ``y``.

    States are (position, length of the longest suffix of the observations
    that is a prefix of ``w`` and was read inside ``I``). Outside ``I`` only the
    position matters; positions beyond the buffer are clamped to its edge, which
    is exact for nearest-neighbour walks and otherwise stands in for the
    entrance law from far away.
    """
    lo, hi = params.interval_I
    width = hi - lo + 1
    w = params.pattern_w
    m = len(w)
    delta_tab = prefix_automaton(w)
    colors = known.restrict(lo, hi).colors.astype(np.int64) - 1
    jumps = d.steps[d.pmf > 0]
    probs = d.pmf[d.pmf > 0]
    if buffer is None:
        buffer = 1 if d.max_jump <= 1 else max(4 * width, 8 * d.max_jump)
    n_in = width * m
    n_out = 2 * buffer
    n_tr = n_in + n_out

    def out_index(z):
        # z > hi -> [0, buffer); z < lo -> [buffer, 2 buffer)
        right = np.minimum(z - hi, buffer) - 1
        left = np.minimum(lo - z, buffer) - 1 + buffer
        return n_in + np.where(z > hi, right, left)

    def transitions(pos, ell):
        """Sparse triplets for leaving states at ``pos`` with prefix state ``ell``."""
        q_rows, q_cols, q_vals, r_rows, r_cols, r_vals = [], [], [], [], [], []
        src = np.arange(pos.size)
        for k, p in zip(jumps, probs):
            new = pos + k
            inside = (new >= lo) & (new <= hi)
            cell = np.clip(new - lo, 0, width - 1)
            nxt = delta_tab[ell, colors[cell]]
            done = inside & (nxt == m)
            move = inside & ~done
            r_rows.append(src[done]); r_cols.append(cell[done]); r_vals.append(np.full(done.sum(), p))
            q_rows.append(src[move]); q_cols.append(cell[move] * m + nxt[move])
            q_vals.append(np.full(move.sum(), p))
            out = ~inside
            q_rows.append(src[out]); q_cols.append(out_index(new[out]))
            q_vals.append(np.full(out.sum(), p))
        cat = np.concatenate
        return (cat(q_rows), cat(q_cols), cat(q_vals)), (cat(r_rows), cat(r_cols), cat(r_vals))

    # transient states, in index order
    cells = np.repeat(np.arange(width), m)
    pos_in = lo + cells
    ell_in = np.tile(np.arange(m), width)
    pos_out = np.concatenate([hi + 1 + np.arange(buffer), lo - 1 - np.arange(buffer)])
    pos_all = np.concatenate([pos_in, pos_out])
    ell_all = np.concatenate([ell_in, np.zeros(n_out, dtype=np.int64)])
    (qr, qc, qv), (rr, rc, rv) = transitions(pos_all, ell_all)
    Q = sp.csc_matrix((qv, (qr, qc)), shape=(n_tr, n_tr))
    R = sp.csc_matrix((rv, (rr, rc)), shape=(n_tr, width))
    # starting right after a completion: prefix state m continues via its border
    (q0r, q0c, q0v), (r0r, r0c, r0v) = transitions(
        lo + np.arange(width), np.full(width, m, dtype=np.int64))
    Q0 = sp.csr_matrix((q0v, (q0r, q0c)), shape=(width, n_tr))
    R0 = sp.csr_matrix((r0v, (r0r, r0c)), shape=(width, width))
    A = (sp.identity(n_tr, format="csc") - Q).tocsc()
    absorb = splu(A).solve(R.toarray())
    return np.asarray(R0.toarray() + Q0 @ absorb)


def exact_chain_mu(params: ReconstructionParams, scenery: Scenery, d: IncrementDistribution,
                   buffer: Optional[int] = None, tol: float = 1e-12,
                   max_iter: int = 200_000) -> StationaryDistribution:
    """Stationary law of the walk's positions at successive in-window completions of ``w``.

    Only ``xi`` on ``I`` and the increment law enter, so the reconstructor can
    compute it. The fixed point is found by power iteration on the lazy chain
    ``(I + P) / 2``, which shares it and is aperiodic.
    """
    lo, hi = params.interval_I
    if len(params.pattern_w) > 60 or hi - lo > 200:
        raise ChainDegenerate("window too large for the exact chain computation")
    P = _stop_chain_kernel(params, scenery, d, buffer)
    rows = P.sum(axis=1)
    reach = np.nonzero(P.sum(axis=0) > 0)[0]
    if reach.size == 0:
        raise ChainDegenerate("the pattern cannot be completed inside I")
    sub = P[np.ix_(reach, reach)]
    if np.any(np.abs(rows[reach] - 1.0) > 1e-9):
        raise ChainDegenerate(f"kernel rows lose mass (min row sum {rows[reach].min():.3g})")
    ncomp, labels = connected_components(sp.csr_matrix(sub > 0), directed=True, connection="strong")
    closed = 0
    for c in range(ncomp):
        members = labels == c
        if sub[np.ix_(members, ~members)].sum() == 0:
            closed += 1
    if closed != 1:
        raise ChainDegenerate(f"chain has {closed} closed classes; stationary law not unique")
    mu = np.full(reach.size, 1.0 / reach.size)
    lazy = 0.5 * (np.eye(reach.size) + sub)
    it = 0
    diff = np.inf
    while it < max_iter:
        nxt = mu @ lazy
        nxt /= nxt.sum()
        diff = float(np.abs(nxt - mu).sum())
        mu = nxt
        it += 1
        if diff < tol:
            break
    else:
        raise ChainDegenerate(f"power iteration did not converge (last change {diff:.3g})")
    full = np.zeros(hi - lo + 1)
    full[reach] = mu
    full[full < 0] = 0.0
    residual = float(np.abs(full @ P - full).sum())
    return StationaryDistribution(lo, full, kernel=P, iterations=it, residual=residual)


def empirical_law(positions: Sequence[int], lo: int, hi: int) -> np.ndarray:
    counts = np.bincount(np.asarray(positions, dtype=np.int64) - lo, minlength=hi - lo + 1)
    total = counts.sum()
    return counts / total if total else counts.astype(float)


def mu_from_positions(positions: Sequence[int], params: ReconstructionParams) -> StationaryDistribution:
    """Plug-in estimate of ``mu`` from simulated completion positions."""
    lo, hi = params.interval_I
    return StationaryDistribution(lo, empirical_law(positions, lo, hi))


# --------------------------------------------------------------------------
# scores


@dataclass(frozen=True)
class MarginTerms:
    p_target: object
    p_outside: object

    @property
    def margin(self):
        return (self.p_target - self.p_outside) / 2

    @property
    def threshold(self):
        return (self.p_target + self.p_outside) / 2


@dataclass(frozen=True)
class ColorScore:
    p_hat: tuple
    correction: tuple
    q_hat: tuple
    stops: int = 0

    def argmax(self) -> int:
        # first maximum, i.e. lowest colour on ties
        return COLORS[int(np.argmax(np.asarray(self.q_hat, dtype=float)))]

    def as_dict(self) -> dict:
        return {"p_hat": [float(x) for x in self.p_hat],
                "correction": [float(x) for x in self.correction],
                "q_hat": [float(x) for x in self.q_hat], "stops": self.stops}


def _law(mu) -> StateDistribution:
    return mu if isinstance(mu, StateDistribution) else mu.as_law()


def offset_law(mu, d: IncrementDistribution, r: int) -> StateDistribution:
    """Law of ``S_r`` with ``S_0 ~ mu`` (unconfined)."""
    return state_distribution(d, _law(mu), r)


def margin_terms(mu, d: IncrementDistribution, r: int, n: int) -> MarginTerms:
    """``P_mu(S_r = n+1)`` and ``P_mu(S_r not in [-n, n+1])``."""
    law = offset_law(mu, d, r)
    return MarginTerms(law.mass(n + 1), law.mass_outside(-n, n + 1))


def color_masses(law: StateDistribution, scenery: Scenery, lo: Optional[int] = None,
                 hi: Optional[int] = None) -> tuple:
    """``P(xi(S) = e, S in [lo, hi])`` per colour (whole support when unbounded)."""
    a = law.support_offset if lo is None else max(lo, law.support_offset)
    b = law.support_offset + len(law) - 1 if hi is None else min(hi, law.support_offset + len(law) - 1)
    zero = Fraction(0) if law.exact else 0.0
    out = [zero] * NUM_COLORS
    if b < a:
        return tuple(out)
    if not scenery.covers(a, b):
        raise IndexError(f"scenery must cover [{a}, {b}]")
    for x in range(a, b + 1):
        m = law.mass(x)
        if m:
            out[scenery(x) - 1] += m
    return tuple(out)


def corrections(mu, known: Scenery, d: IncrementDistribution, params: ReconstructionParams) -> tuple:
    lo, hi = params.interval_I
    return color_masses(offset_law(mu, d, params.offset_r), known, lo, hi)


def score_colors(offset_colors: Sequence[int], correction: Sequence[float]) -> ColorScore:
    obs = np.asarray(offset_colors, dtype=np.int64)
    if obs.size == 0:
        raise NoDataError("no pattern stops before the horizon")
    counts = np.bincount(obs - 1, minlength=NUM_COLORS)[:NUM_COLORS]
    p_hat = counts / obs.size
    q = tuple(float(p) - float(c) for p, c in zip(p_hat, correction))
    return ColorScore(tuple(float(x) for x in p_hat), tuple(float(c) for c in correction), q,
                      int(obs.size))


def usable_stops(stops: StopTimes, r: int, length: int) -> np.ndarray:
    t = stops.times
    return t[t + r < length]


def reconstruct_point(params: ReconstructionParams, known_window: Scenery, chi: ObservationStream,
                      d: IncrementDistribution, mu, stops: Optional[StopTimes] = None):
    """Estimate ``xi(n+1)`` as the colour maximising the corrected frequency score.

    Returns ``(color, ColorScore)``; raises :class:`NoDataError` when no
    pattern stop with an observable offset colour occurs before ``T``.
    """
    if stops is None:
        stops = pattern_stops(chi, params.pattern_w, params.horizon_T)
    t = usable_stops(stops, params.offset_r, len(chi))
    if t.size == 0:
        raise NoDataError(f"no pattern stops before T={params.horizon_T}", params.n)
    score = score_colors(chi.colors[t + params.offset_r], corrections(mu, known_window, d, params))
    return score.argmax(), score


def iid_condition(a: int, b: int, y_law: StateDistribution) -> bool:
    return y_law.mass(b + 1) > y_law.mass_outside(a, b + 1)


def reconstruct_point_iid(a: int, b: int, known: Scenery, y_law: StateDistribution,
                          observations: Sequence[int]) -> int:
    """Estimate ``xi(b+1)`` from colours seen at i.i.d. locations with known law.

    Warns with :class:`ConditionWarning` when ``P(Y = b+1) <= P(Y not in
    [a, b+1])``; the estimate is still returned but carries no guarantee.
    """
    if not iid_condition(a, b, y_law):
        warnings.warn("P(Y=b+1) does not exceed P(Y outside [a, b+1]); estimate unreliable",
                      ConditionWarning, stacklevel=2)
    corr = color_masses(y_law, known, a, b)
    return score_colors(observations, corr).argmax()


# --------------------------------------------------------------------------
# whole window


@dataclass
class StepRecord:
    n: int
    side: str
    params: ReconstructionParams
    mu: StationaryDistribution
    color: int
    score: ColorScore


def reconstruct_side(n: int, known: Scenery, chi: ObservationStream, d: IncrementDistribution,
                     delta, budget_cap: Optional[int], t_base: float = T_BASE):
    params = derive_params(n, delta, known, budget_cap, t_base)
    mu = exact_chain_mu(params, known, d)
    color, score = reconstruct_point(params, known, chi, d, mu)
    return params, mu, color, score


def reconstruct_whole(seed_window: Scenery, n0: int, target_n: int, chi: ObservationStream,
                      d: IncrementDistribution, delta, budget_cap: Optional[int] = None,
                      t_base: float = T_BASE,
                      on_step: Optional[Callable[[StepRecord], None]] = None) -> Scenery:
    """Grow a known window ``[-n0, n0]`` to ``[-target_n, target_n]`` one ring at a time.

    The left cell ``xi(-n-1)`` is the right cell of the mirrored scenery seen by
    the mirrored walk, which produces the same observations and, the law being
    symmetric, has the same increment distribution.
    """
    if target_n < n0:
        raise ValueError("target_n must be at least n0")
    known = seed_window.restrict(-n0, n0)
    for n in range(n0, target_n):
        try:
            p_r, mu_r, right, s_r = reconstruct_side(n, known, chi, d, delta, budget_cap, t_base)
            mirror = known.reflected()
            p_l, mu_l, left, s_l = reconstruct_side(n, mirror, chi, d.reflected(), delta,
                                                    budget_cap, t_base)
        except NoDataError as exc:
            raise NoDataError(f"no data while extending at n={n}: {exc}", n) from exc
        if on_step is not None:
            on_step(StepRecord(n, "right", p_r, mu_r, right, s_r))
            on_step(StepRecord(n, "left", p_l, mu_l, left, s_l))
        known = known.with_cell(n + 1, right).with_cell(-n - 1, left)
    return known
