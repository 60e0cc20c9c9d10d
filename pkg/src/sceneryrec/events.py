"""Oracle evaluation of the events behind single-point success, and their bounds."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from .observe import StopTimes, materialise
from .paths import as_fraction, nonunit_values, windows_failing
from .reconstruct import (
    T_BASE, NoDataError, ReconstructionParams, StationaryDistribution, color_masses,
    corrections, derive_params, exact_chain_mu, margin_terms, mu_from_positions, offset_law,
    score_colors,
)
from .scenery import NUM_COLORS, IIDScenery, Scenery
from .simulation import TrialScanner, iter_observed, iter_walk, scan
from .walk import IncrementDistribution, WalkRun

B_BASE = 2.45
C_BASE = 1.1
F_SEARCH_LIMIT = 200_000


class FSearchTooLarge(RuntimeError):
    pass


@dataclass(frozen=True)
class Thresholds:
    """Horizon and event thresholds for one ``n``.

    With ``t_effective`` given, the horizon base is rescaled to
    ``t_effective**(1/2n)`` and the confinement base keeps its ratio to it, so
    the ordering ``T^(1/2) < radius`` of the asymptotic profile survives.
    """

    horizon_T: int
    b_radius: float
    c_count: float

    @classmethod
    def for_n(cls, n: int, t_effective: Optional[int] = None, t_base: float = T_BASE,
              b_base: float = B_BASE, c_base: float = C_BASE) -> "Thresholds":
        if t_effective is None:
            T = math.ceil(t_base ** (2 * n))
            radius = b_base ** n
        else:
            T = int(t_effective)
            scale = T ** (1.0 / (2 * n))
            radius = (scale * b_base / t_base) ** n
        return cls(T, radius, c_base ** n)

    @property
    def search_bound(self) -> int:
        return int(math.floor(self.b_radius))


@dataclass
class EventReport:
    A: Optional[bool]
    B: bool
    C: bool
    D: bool
    F: bool
    G: bool
    margin: Optional[float]
    stops_tau: int
    stops_nu: int
    no_data: bool = False
    margin_degenerate: bool = False
    stops_disagree: int = 0
    max_abs: int = 0
    delta_failures: int = 0
    estimate: Optional[int] = None
    truth: Optional[int] = None
    q_hat: Optional[list] = None
    g_deviation: Optional[float] = None

    @property
    def all_good(self) -> bool:
        return bool(self.B and self.C and self.D and self.F and self.G
                    and self.margin is not None and self.margin > 0)

    @property
    def violates_containment(self) -> bool:
        return self.all_good and not self.A

    def as_dict(self) -> dict:
        return asdict(self)


def eval_B(run: WalkRun, n: int, radius: Optional[float] = None,
           horizon: Optional[int] = None) -> bool:
    """The walk stays within ``[-radius, radius]`` up to the horizon."""
    if radius is None:
        radius = B_BASE ** n
    pos = run.positions if horizon is None else run.positions[:horizon + 1]
    return bool(np.abs(pos).max() <= radius)


def eval_C(stops: StopTimes, n: int, threshold_base: float = C_BASE,
           horizon: Optional[int] = None) -> bool:
    t = stops.times if horizon is None else stops.times[stops.times <= horizon]
    return bool(t.size >= threshold_base ** n)


def eval_D(run: WalkRun, n: int, delta, horizon: Optional[int] = None) -> bool:
    """Every segment ``S[s-n..s]`` with ``n <= s <= horizon`` is a delta-path."""
    inc = run.increments if horizon is None else run.increments[:horizon]
    return not bool(windows_failing(inc, n, delta).any())


def eval_F(scenery, params: ReconstructionParams, search_bound: int,
           max_jump: Optional[int] = None) -> bool:
    """No delta-path in ``[-search_bound, search_bound]`` reads ``w`` unless it
    stays in ``I`` and ends in ``J``.

    Decided by a boolean DP over (position, non-unit steps used, non-unit
    variation used, has-left-I) with the colour constraint applied per step.
    """
    w = params.pattern_w.colors.astype(np.int64)
    steps = len(w) - 1
    cap = math.floor(as_fraction(params.delta) * steps)
    jump = cap if max_jump is None else min(cap, max_jump)
    sb = int(search_bound)
    if (2 * sb + 1) * (cap + 1) ** 2 > F_SEARCH_LIMIT * 50:
        raise FSearchTooLarge(f"search over [-{sb}, {sb}] with budget {cap} is too large")
    lo_i, hi_i = params.interval_I
    lo_j, hi_j = params.interval_J
    win = materialise(scenery, -sb, sb)
    col = win.colors.astype(np.int64)
    xs = np.arange(-sb, sb + 1)
    outside = (xs < lo_i) | (xs > hi_i)
    # alive[k, v, flag, pos]
    alive = np.zeros((cap + 1, cap + 1, 2, xs.size), dtype=bool)
    first = col == w[0]
    alive[0, 0, 0] = first & ~outside
    alive[0, 0, 1] = first & outside
    moves = [(s, 0, 0) for s in (-1, 1)]
    moves += [(v, 1, abs(v)) for v in nonunit_values(jump) if abs(v) <= cap]
    for j in range(1, steps + 1):
        nxt = np.zeros_like(alive)
        for s, dk, dv in moves:
            src = alive[:cap + 1 - dk, :cap + 1 - dv]
            if not src.any():
                continue
            shifted = np.zeros_like(src)
            if s > 0:
                shifted[..., s:] = src[..., :-s]
            elif s < 0:
                shifted[..., :s] = src[..., -s:]
            else:
                shifted = src
            nxt[dk:, dv:] |= shifted
        match = col == w[j]
        nxt &= match
        # a path that is now outside I carries the flag from here on
        nxt[:, :, 1] |= nxt[:, :, 0] & outside
        nxt[:, :, 0] &= ~outside
        alive = nxt
        if not alive.any():
            return True
    ends_bad = (xs < lo_j) | (xs > hi_j)
    bad = alive[:, :, 1].any() or (alive[:, :, 0] & ends_bad).any()
    return not bool(bad)


def eval_G(p_offset: Sequence[float], nu_colors: Sequence[int], margin: Optional[float]):
    """``max_e |P~(chi_r = e) - P_mu(chi_r = e)| < margin`` for the nu-based estimate.

    Returns ``(G, deviation)``. Without stops the deviation is undefined and
    ``G`` fails; with a nonpositive margin ``G`` fails by definition.
    """
    obs = np.asarray(nu_colors, dtype=np.int64)
    if obs.size == 0 or margin is None:
        return False, None
    emp = np.bincount(obs - 1, minlength=NUM_COLORS)[:NUM_COLORS] / obs.size
    dev = float(np.max(np.abs(emp - np.asarray(p_offset, dtype=float))))
    return bool(margin > 0 and dev < margin), dev


# --------------------------------------------------------------------------
# closed-form envelopes


def b_complement_bound(sigma2: float, n: int, t_effective: Optional[int] = None,
                       radius: Optional[float] = None) -> float:
    """Kolmogorov bound ``T sigma^2 / (radius + 1)^2`` on leaving the radius."""
    th = Thresholds.for_n(n, t_effective)
    T = th.horizon_T if t_effective is None else t_effective
    rad = th.b_radius if radius is None else radius
    return T * sigma2 / (rad + 1) ** 2


def b_complement_asymptotic(sigma2: float, n: int) -> float:
    return sigma2 * ((T_BASE / B_BASE) ** 2) ** n


def margin_floor(epsilon: float, delta, n: int) -> float:
    """Claimed lower bound ``((1 - eps) / 2) ** (90 delta n + 2)`` on the margin."""
    return ((1 - float(epsilon)) / 2) ** (90 * float(delta) * n + 2)


def d1_factor(epsilon: float, c: float, s: float = 0.0) -> float:
    """``epsilon (1 + e^{-2(c-s)} / (1 - e^{-(c-s)}))``."""
    q = math.exp(-(c - s))
    return epsilon * (1 + q * q / (1 - q))


def d_envelope_literal(epsilon: float, c: float, n: int) -> float:
    """The printed segment bound ``d1_factor(eps, c)**n + eps**n`` (limit ``s -> 0``)."""
    return d1_factor(epsilon, c) ** n + epsilon ** n


def _chernoff(log_mgf, threshold: float, n: int, s_max: float) -> float:
    """``inf_s exp(n log_mgf(s) - s threshold)`` over ``0 < s < s_max``."""
    f = lambda s: n * log_mgf(s) - s * threshold
    res = minimize_scalar(f, bounds=(1e-9, s_max), method="bounded",
                          options={"xatol": 1e-10})
    return float(min(1.0, math.exp(min(res.fun, 0.0))))


def d_envelope_chernoff(d: IncrementDistribution, n: int, delta) -> float:
    """Chernoff bounds on too many / too long non-unit steps in ``n`` steps.

    Uses the exact moment generating functions of the non-unit indicator and
    of the non-unit jump length; the failure event of a segment is a count or
    a variation strictly above ``floor(delta n)``.
    """
    cap = math.floor(as_fraction(delta) * n)
    a = np.abs(d.steps)
    pmf = d.pmf
    nonunit = a != 1
    eps = float(pmf[nonunit].sum())
    if eps == 0:
        return 0.0
    log_y = lambda s: math.log1p(eps * math.expm1(s))
    x_vals = np.where(nonunit, a, 0).astype(float)

    def log_x(s):
        return math.log(float(np.sum(pmf * np.exp(s * x_vals))))

    s_max_x = 0.999 * d.decay_c if math.isfinite(d.decay_c) else 50.0
    return (_chernoff(log_y, cap + 1, n, 50.0)
            + _chernoff(log_x, cap + 1, n, min(50.0, s_max_x)))


def d_union_bound(d: IncrementDistribution, n: int, delta, horizon: int) -> float:
    return min(1.0, (horizon - n + 1) * d_envelope_chernoff(d, n, delta))


# --------------------------------------------------------------------------
# full simulation-mode trial


@dataclass
class TrialSetup:
    d: IncrementDistribution
    n: int
    delta: object
    t_effective: Optional[int] = None
    t_base: float = T_BASE
    b_base: float = B_BASE
    c_base: float = C_BASE
    mu_mode: str = "exact"
    f_max_jump: Optional[int] = None

    def thresholds(self, n: Optional[int] = None) -> Thresholds:
        return Thresholds.for_n(self.n if n is None else n, self.t_effective, self.t_base,
                                self.b_base, self.c_base)


@dataclass
class TrialOutcome:
    report: EventReport
    params: ReconstructionParams
    mu: StationaryDistribution = field(repr=False)
    scan: object = field(repr=False, default=None)


def evaluate_point(setup: TrialSetup, scenery, known: Scenery, params: ReconstructionParams,
                   observed, truth: int, n: Optional[int] = None) -> TrialOutcome:
    """Run reconstruction and all event oracles for one cell on one stream."""
    n = params.n if n is None else n
    th = setup.thresholds(n)
    mu = exact_chain_mu(params, known, setup.d)
    scanner = TrialScanner(params.pattern_w, params.offset_r, params.n, params.horizon_T,
                           setup.delta)
    res = scan(scanner, observed)
    if setup.mu_mode == "oracle" and res.nu_positions.size:
        mu_used = mu_from_positions(res.nu_positions, params)
    else:
        mu_used = mu

    corr = corrections(mu_used, known, setup.d, params)
    estimate = None
    no_data = res.tau.size == 0
    q_hat = None
    if not no_data:
        score = score_colors(res.tau_colors, corr)
        estimate = score.argmax()
        q_hat = list(score.q_hat)
    A = estimate == truth

    mt = margin_terms(mu, setup.d, params.offset_r, params.n)
    margin = float(mt.margin)
    law = offset_law(mu, setup.d, params.offset_r)
    lo = law.support_offset
    hi = lo + len(law) - 1
    p_offset = color_masses(law, materialise(scenery, lo, hi))
    G, dev = eval_G(p_offset, res.nu_colors, margin)
    report = EventReport(
        A=bool(A),
        B=bool(res.max_abs <= th.b_radius),
        C=bool(res.nu.size >= th.c_count),
        D=res.delta_failures == 0,
        F=eval_F(scenery, params, th.search_bound, setup.f_max_jump),
        G=G, margin=margin, stops_tau=int(res.tau.size), stops_nu=int(res.nu.size),
        no_data=no_data, margin_degenerate=margin <= 0,
        stops_disagree=res.stops_disagree, max_abs=res.max_abs,
        delta_failures=res.delta_failures, estimate=estimate, truth=truth, q_hat=q_hat,
        g_deviation=dev)
    return TrialOutcome(report, params, mu, res)


def containment_trial(setup: TrialSetup, scenery_seed: int, walk_seed) -> TrialOutcome:
    """One simulated trial at ``setup.n``: fresh scenery, fresh walk, all events."""
    scenery = IIDScenery(scenery_seed)
    n = setup.n
    known = scenery.window(-n, n)
    th = setup.thresholds()
    params = derive_params(n, setup.delta, known, budget_cap=th.horizon_T, t_base=setup.t_base)
    horizon = params.horizon_T + params.offset_r
    observed = iter_observed(scenery, iter_walk(setup.d, 0, horizon, walk_seed))
    return evaluate_point(setup, scenery, known, params, observed, scenery(n + 1))
