"""Experiment configuration, seeded trial batches and persisted records."""

from __future__ import annotations

import hashlib
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields, replace
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Iterator, Optional

import numpy as np
from scipy.stats import binomtest

from .events import (
    EventReport, TrialSetup, containment_trial, eval_F, eval_G,
)
from .observe import ObservationStream, find_occurrences, materialise
from .paths import as_fraction, windows_failing
from .reconstruct import (
    ChainDegenerate, NoDataError, StepRecord, color_masses, corrections, derive_params,
    empirical_law, exact_chain_mu, margin_terms, offset_law, reconstruct_whole, score_colors,
)
from .scenery import IIDScenery, Scenery, equivalent
from .simulation import derive_seed, iter_steps, observed_arrays, seed_int
from .walk import IncrementDistribution, WalkRun, geometric_tail, lazy_simple

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    pass


def _opt_int(v: str) -> Optional[int]:
    return None if v.lower() in ("", "none") else int(float(v))


def _opt_float(v: str) -> Optional[float]:
    return None if v.lower() in ("", "none") else float(v)


def _bool(v: str) -> bool:
    if v.lower() in ("1", "true", "yes", "on"):
        return True
    if v.lower() in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


@dataclass
class ExperimentConfig:
    profile: str = "desk"
    family: str = "lazy_simple"
    epsilon: float = 0.02
    decay_c: float = 3.0
    p_zero_frac: Optional[float] = None
    truncation_bound: int = 64
    n: int = 12
    delta: Fraction = Fraction(1, 64)
    n0: int = 8
    target_n: int = 12
    trials: int = 2000
    master_seed: int = 20240601
    t_effective: Optional[int] = 1_000_000
    t_base: float = 2.4
    b_base: float = 2.45
    c_base: float = 1.1
    budget_cap: Optional[int] = None
    mu_mode: str = "exact"
    workers: int = 1
    out: Optional[str] = None
    record_timing: bool = False
    check_success: float = 0.60
    check_whole: float = 0.50
    chance_level: float = 0.20

    _parsers = {
        "profile": str, "family": str, "epsilon": float, "decay_c": float,
        "p_zero_frac": _opt_float, "truncation_bound": int, "n": int,
        "delta": as_fraction, "n0": int, "target_n": int, "trials": int,
        "master_seed": int, "t_effective": _opt_int, "t_base": float, "b_base": float,
        "c_base": float, "budget_cap": _opt_int, "mu_mode": str, "workers": int,
        "out": str, "record_timing": _bool, "check_success": float, "check_whole": float,
        "chance_level": float,
    }

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.family not in ("lazy_simple", "geometric_tail"):
            raise ConfigError(f"unknown walk family {self.family!r}")
        if self.mu_mode not in ("exact", "oracle"):
            raise ConfigError(f"mu_mode must be 'exact' or 'oracle', not {self.mu_mode!r}")
        self.delta = as_fraction(self.delta)
        if not 0 < self.delta or 63 * self.delta >= 1:
            raise ConfigError(f"delta = {self.delta} violates 0 < delta and 63*delta < 1")
        if self.trials < 0:
            raise ConfigError("trials must be nonnegative")
        if self.n < 1 or self.n0 < 1 or self.target_n < self.n0:
            raise ConfigError("need n >= 1, n0 >= 1 and target_n >= n0")
        try:
            self.walk_law()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def walk_law(self) -> IncrementDistribution:
        if self.family == "lazy_simple":
            return lazy_simple(self.epsilon)
        return geometric_tail(self.epsilon, self.decay_c, self.p_zero_frac, self.truncation_bound)

    def setup(self, n: Optional[int] = None) -> TrialSetup:
        return TrialSetup(self.walk_law(), self.n if n is None else n, self.delta,
                          t_effective=self.t_effective, t_base=self.t_base,
                          b_base=self.b_base, c_base=self.c_base, mu_mode=self.mu_mode)

    @property
    def cap(self) -> Optional[int]:
        return self.budget_cap if self.budget_cap is not None else self.t_effective

    def as_dict(self) -> dict:
        out = {}
        for f in fields(self):
            if f.name.startswith("_"):
                continue
            v = getattr(self, f.name)
            out[f.name] = str(v) if isinstance(v, Fraction) else v
        return out

    def digest(self) -> str:
        body = {k: v for k, v in self.as_dict().items() if k not in ("out", "workers")}
        blob = json.dumps(body, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    @classmethod
    def from_mapping(cls, items: dict) -> "ExperimentConfig":
        kwargs = {}
        for key, raw in items.items():
            if key not in cls._parsers:
                raise ConfigError(f"unknown config key {key!r}")
            try:
                kwargs[key] = cls._parsers[key](str(raw).strip())
            except (ValueError, ZeroDivisionError) as exc:
                raise ConfigError(f"bad value for {key}: {raw!r} ({exc})") from exc
        return cls(**kwargs)

    @classmethod
    def parse(cls, text: str) -> "ExperimentConfig":
        """Flat ``key = value`` lines; ``#`` starts a comment; unknown keys are errors."""
        items = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            if key in items:
                raise ConfigError(f"line {lineno}: duplicate key {key!r}")
            items[key] = value
        return cls.from_mapping(items)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.parse(Path(path).read_text())


# --------------------------------------------------------------------------
# records


def trial_seeds(master: int, trial: int) -> tuple:
    """(scenery seed as int, walk SeedSequence) for one trial."""
    return seed_int(derive_seed(master, trial, 0)), derive_seed(master, trial, 1)


def make_record(kind: str, trial: int, cfg: ExperimentConfig, params_digest: dict,
                report: Optional[EventReport], extra: dict, elapsed: Optional[float]) -> dict:
    rec = {
        "schema": SCHEMA_VERSION,
        "kind": kind,
        "trial": trial,
        "seed": {"master": cfg.master_seed, "trial": trial},
        "config": cfg.digest(),
        "params": params_digest,
        "mu_source": cfg.mu_mode,
    }
    if report is not None:
        ev = report.as_dict()
        rec.update(estimate=ev.pop("estimate"), truth=ev.pop("truth"), success=bool(report.A),
                   stops_count=ev["stops_tau"], q_hat=ev.pop("q_hat"), events=ev)
    rec.update(extra)
    if cfg.record_timing and elapsed is not None:
        rec["timing_s"] = round(elapsed, 6)
    return rec


def dumps(rec: dict) -> str:
    return json.dumps(rec, sort_keys=True, separators=(",", ":"))


def load_records(path) -> list:
    out = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            if rec.get("schema") != SCHEMA_VERSION:
                raise ValueError(f"record schema {rec.get('schema')} != {SCHEMA_VERSION}")
            out.append(rec)
    return out


# --------------------------------------------------------------------------
# trials


def point_trial(cfg: ExperimentConfig, trial: int) -> dict:
    t0 = time.perf_counter()
    s_seed, w_seed = trial_seeds(cfg.master_seed, trial)
    out = containment_trial(cfg.setup(), s_seed, w_seed)
    return make_record("point", trial, cfg, out.params.digest(), out.report, {},
                       time.perf_counter() - t0)


def _events_stored(setup: TrialSetup, scenery, run: WalkRun,
                   chi: ObservationStream, params, mu, estimate, truth) -> EventReport:
    """Event oracles from a materialised run (array route, no scanner)."""
    n = params.n
    th = setup.thresholds(n)
    T = params.horizon_T
    pos = run.positions[:T + 1]
    B = bool(np.abs(pos).max() <= th.b_radius)
    D_fail = int(windows_failing(run.increments[:T], n, setup.delta).sum())
    hay = chi.colors[:T + 1].astype(np.uint8).tobytes()
    tau = np.asarray(find_occurrences(hay, params.pattern_w.tobytes()), dtype=np.int64) + n
    tau = tau[tau + params.offset_r < len(chi)]
    if tau.size:
        idx = tau[:, None] - np.arange(n + 1)[None, :]
        inside = np.all(np.abs(run.positions[idx]) <= n, axis=1)
    else:
        inside = np.zeros(0, dtype=bool)
    nu = tau[inside]
    mt = margin_terms(mu, setup.d, params.offset_r, n)
    margin = float(mt.margin)
    law = offset_law(mu, setup.d, params.offset_r)
    lo, hi = law.support_offset, law.support_offset + len(law) - 1
    p_offset = color_masses(law, materialise(scenery, lo, hi))
    G, dev = eval_G(p_offset, chi.colors[nu + params.offset_r], margin)
    return EventReport(
        A=estimate == truth, B=B, C=bool(nu.size >= th.c_count), D=D_fail == 0,
        F=eval_F(scenery, params, th.search_bound, setup.f_max_jump), G=G, margin=margin,
        stops_tau=int(tau.size), stops_nu=int(nu.size), no_data=estimate is None,
        margin_degenerate=margin <= 0, stops_disagree=int(tau.size - nu.size),
        max_abs=int(np.abs(pos).max()), delta_failures=D_fail, estimate=estimate,
        truth=truth, g_deviation=dev)


def whole_trial(cfg: ExperimentConfig, trial: int) -> dict:
    """Grow ``[-n0, n0]`` (given correctly) to ``[-target_n, target_n]`` on one walk."""
    t0 = time.perf_counter()
    s_seed, w_seed = trial_seeds(cfg.master_seed, trial)
    scenery = IIDScenery(s_seed)
    d = cfg.walk_law()
    setup = cfg.setup()
    cap = cfg.cap
    r_max = max(derive_params(k, cfg.delta, scenery.window(-k, k), cap, cfg.t_base).offset_r
                for k in range(cfg.n0, max(cfg.target_n, cfg.n0 + 1)))
    horizon = (cap if cap is not None else derive_params(
        cfg.target_n, cfg.delta, scenery.window(-cfg.target_n, cfg.target_n)).horizon_T) + r_max
    run, chi = observed_arrays(scenery, d, horizon, w_seed)
    mirror_run = run.reflected()
    reach = int(np.abs(run.positions).max())
    steps = []

    def on_step(rec: StepRecord):
        n = rec.n
        bound = max(reach, setup.thresholds(n).search_bound,
                    n + rec.params.offset_r * d.max_jump) + 2
        env = scenery.window(-bound, bound)
        if rec.side == "right":
            truth, r_run = scenery(n + 1), run
        else:
            truth, r_run, env = scenery(-n - 1), mirror_run, env.reflected()
        step_setup = replace(setup, n=n)
        ev = _events_stored(step_setup, env, r_run, chi, rec.params, rec.mu, rec.color, truth)
        steps.append({"n": n, "side": rec.side, "estimate": rec.color, "truth": truth,
                      "success": rec.color == truth, "stops": rec.score.stops,
                      "all_events": ev.all_good, "events": ev.as_dict()})

    truth_window = scenery.window(-cfg.target_n, cfg.target_n)
    failure = None
    out_window = None
    try:
        out_window = reconstruct_whole(scenery.window(-cfg.n0, cfg.n0), cfg.n0, cfg.target_n,
                                       chi, d, cfg.delta, cap, cfg.t_base, on_step=on_step)
    except NoDataError as exc:
        failure = {"no_data_at_n": exc.n}
    except ChainDegenerate as exc:
        failure = {"chain_degenerate": str(exc)}
    success = out_window is not None and equivalent(out_window, truth_window)
    extra = {
        "success": bool(success),
        "output": out_window.to_line() if out_window is not None else None,
        "truth_window": truth_window.to_line(),
        "steps": steps,
        "all_steps_events": bool(steps) and len(steps) == 2 * (cfg.target_n - cfg.n0)
        and all(s["all_events"] for s in steps),
        "failure": failure,
    }
    return make_record("whole", trial, cfg, {"n0": cfg.n0, "target_n": cfg.target_n,
                                             "delta": str(cfg.delta)},
                       None, extra, time.perf_counter() - t0)


# --------------------------------------------------------------------------
# batches


def wilson(k: int, n: int, level: float = 0.95) -> tuple:
    if n == 0:
        return (float("nan"), float("nan"))
    ci = binomtest(k, n).proportion_ci(confidence_level=level, method="wilson")
    return (float(ci.low), float(ci.high))


def summarize(records: list, cfg: Optional[ExperimentConfig] = None) -> dict:
    """Success frequency with a Wilson 95% interval and event frequencies."""
    n = len(records)
    succ = sum(1 for r in records if r.get("success"))
    summary = {"trials": n, "successes": succ,
               "success_rate": succ / n if n else None,
               "success_ci95": list(wilson(succ, n)) if n else None,
               "undefined": n == 0}
    point = [r for r in records if r.get("kind") == "point"]
    if point:
        m = len(point)
        freq = {}
        for key in ("A", "B", "C", "D", "F", "G"):
            freq[key] = sum(1 for r in point if r["events"][key]) / m
        viol = [r["trial"] for r in point
                if _all_good(r["events"]) and not r["events"]["A"]]
        comp = {k: 1 - v for k, v in freq.items()}
        rhs = sum(comp[k] for k in "BCDFG")
        pooled = math.sqrt(sum(p * (1 - p) for p in comp.values()) / m)
        summary.update(
            event_frequency=freq,
            all_events=sum(1 for r in point if _all_good(r["events"])),
            no_data=sum(1 for r in point if r["events"]["no_data"]),
            margin_positive=sum(1 for r in point if (r["events"]["margin"] or 0) > 0),
            containment_violations=viol,
            union_bound={"lhs": comp["A"], "rhs": rhs, "pooled_se": pooled,
                         "holds": comp["A"] <= rhs + 3 * pooled},
            mean_stops=sum(r["stops_count"] for r in point) / m)
    whole = [r for r in records if r.get("kind") == "whole"]
    if whole:
        good = [r for r in whole if r["all_steps_events"]]
        summary.update(all_steps_events=len(good),
                       all_steps_events_success=sum(1 for r in good if r["success"]))
    if cfg is not None:
        summary["config"] = cfg.digest()
    return summary


def _all_good(ev: dict) -> bool:
    return bool(ev["B"] and ev["C"] and ev["D"] and ev["F"] and ev["G"]
                and ev["margin"] is not None and ev["margin"] > 0)


def check_summary(summary: dict, cfg: ExperimentConfig, kind: str) -> list:
    """Failed acceptance checks for a batch summary (empty when all pass)."""
    bad = []
    if summary["trials"] == 0:
        return ["no trials: success rate undefined"]
    lo = summary["success_ci95"][0]
    if kind == "point":
        if summary["containment_violations"]:
            bad.append(f"containment violated in trials {summary['containment_violations'][:10]}")
        if not summary["union_bound"]["holds"]:
            bad.append("union bound violated")
        if summary["success_rate"] <= cfg.check_success:
            bad.append(f"success rate {summary['success_rate']:.3f} <= {cfg.check_success}")
    elif kind == "whole":
        if summary["success_rate"] < cfg.check_whole:
            bad.append(f"whole-window rate {summary['success_rate']:.3f} < {cfg.check_whole}")
        if summary["all_steps_events_success"] != summary["all_steps_events"]:
            bad.append("a trial with all step events true failed")
    if kind == "point" and lo <= cfg.chance_level:
        bad.append(f"95% lower bound {lo:.3f} not above chance {cfg.chance_level}")
    return bad


_TRIALS = {"point": point_trial, "whole": whole_trial}


def _run_one(args):
    kind, cfg, i = args
    return _TRIALS[kind](cfg, i)


def iter_trials(cfg: ExperimentConfig, kind: str = "point") -> Iterator[dict]:
    """Records in trial order; ``workers > 1`` fans out to a process pool."""
    jobs = ((kind, cfg, i) for i in range(cfg.trials))
    if cfg.workers <= 1:
        for job in jobs:
            yield _run_one(job)
        return
    with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
        yield from pool.map(_run_one, jobs, chunksize=4)


def run_batch(cfg: ExperimentConfig, kind: str = "point", out: Optional[str] = None) -> dict:
    """Run ``cfg.trials`` trials; stream JSON lines to ``out``; return the summary.

    Each record is flushed as soon as it is written, so an interrupted batch
    leaves a valid prefix of complete lines.
    """
    records = []
    path = out or cfg.out
    fh = open(path, "w") if path else None
    try:
        for rec in iter_trials(cfg, kind):
            records.append(rec)
            if fh:
                fh.write(dumps(rec) + "\n")
                fh.flush()
    finally:
        if fh:
            fh.close()
    summary = summarize(records, cfg)
    if path:
        Path(str(path) + ".summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    return summary


# --------------------------------------------------------------------------
# standalone empirical checks


def excised_in_window_walk(d: IncrementDistribution, n: int, steps: int, seed,
                           start: int = 0) -> np.ndarray:
    """Nearest-neighbour walk with its excursions outside ``[-n, n]`` cut out.

    Such a walk leaves ``[-n, n]`` through ``+-(n+1)`` and can only come back
    through ``+-n``; each excursion is replaced by a single outside step,
    which keeps the in-window observation sequence intact.
    """
    if d.max_jump > 1:
        raise ValueError("excision is exact only for nearest-neighbour walks")
    out = []
    p = start
    for inc in iter_steps(d, steps, seed):
        for s in inc.tolist():
            if p > n:
                p = n
            elif p < -n:
                p = -n
            else:
                p += s
            out.append(p)
    return np.asarray(out, dtype=np.int64)


def mu_consistency(scenery_seed: int, walk_seed, n: int, delta, d: IncrementDistribution,
                   steps: int) -> dict:
    """Exact ``mu`` against the empirical law of in-window completion positions."""
    scenery = IIDScenery(scenery_seed)
    known = scenery.window(-n, n)
    params = derive_params(n, delta, known)
    mu = exact_chain_mu(params, known, d)
    pos = excised_in_window_walk(d, n, steps, walk_seed)
    inside = np.abs(pos) <= n
    colors = np.zeros(pos.size, dtype=np.uint8)
    colors[inside] = known.colors_at(pos[inside])
    ends = np.asarray(find_occurrences(colors.tobytes(), params.pattern_w.tobytes()),
                      dtype=np.int64) + len(params.pattern_w) - 1
    emp = empirical_law(pos[ends], -n, n) if ends.size else np.zeros(2 * n + 1)
    N = int(ends.size)
    tv = mu.total_variation(emp) if N else float("nan")
    return {"N": N, "tv": tv, "limit": 5 / math.sqrt(N) if N else float("nan"),
            "residual": mu.residual, "mu": mu, "empirical": emp}


def segment_failure_frequency(d: IncrementDistribution, n: int, delta, windows: int,
                              seed) -> dict:
    """Fraction of the ``windows`` sliding length-``n`` segments failing the delta-path test."""
    inc = np.concatenate(list(iter_steps(d, windows + n - 1, seed)))
    fails = windows_failing(inc, n, delta)
    k = int(fails.sum())
    p = k / fails.size
    return {"windows": int(fails.size), "failures": k, "frequency": p,
            "se": math.sqrt(p * (1 - p) / fails.size)}
