"""Command line entry point: seeded batches and verification reports."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from fractions import Fraction
from typing import Optional, Sequence

from .experiment import (
    ConfigError, ExperimentConfig, check_summary, dumps, iter_trials, point_trial, run_batch,
    trial_seeds,
)
from .oracles import all_passed, report, verify_oracles
from .paths import count_delta_paths_dp, enumerate_delta_paths, lemma2_bound
from .reconstruct import derive_params, exact_chain_mu
from .scenery import IIDScenery, Scenery

EXIT_CHECK_FAILED = 1
EXIT_BAD_CONFIG = 2


def _globals(parser: argparse.ArgumentParser, suppress: bool) -> None:
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", metavar="PATH", default=default)
    parser.add_argument("--seed", metavar="U64", type=int, default=default)
    parser.add_argument("--trials", metavar="N", type=int, default=default)
    parser.add_argument("--out", metavar="PATH", default=default)
    parser.add_argument("--check", action="store_true",
                        default=argparse.SUPPRESS if suppress else False)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sceneryrec",
                                description="Scenery reconstruction experiments.")
    _globals(p, suppress=False)
    sub = p.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    _globals(common, suppress=True)

    sub.add_parser("run-batch", parents=[common], help="seeded single-point trials")
    rp = sub.add_parser("reconstruct-point", parents=[common], help="one seeded trial")
    rp.add_argument("--trial", type=int, default=0)
    sub.add_parser("reconstruct-whole", parents=[common], help="seeded whole-window trials")
    mu = sub.add_parser("compute-mu", parents=[common], help="exact stationary law")
    mu.add_argument("--n", type=int)
    mu.add_argument("--scenery", metavar="LINE",
                    help="window as 'offset digits', e.g. '-4 243245153'")
    sub.add_parser("verify-events", parents=[common], help="per-trial event CSV")
    lm = sub.add_parser("verify-lemma2", parents=[common], help="delta-path counts vs bound")
    lm.add_argument("--n", type=int, nargs="+", default=[6, 8, 10, 12])
    lm.add_argument("--delta", nargs="+", default=["1/5", "1/4", "1/3"])
    lm.add_argument("--max-jump", type=int, nargs="+", default=[2, 3])
    sub.add_parser("verify-oracles", parents=[common], help="exact known-answer checks")
    return p


def load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    overrides = {}
    if args.seed is not None:
        overrides["master_seed"] = args.seed
    if args.trials is not None:
        overrides["trials"] = args.trials
    if args.out is not None:
        overrides["out"] = args.out
    if overrides:
        merged = {k: ("none" if v is None else v) for k, v in cfg.as_dict().items()
                  if not (k == "out" and v is None)}
        merged.update(overrides)
        cfg = ExperimentConfig.from_mapping(merged)
    return cfg


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        with open(out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def cmd_batch(cfg: ExperimentConfig, args, kind: str) -> int:
    summary = run_batch(cfg, kind)
    print(json.dumps(summary, indent=2, sort_keys=True))
    if args.check:
        bad = check_summary(summary, cfg, kind)
        for msg in bad:
            print(f"CHECK FAILED: {msg}", file=sys.stderr)
        return EXIT_CHECK_FAILED if bad else 0
    return 0


def cmd_point(cfg: ExperimentConfig, args) -> int:
    _emit(dumps(point_trial(cfg, args.trial)), cfg.out)
    return 0


def cmd_mu(cfg: ExperimentConfig, args) -> int:
    n = args.n or cfg.n
    if args.scenery:
        known = Scenery.from_line(args.scenery)
        if not known.covers(-n, n):
            raise ConfigError(f"scenery window must cover [-{n}, {n}]")
        known = known.restrict(-n, n)
    else:
        scenery_seed, _ = trial_seeds(cfg.master_seed, 0)
        known = IIDScenery(scenery_seed).window(-n, n)
    params = derive_params(n, cfg.delta, known, cfg.cap, cfg.t_base)
    mu = exact_chain_mu(params, known, cfg.walk_law())
    body = {"scenery": known.to_line(), "params": params.digest(),
            "offset": int(mu.offset), "masses": [float(m) for m in mu.masses], "residual": mu.residual,
            "iterations": mu.iterations}
    _emit(json.dumps(body, indent=2), cfg.out)
    return 0


EVENT_COLUMNS = ("A", "B", "C", "D", "F", "G", "margin", "stops_tau", "stops_nu", "no_data",
                 "margin_degenerate", "stops_disagree", "max_abs", "delta_failures",
                 "estimate", "truth", "g_deviation")


def cmd_events(cfg: ExperimentConfig, args) -> int:
    fh = open(cfg.out, "w", newline="") if cfg.out else sys.stdout
    try:
        writer = csv.writer(fh)
        writer.writerow(("trial", "master_seed", "profile_hash") + EVENT_COLUMNS)
        viol = 0
        for rec in iter_trials(cfg, "point"):
            ev = dict(rec["events"], estimate=rec["estimate"], truth=rec["truth"])
            writer.writerow([rec["trial"], cfg.master_seed, cfg.digest()]
                            + [ev[c] for c in EVENT_COLUMNS])
            fh.flush()
            good = all(ev[k] for k in "BCDFG") and (ev["margin"] or 0) > 0
            viol += good and not ev["A"]
    finally:
        if fh is not sys.stdout:
            fh.close()
    if args.check and viol:
        print(f"CHECK FAILED: {viol} containment violations", file=sys.stderr)
        return EXIT_CHECK_FAILED
    return 0


def cmd_lemma2(cfg: ExperimentConfig, args) -> int:
    rows = ["n,delta,max_jump,count,dp_count,bound,holds"]
    ok = True
    for n in args.n:
        for ds in args.delta:
            delta = Fraction(ds)
            for mj in args.max_jump:
                cnt = enumerate_delta_paths(n, delta, max_jump=mj).count
                dp = count_delta_paths_dp(n, delta, mj)
                bound = lemma2_bound(n, delta)
                holds = cnt == dp and cnt <= bound and (delta * n >= 1 or cnt == 2 ** n)
                ok &= holds
                rows.append(f"{n},{delta},{mj},{cnt},{dp},{bound:.6g},{holds}")
    _emit("\n".join(rows), cfg.out)
    return EXIT_CHECK_FAILED if args.check and not ok else 0


def cmd_oracles(cfg: ExperimentConfig, args) -> int:
    checks = verify_oracles()
    _emit(report(checks), cfg.out)
    return 0 if all_passed(checks) else EXIT_CHECK_FAILED


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args)
        if args.command == "run-batch":
            return cmd_batch(cfg, args, "point")
        if args.command == "reconstruct-whole":
            return cmd_batch(cfg, args, "whole")
        handler = {"reconstruct-point": cmd_point, "compute-mu": cmd_mu,
                   "verify-events": cmd_events, "verify-lemma2": cmd_lemma2,
                   "verify-oracles": cmd_oracles}[args.command]
        return handler(cfg, args)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    except KeyboardInterrupt:
        print("interrupted; completed records were flushed", file=sys.stderr)
        return 130


if __name__ == "__main__":
    sys.exit(main())
