import json
import math
from fractions import Fraction

import numpy as np
import pytest

from sceneryrec import cli
from sceneryrec.experiment import (
    SCHEMA_VERSION, ConfigError, ExperimentConfig, dumps, excised_in_window_walk,
    load_records, mu_consistency, run_batch, segment_failure_frequency, summarize, wilson,
)
from sceneryrec.oracles import all_passed, verify_oracles
from sceneryrec.simulation import derive_seed
from sceneryrec.walk import geometric_tail, lazy_simple, state_distribution

SMALL = {"n": "8", "t_effective": "20000", "trials": "4", "master_seed": "11"}


def small_config(**extra):
    return ExperimentConfig.from_mapping({**SMALL, **extra})


def test_config_parsing_and_validation(tmp_path):
    text = "# profile\nn = 10\ndelta = 1/64\nfamily = geometric_tail\nepsilon = 0.01\n" \
           "decay_c = 3\nt_effective = none\n"
    cfg = ExperimentConfig.parse(text)
    assert cfg.n == 10 and cfg.delta == Fraction(1, 64) and cfg.t_effective is None
    assert cfg.walk_law().family == "geometric_tail"
    with pytest.raises(ConfigError, match="unknown config key"):
        ExperimentConfig.parse("n = 3\ncolour = 2\n")
    with pytest.raises(ConfigError, match="63"):
        ExperimentConfig.parse("delta = 1/63\n")
    with pytest.raises(ConfigError):
        ExperimentConfig.parse("family = geometric_tail\nepsilon = 0.1\ndecay_c = 2\n"
                               "p_zero_frac = 0.5\n")
    with pytest.raises(ConfigError, match="duplicate"):
        ExperimentConfig.parse("n = 3\nn = 4\n")
    with pytest.raises(ConfigError):
        ExperimentConfig.parse("n = three\n")


def test_records_are_deterministic_and_round_trip(tmp_path):
    cfg = small_config()
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    s1 = run_batch(cfg, out=str(a))
    run_batch(cfg, out=str(b))
    assert a.read_bytes() == b.read_bytes()
    recs = load_records(a)
    assert len(recs) == 4
    assert all(r["schema"] == SCHEMA_VERSION for r in recs)
    assert [dumps(r) for r in recs] == a.read_text().splitlines()
    assert s1["successes"] == sum(r["success"] for r in recs)
    assert s1["trials"] == 4
    assert json.loads((tmp_path / "a.jsonl.summary.json").read_text())["trials"] == 4
    for r in recs:
        assert {"seed", "params", "stops_count", "q_hat", "estimate", "truth", "success",
                "events"} <= set(r)


def test_worker_pool_gives_identical_records(tmp_path):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    run_batch(small_config(), out=str(a))
    run_batch(small_config(workers="2"), out=str(b))
    assert a.read_bytes() == b.read_bytes()


def test_zero_trials_flagged():
    s = run_batch(small_config(trials="0"))
    assert s["trials"] == 0 and s["undefined"] and s["success_rate"] is None


def test_load_rejects_other_schema(tmp_path):
    p = tmp_path / "r.jsonl"
    p.write_text(json.dumps({"schema": SCHEMA_VERSION + 1}) + "\n")
    with pytest.raises(ValueError):
        load_records(p)


def test_summary_union_bound_fields():
    recs = [{"kind": "point", "trial": i, "success": False, "stops_count": 0,
             "events": {"A": False, "B": True, "C": False, "D": True, "F": True, "G": False,
                        "margin": 0.1, "no_data": True}} for i in range(3)]
    s = summarize(recs)
    assert s["event_frequency"]["C"] == 0.0
    assert s["union_bound"]["lhs"] == 1.0 and s["union_bound"]["rhs"] == 2.0
    assert s["containment_violations"] == []


def test_wilson_interval():
    lo, hi = wilson(50, 100)
    assert lo == pytest.approx(0.4038, abs=1e-3) and hi == pytest.approx(0.5962, abs=1e-3)


def test_whole_trial_records(tmp_path):
    cfg = small_config(trials="2", n0="5", target_n="7")
    s = run_batch(cfg, kind="whole", out=str(tmp_path / "w.jsonl"))
    recs = load_records(tmp_path / "w.jsonl")
    assert s["trials"] == 2
    for r in recs:
        assert r["kind"] == "whole"
        for step in r["steps"]:
            assert step["success"] == (step["estimate"] == step["truth"])
        if r["failure"] is None:
            assert len(r["steps"]) == 4


def test_excised_walk_is_a_walk_on_the_window():
    pos = excised_in_window_walk(lazy_simple(0.2), 3, 50_000, derive_seed(1))
    assert np.abs(pos).max() == 4
    steps = np.abs(np.diff(pos))
    assert steps.max() <= 1
    # every visit outside is a single step that returns to the boundary
    out = np.nonzero(np.abs(pos) == 4)[0]
    out = out[out + 1 < pos.size]
    assert np.all(np.abs(pos[out + 1]) == 3)
    with pytest.raises(ValueError):
        excised_in_window_walk(geometric_tail(0.1, 2.0), 3, 10, 0)


def test_mu_consistency_small():
    r = mu_consistency(3, derive_seed(2), 4, Fraction(1, 64), lazy_simple(0.1), 400_000)
    assert r["N"] > 100
    assert r["tv"] <= r["limit"]


def test_segment_frequency_reports():
    r = segment_failure_frequency(lazy_simple(0.5), 10, Fraction(1, 10), 10_000, derive_seed(4))
    assert r["windows"] == 10_000
    assert 0 < r["frequency"] < 1
    assert r["se"] == pytest.approx(math.sqrt(r["frequency"] * (1 - r["frequency"]) / 10_000))


def test_oracle_report_passes_and_names_injected_faults():
    assert all_passed(verify_oracles(lemma2_n=(6,)))

    def tampered(d, law, t, **kw):
        out = state_distribution(d, law, t, **kw)
        if t == 4 and out.exact:
            m = list(out.masses)
            m[-1] += 1
            return out.__class__(out.support_offset, tuple(m))
        return out

    bad = [c.name for c in verify_oracles(dp=tampered, lemma2_n=(6,)) if not c.passed]
    assert "example P(S_4 outside [-4, 5]), rational" in bad
    assert any("closed form" in name for name in bad)


def test_cli_commands(tmp_path, capsys):
    cfg = tmp_path / "c.ini"
    cfg.write_text("\n".join(f"{k} = {v}" for k, v in SMALL.items()))
    out = tmp_path / "r.jsonl"
    assert cli.main(["--config", str(cfg), "--trials", "2", "--out", str(out), "run-batch"]) == 0
    assert len(load_records(out)) == 2
    assert cli.main(["run-batch", "--config", str(cfg), "--trials", "2", "--check"]) == 1
    assert cli.main(["verify-oracles"]) == 0
    assert "checks passed" in capsys.readouterr().out
    csv_path = tmp_path / "e.csv"
    assert cli.main(["verify-events", "--config", str(cfg), "--out", str(csv_path)]) == 0
    lines = csv_path.read_text().splitlines()
    assert lines[0].startswith("trial,master_seed,profile_hash,A,B")
    assert len(lines) == 5
    assert cli.main(["compute-mu", "--n", "4", "--scenery", "-4 243245153"]) == 0
    body = json.loads(capsys.readouterr().out)
    assert sum(body["masses"]) == pytest.approx(1.0)
    assert cli.main(["verify-lemma2", "--n", "6", "--check"]) == 0
    assert capsys.readouterr().out.startswith("n,delta,max_jump,count")
    assert cli.main(["reconstruct-point", "--config", str(cfg), "--trial", "1"]) == 0
    rec = json.loads(capsys.readouterr().out)
    assert rec["trial"] == 1
    bad = tmp_path / "bad.ini"
    bad.write_text("n = 8\nspeed = 3\n")
    assert cli.main(["run-batch", "--config", str(bad)]) == 2
