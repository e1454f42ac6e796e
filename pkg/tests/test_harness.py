import json
from fractions import Fraction

import pytest

from symba.adversary import ConfigInvalid, RunRecord
from symba.cli import EXIT_CONFIG, EXIT_OK, EXIT_PROPERTY, main
from symba.harness import (
    ExperimentConfig,
    load_config,
    parse_config_text,
    records_from_text,
    records_to_text,
    require_valid,
    run_experiment,
    standard_error,
    summarize,
    validate_config,
)


def sample_records():
    return [
        RunRecord(1, "adversary-lockstep", [1, 0], 64, {1: None, 2: 0}, 2, 3, [[True, True], [True, True], [False, True]], 40),
        RunRecord(2, "adversary-lockstep", [1, 0], 5, {1: 1, 2: 1}, 3, None, [[True, True], [True, True], [True, True]], 30),
        RunRecord(1, "benign-fair", [1, 0], 4, {1: 0, 2: 0}, events=20),
        RunRecord(2, "benign-fair", [1, 0], 6, {1: 1, 2: 1}, events=22),
    ]


def test_desk_default_is_valid():
    rep = validate_config(ExperimentConfig())
    assert rep.ok
    assert any("tail bound" in w for w in rep.warnings)
    assert ExperimentConfig().epsilon == Fraction(1, 80)


def test_tiny_layout_rejected():
    rep = validate_config(ExperimentConfig(n=4, t=1))
    assert not rep.ok
    assert any("c*t" in e for e in rep.errors)
    with pytest.raises(ConfigInvalid):
        require_valid(ExperimentConfig(n=4, t=1))


@pytest.mark.parametrize(
    "kw,needle",
    [({"n": 24, "t": 5}, "divide"), ({"n": 18, "t": 6}, "c = 1/3"), ({"R": 3}, "R^2"),
     ({"eps": Fraction(1, 4)}, "eps"), ({"protocol": "nope"}, "protocol"), ({"seeds": 0}, "seed")],
)
def test_hard_errors_named(kw, needle):
    rep = validate_config(ExperimentConfig(**kw))
    assert any(needle in e for e in rep.errors), rep.errors


def test_config_file(tmp_path):
    p = tmp_path / "exp.cfg"
    p.write_text("# desk run\nn = 25\nt = 5\neps = 1/100\nrounds-cap = 32  # short\nprotocol = benor-style\n")
    cfg = load_config(p, seeds=7)
    assert (cfg.n, cfg.t, cfg.eps, cfg.rounds_cap, cfg.seeds) == (25, 5, Fraction(1, 100), 32, 7)


def test_config_file_errors():
    with pytest.raises(ConfigInvalid):
        parse_config_text("colour = blue")
    with pytest.raises(ConfigInvalid):
        parse_config_text("n: 25")
    with pytest.raises(ConfigInvalid):
        parse_config_text("n = many")


@pytest.mark.parametrize("fmt", ["json-lines", "csv"])
def test_records_round_trip(fmt):
    recs = sample_records()
    text = records_to_text(recs, fmt)
    assert records_from_text(text, fmt) == recs
    assert records_to_text(records_from_text(text, fmt), fmt) == text


def test_summary_counts():
    s = summarize(sample_records(), oracle=[[1, 1], [0.5, 1], [0.5, 0.5]])
    assert s.runs == {"adversary-lockstep": 2, "benign-fair": 2}
    assert sum(s.rounds_histogram["benign-fair"].values()) == 2
    assert s.rounds_mean == {"adversary-lockstep": 34.5, "benign-fair": 5.0}
    assert s.undecided_at_cap == {"adversary-lockstep": 1, "benign-fair": 0}
    assert s.escape_histogram == {"3": 1, "never": 1}
    row = next(r for r in s.per_round_success if r["round"] == 3 and r["group"] == 1)
    assert (row["trials"], row["successes"], row["oracle"]) == (2, 1, 0.5)
    surv = {r["messages_through_round"]: r for r in s.in_class_survival}
    assert surv[2]["in_class"] == 2 and surv[3]["in_class"] == 1
    assert surv[3]["oracle"] == pytest.approx(0.5 * 0.25)


def test_standard_error():
    assert standard_error(0.5, 100) == pytest.approx(0.05)
    assert standard_error(1.0, 10) == 0.0


@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    cfg = ExperimentConfig(seeds=4, chain_rounds=4, rounds_cap=32, out=str(out))
    return cfg, run_experiment(cfg)


def test_small_experiment(small_run):
    cfg, res = small_run
    assert res.witness is not None and res.witness.undecided_groups()
    assert res.summary.runs == {"adversary-lockstep": 4, "benign-fair": 4}
    assert set(res.files) == {"records", "summary", "config", "witness"}


def test_rerun_is_byte_identical(small_run, tmp_path):
    cfg, res = small_run
    again = run_experiment(ExperimentConfig(**{**cfg.__dict__, "out": str(tmp_path)}))
    for key in ("records", "summary", "witness"):
        with open(res.files[key], "rb") as a, open(again.files[key], "rb") as b:
            assert a.read() == b.read()


# -- command line -------------------------------------------------------------------------


def run_cli(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_cli_dist(capsys):
    code, out, _ = run_cli(capsys, "dist", "--probs", "0.72,0.28", "--t", "10", "--eps", "0.01")
    assert code == EXIT_OK
    rec = json.loads(out)
    assert rec["adjusted"] == {"m0": "7/10", "m1": "3/10"}
    assert rec["star"] == "m0"


def test_cli_dist_bad_eps(capsys):
    code, _, err = run_cli(capsys, "dist", "--probs", "0.5,0.5", "--t", "10", "--eps", "0.2")
    assert code == EXIT_CONFIG
    assert "eps" in err


def test_cli_run_dry_run_rejects(capsys):
    code, out, _ = run_cli(capsys, "run", "--n", "4", "--t", "1", "--dry-run")
    assert code == EXIT_CONFIG
    assert json.loads(out)["errors"]


def test_cli_run_invalid_exits_two(capsys, tmp_path):
    code, _, err = run_cli(capsys, "run", "--n", "24", "--t", "5", "--out", str(tmp_path))
    assert code == EXIT_CONFIG
    assert "divide" in err


def test_cli_chain_verify_and_reverify(capsys, tmp_path):
    path = tmp_path / "chain.jsonl"
    code, out, _ = run_cli(capsys, "chain", "--groups", "3", "--rounds", "4", "--verify", "--out", str(path))
    assert code == EXIT_OK
    rep = json.loads(out)
    assert rep["classes"] == 142 and rep["properties"] == {"1": True, "2": True, "3": True, "4": True}
    code, out, _ = run_cli(capsys, "verify", "--chain", str(path), "--groups", "3")
    assert code == EXIT_OK and json.loads(out)["classes"] == 142


def test_cli_verify_detects_broken_chain(capsys, tmp_path):
    path = tmp_path / "chain.jsonl"
    run_cli(capsys, "chain", "--groups", "3", "--rounds", "4", "--out", str(path))
    lines = path.read_text().splitlines()
    del lines[5]
    path.write_text("\n".join(lines) + "\n")
    code, _, err = run_cli(capsys, "verify", "--chain", str(path), "--groups", "3")
    assert code == EXIT_PROPERTY
    assert "property 2" in err


def test_cli_verify_records(capsys, small_run, tmp_path):
    _, res = small_run
    code, out, _ = run_cli(capsys, "verify", "--records", res.files["records"], "--summary", res.files["summary"])
    assert code == EXIT_OK
    summary = json.loads(open(res.files["summary"]).read())
    summary["rounds_mean"]["benign-fair"] += 1
    bad = tmp_path / "summary.json"
    bad.write_text(json.dumps(summary))
    code, _, _ = run_cli(capsys, "verify", "--records", res.files["records"], "--summary", str(bad))
    assert code == EXIT_PROPERTY
