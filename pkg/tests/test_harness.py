import json
import subprocess
import sys
from dataclasses import replace
from fractions import Fraction

import pytest

from revqbc import oracles
from revqbc.cli import main
from revqbc.experiments import (
    ConfigError, ExperimentConfig, ExperimentFailure, derive_seed, run_experiment, run_trial, run_trials,
    trial_seed,
)
from revqbc.protocol import InvariantViolation
from revqbc.report import CSV_HEADER, ExperimentReport, read_report, render_report, report_from_csv, write_report


def small(experiment, **kw):
    kw.setdefault("trials", 200)
    kw.setdefault("n", {"mlc": 3, "nosig": 3, "conceal": 4}.get(experiment, 6))
    return ExperimentConfig(experiment, **kw)


# -- oracles -----------------------------------------------------------------

def test_born_weights_are_exact():
    from revqbc.quantum import Basis
    assert oracles.born(0, Basis.RECTILINEAR, 0, Basis.RECTILINEAR) == 1
    assert oracles.born(0, Basis.RECTILINEAR, 1, Basis.RECTILINEAR) == 0
    assert oracles.born(1, Basis.DIAGONAL, 0, Basis.RECTILINEAR) == Fraction(1, 2)


@pytest.mark.parametrize("n", [2, 3, 4])
def test_bind_oracle_is_one_half(n):
    assert oracles._round_acceptance(n, (1,) * n, True) == Fraction(1, 2)


def test_bind_oracle_multiplies_over_rounds():
    assert oracles.enumerate_oracle("bind", 4, s=3) == 0.125


def test_honest_oracle():
    assert oracles.enumerate_oracle("honest", 4) == 1.0


def test_conceal_oracle_example():
    assert oracles.enumerate_oracle("conceal", 6, k=1) == pytest.approx(131 / 152, abs=1e-15)
    assert oracles.enumerate_oracle("conceal", 6, k=0) == 1.0


def test_oracle_size_cap():
    with pytest.raises(oracles.OracleSizeError):
        oracles.enumerate_oracle("conceal", 7, k=1)
    with pytest.raises(ValueError):
        oracles.enumerate_oracle("conceal", 4)
    with pytest.raises(ValueError):
        oracles.enumerate_oracle("mlc", 4)


# -- config ------------------------------------------------------------------

@pytest.mark.parametrize("kw", [
    {"experiment": "teleport"}, {"experiment": "bind", "n": 1}, {"experiment": "bind", "n": 13},
    {"experiment": "mlc", "n": 6}, {"experiment": "honest", "trials": 0}, {"experiment": "bind", "rounds": 0},
    {"experiment": "conceal", "n": 4, "r_weight": 5}, {"experiment": "honest", "fmt": "xml"},
    {"experiment": "honest", "workers": 0}, {"experiment": "honest", "master_seed": -1},
])
def test_config_validation(kw):
    with pytest.raises(ConfigError):
        ExperimentConfig(**kw)


# -- seeds and determinism ---------------------------------------------------

def test_seed_derivation():
    assert derive_seed(0, 1) == derive_seed(0, 1)
    assert len({trial_seed(0, i) for i in range(1000)}) == 1000
    assert trial_seed(0, 5) != trial_seed(1, 5)
    assert 0 <= derive_seed(2**64 - 1, 2**40) < 2**64


def test_seed_splicing_changes_one_trial():
    config = small("conceal", trials=40)
    base = run_trials(config)
    spliced = [run_trial(config, i, seed=12345 if i == 17 else None) for i in range(40)]
    diff = [i for i, (a, b) in enumerate(zip(base, spliced)) if a != b]
    assert set(diff) <= {17}
    assert spliced[17] == run_trial(config, 17, seed=12345)


@pytest.mark.parametrize("experiment", ["honest", "bind", "conceal", "mlc", "nosig"])
def test_reports_independent_of_worker_count(experiment):
    config = small(experiment, trials=60)
    texts = {render_report(run_experiment(replace(config, workers=w)), "json", include_timing=False)
             for w in (1, 3)}
    assert len(texts) == 1


def test_invariant_failure_echoes_seed(monkeypatch):
    import revqbc.experiments as ex

    def broken(config, seed):
        raise InvariantViolation("boom")

    monkeypatch.setitem(ex._TRIALS, "honest", broken)
    with pytest.raises(ExperimentFailure) as exc:
        run_trial(small("honest"), 3)
    assert exc.value.seed == trial_seed(0, 3) and exc.value.index == 3
    assert str(exc.value.seed) in str(exc.value)


# -- statistics --------------------------------------------------------------

def test_honest_is_exact():
    r = run_experiment(small("honest", trials=300))
    assert r.estimate == 1.0 and r.stderr == 0.0 and r.exact == 1.0 and not r.flagged


def test_bind_estimate_and_oracle_agree():
    r = run_experiment(small("bind", n=4, trials=2000))
    assert r.exact == 0.5
    assert abs(r.estimate - 0.5) <= 3 * r.stderr
    assert r.stderr == pytest.approx((r.estimate * (1 - r.estimate) / 2000) ** 0.5, rel=1e-9)
    assert not r.flagged


def test_conceal_report_carries_excess():
    r = run_experiment(small("conceal", n=4, r_weight=1, trials=500))
    d = r.details
    assert d["closed_form"] == 0.75
    assert d["excess_over_bound"] == pytest.approx(r.exact - 0.75, abs=1e-12)
    assert d["raw_parity_agreement"] == 0.75


def test_flag_raised_on_disagreement(monkeypatch):
    import revqbc.experiments as ex
    monkeypatch.setattr(ex, "_details", lambda config, results: (0.0, {}))
    assert run_experiment(small("honest", trials=50)).flagged


# -- reports -----------------------------------------------------------------

def sample_report():
    return ExperimentReport("bind", 8, 100, 7, 0.123456789012345678, 0.01, None, 3, 1.5,
                            {"rounds": 3}, {"reference": 0.125})


def test_reals_rounded_to_twelve_digits():
    assert sample_report().estimate == 0.123456789012


def test_report_bytes_stable(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    write_report(sample_report(), a)
    write_report(sample_report(), b)
    assert a.read_bytes() == b.read_bytes()


def test_csv_header(tmp_path):
    path = tmp_path / "r.csv"
    write_report(sample_report(), path, "csv")
    lines = path.read_text().splitlines()
    assert lines[0] == "experiment,n,trials,seed,estimate,stderr,exact,aborts,wall_time"
    assert tuple(lines[0].split(",")) == CSV_HEADER
    row = report_from_csv(path.read_text())
    assert row["exact"] == "" and row["estimate"] == "0.123456789012"


def test_json_round_trip(tmp_path):
    path = tmp_path / "r.json"
    report = sample_report()
    write_report(report, path)
    assert read_report(path) == report


def test_unknown_format():
    with pytest.raises(ValueError):
        render_report(sample_report(), "yaml")


# -- command line ------------------------------------------------------------

def test_cli_writes_report(tmp_path, capsys):
    out = tmp_path / "bind.csv"
    code = main(["bind", "--n", "4", "--trials", "100", "--rounds", "2", "--out", str(out), "--format", "csv"])
    assert code == 0
    row = report_from_csv(out.read_text())
    assert row["experiment"] == "bind" and row["exact"] == "0.25"


def test_cli_stdout_json(capsys):
    assert main(["honest", "--n", "4", "--trials", "50", "--no-timing"]) == 0
    d = json.loads(capsys.readouterr().out)
    assert d["estimate"] == 1.0 and d["wall_time"] == 0.0


def test_cli_config_file_and_override(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"n": 4, "trials": 30, "r-weight": 2, "seed": 9}))
    assert main(["conceal", "--config", str(cfg), "--trials", "20"]) == 0
    d = json.loads(capsys.readouterr().out)
    assert (d["n"], d["trials"], d["seed"], d["config"]["r_weight"]) == (4, 20, 9, 2)


@pytest.mark.parametrize("argv", [
    ["bind", "--n", "1"], ["mlc", "--n", "9"], ["honest", "--format", "xml"], ["teleport"],
    ["honest", "--trials", "many"], ["conceal", "--rounds", "2"],
])
def test_cli_bad_config_exits_2(argv, capsys):
    try:
        code = main(argv)
    except SystemExit as exc:
        code = exc.code
    assert code == 2


def test_cli_missing_config_file(tmp_path):
    assert main(["honest", "--config", str(tmp_path / "nope.json")]) == 2


def test_cli_invariant_exits_1(monkeypatch, capsys):
    import revqbc.experiments as ex

    def broken(config, seed):
        raise InvariantViolation("boom")

    monkeypatch.setitem(ex._TRIALS, "honest", broken)
    assert main(["honest", "--trials", "5"]) == 1
    assert "seed" in capsys.readouterr().err


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "revqbc", "nosig", "--n", "2", "--trials", "5",
                           "--format", "csv"], capture_output=True, text=True, check=True)
    assert proc.stdout.startswith("experiment,n,trials")
