import csv
import json
import subprocess
import sys

import pytest

from easysched.cli import main
from easysched.jobshop import Schedule, gantt_export, generate_instance, dump_instance, load_instance
from easysched.pso import PsoParams, pso_run
from easysched.runtime.sim import report_json, run_simulation
from easysched.scenario import load_scenario

from conftest import DATA, write_scenario_files


@pytest.fixture
def inst_file(tmp_path):
    p = tmp_path / "inst.txt"
    p.write_text(dump_instance(generate_instance(2, 3, 2, seed=4)))
    return p


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_gen_writes_and_checks(tmp_path, capsys):
    out = tmp_path / "g.txt"
    assert main(["gen", "-m", "3", "-n", "10", "-V", "5", "--seed", "1", "-o", str(out)]) == 0
    assert load_instance(out.read_text()) == generate_instance(3, 10, 5, 1)
    assert main(["gen", "--check", str(out)]) == 0
    assert "30 operations" in capsys.readouterr().out
    assert main(["gen", "--check", str(tmp_path / "nope.txt")]) == 2


def test_predict_toy_one_op(tmp_path, capsys):
    p = tmp_path / "one.txt"
    p.write_text("1 1 1\n0 7 12\n")
    assert main(["predict", str(p), "--swarm", "2", "--neighborhood", "1", "--iterations", "2",
                 "--out-dir", str(tmp_path)]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "gamma,makespan,energy,F,seed"
    assert lines[1].split(",")[:3] == ["1", "7", "1.2"]


def test_predict_matches_library_call(inst_file, tmp_path, capsys):
    assert main(["predict", str(inst_file), "--gamma", "0.7", "--iterations", "15", "--swarm", "8",
                 "--seed", "3", "--runs", "2", "--out-dir", str(tmp_path)]) == 0
    out = capsys.readouterr().out.splitlines()
    assert len(out) == 4 and out[-1].split(",")[-1].startswith("best:")
    inst = load_instance(inst_file.read_text())
    lib = pso_run(inst, 0.7, PsoParams(swarm_size=8, iterations=15, seed=3)).schedule
    data = json.loads((tmp_path / "schedule_seed3.json").read_text())
    assert Schedule.from_dict(data, inst) == lib
    assert (tmp_path / "gantt_seed3.csv").read_text() == gantt_export(lib)
    # and gantt re-export of the saved schedule reproduces the CSV
    assert main(["gantt", str(tmp_path / "schedule_seed3.json"), "--instance", str(inst_file)]) == 0
    assert capsys.readouterr().out == gantt_export(lib)


def test_predict_missing_instance(capsys):
    assert main(["predict", "does/not/exist.txt"]) == 2
    assert "instance not found" in capsys.readouterr().err


def test_predict_bad_gamma(inst_file):
    assert main(["predict", str(inst_file), "--gamma", "2"]) == 2


def test_run_writes_traces_matching_library(tmp_path, capsys):
    write_scenario_files(tmp_path, [(0, 19, 36), (22, 28, 33), (40, 19, 36)])
    (tmp_path / "s.toml").write_text(
        'seed = 2\nhorizon_s = 50\n[pso]\nswarm_size = 8\niterations = 10\n'
        '[[factory]]\nname="aou1"\ninstance="inst.txt"\nprovider="aoe1"\n'
        '[[provider]]\nname="aoe1"\ncapacity_wh=1e6\ntrace="trace.csv"\n')
    out = tmp_path / "out"
    assert main(["run", str(tmp_path / "s.toml"), "--out-dir", str(out)]) == 0
    lib = run_simulation(load_scenario(tmp_path / "s.toml"))
    assert (out / "report.json").read_text() == report_json(lib)
    neg = rows(out / "negotiation.csv")
    assert list(neg[0]) == ["agent", "gamma", "makespan_s", "energy_wh", "reply"]
    react = rows(out / "reactive.csv")
    assert list(react[0]) == ["agent", "taux", "old_mk", "old_e", "new_mk", "new_e", "penalty"]
    assert len(react) == 1 and react[0]["penalty"] in ("true", "false")
    assert "taux=26.31%" in capsys.readouterr().out


def test_run_repetitions_and_horizon_zero(tmp_path):
    write_scenario_files(tmp_path, [(0, 19, 36)])
    (tmp_path / "s.toml").write_text(
        '[pso]\nswarm_size = 6\niterations = 5\n'
        '[[factory]]\nname="aou1"\ninstance="inst.txt"\nprovider="aoe1"\n'
        '[[provider]]\nname="aoe1"\ncapacity_wh=1e6\ntrace="trace.csv"\n')
    out = tmp_path / "o"
    assert main(["run", str(tmp_path / "s.toml"), "--repetitions", "5", "--horizon", "0",
                 "--out-dir", str(out)]) == 0
    assert sorted(p.name for p in out.iterdir()) == ["aggregate.json"] + [f"rep{i}" for i in range(5)]
    agg = json.loads((out / "aggregate.json").read_text())["aou1"]
    assert agg["runs"] == 5 and {"mean_makespan_s", "mean_energy_wh", "best_makespan_s"} <= set(agg)
    assert rows(out / "rep0" / "reactive.csv") == []


def test_run_bundled_scenario(tmp_path, capsys):
    assert main(["run", "scenario_52", "--out-dir", str(tmp_path)]) == 0
    react = rows(tmp_path / "reactive.csv")
    assert len(react) == 1 and 24 <= float(react[0]["taux"]) <= 28
    assert react[0]["penalty"] == "false"


def test_run_invalid_scenario_lists_problems(tmp_path, capsys):
    (tmp_path / "bad.toml").write_text('repetitions = 0\nwhat = 1\n')
    assert main(["run", str(tmp_path / "bad.toml")]) == 2
    err = capsys.readouterr().err
    assert "repetitions" in err and "what" in err and "no [[factory]]" in err


def test_bench_rows(inst_file, capsys):
    assert main(["bench", str(inst_file), "--gammas", "1", "--runs", "1", "--iterations", "5",
                 "--swarm", "6"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].startswith("gamma,runs,mean_makespan_s") and len(lines) == 2
    assert main(["bench", "--family", "2x3x2", "--gammas", "1,0.5", "--runs", "2", "--iterations", "5",
                 "--swarm", "6"]) == 0
    assert len(capsys.readouterr().out.splitlines()) == 3


def test_bench_usage_errors(inst_file):
    assert main(["bench", str(inst_file), "--gammas", ""]) == 2
    assert main(["bench", str(inst_file), "--gammas", "1,x"]) == 2
    assert main(["bench", "--family", "3by4"]) == 2
    assert main(["bench"]) == 2


def test_serve_all_roles_loopback(tmp_path, capsys):
    write_scenario_files(tmp_path, [(0, 19, 36), (22, 28, 33), (40, 19, 36)])
    (tmp_path / "s.toml").write_text(
        'horizon_s = 50\n[pso]\nswarm_size = 6\niterations = 5\n'
        '[[factory]]\nname="aou1"\ninstance="inst.txt"\nprovider="aoe1"\n'
        '[[provider]]\nname="aoe1"\ncapacity_wh=1e6\ntrace="trace.csv"\n')
    assert main(["serve", str(tmp_path / "s.toml"), "--role", "all", "--out-dir", str(tmp_path / "o")]) == 0
    printed = json.loads(capsys.readouterr().out)
    sim = run_simulation(load_scenario(tmp_path / "s.toml"))
    assert printed["reactive"] == sim["reactive"] and printed["negotiation"] == sim["negotiation"]
    assert main(["serve", str(tmp_path / "s.toml"), "--role", "aou"]) == 2
    assert main(["serve", str(tmp_path / "s.toml"), "--role", "orchestrator", "--peer", "bad"]) == 2


def test_usage_error_exit_code():
    assert main([]) == 2
    assert main(["frobnicate"]) == 2


def test_console_script_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "easysched.cli", "gen", "-m", "1", "-n", "1", "-V", "1"],
                       capture_output=True, text=True, check=True)
    assert r.stdout.startswith("1 1 1")


def test_gantt_from_report(tmp_path, capsys):
    assert main(["run", "scenario_52", "--horizon", "0", "--out-dir", str(tmp_path)]) == 0
    capsys.readouterr()
    inst = DATA / "instances" / "3x5x10.txt"
    assert main(["gantt", str(tmp_path / "report.json"), "--instance", str(inst), "-o",
                 str(tmp_path / "g.csv")]) == 0
    g = rows(tmp_path / "g.csv")
    assert len(g) == 30
    assert main(["gantt", str(tmp_path / "report.json"), "--instance", str(inst), "--factory", "zz"]) == 2
