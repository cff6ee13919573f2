import csv
import json
from pathlib import Path

import pytest

from flexnum import cli
from flexnum.experiment import COLUMNS
from flexnum.instance import SimulationConfig, partition_instance

GOLDEN = Path(__file__).parent / "golden" / "demand_rate_seed0.csv"


def run(*argv):
    return cli.main([str(a) for a in argv])


@pytest.fixture
def inst_file(tmp_path):
    path = tmp_path / "inst.json"
    assert run("generate", "--seed", 7, "--out", path) == 0
    return path


def test_generate_is_byte_identical(tmp_path, capsys):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert run("generate", "--seed", 7, "--out", a) == 0
    assert run("generate", "--seed", 7, "--out", b) == 0
    assert a.read_bytes() == b.read_bytes()
    err = capsys.readouterr().err
    assert "|B|=549 |I|=176 |K^l|=5 |K^c|=5 grid=16x11" in err


def test_generate_warns_when_all_latency_rates_masked(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"latency_ms": 0.25, "shapes": ["1"]}))
    assert run("generate", "--config", cfg, "--out", tmp_path / "x.json") == 0
    assert "warning: all latency-service rates are masked" in capsys.readouterr().err


def test_malformed_config_is_line_anchored(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text('{\n "horizon_ms": 2.0,\n "n_latency": -1\n}\n')
    assert run("generate", "--config", cfg) == 1
    assert f"{cfg}:3: n_latency" in capsys.readouterr().err
    cfg.write_text('{\n "horizon_ms": 2.0\n "x": 1\n}\n')
    assert run("generate", "--config", cfg) == 1
    assert f"{cfg}:3:" in capsys.readouterr().err


def test_print_defaults_round_trips(capsys):
    assert run("--print-defaults") == 0
    cfg = SimulationConfig.from_dict(json.loads(capsys.readouterr().out))
    assert cfg == SimulationConfig()


@pytest.mark.parametrize("mode", ["rate", "lp", "ld", "lp+ld", "exact", "fixed:0.25ms-30kHz"])
def test_solve_then_validate(inst_file, tmp_path, mode):
    out = tmp_path / "res.json"
    code = run("solve", "--instance", inst_file, "--mode", mode, "--out", out, "--max-subgradient-iters", 50)
    data = json.loads(out.read_text())
    assert code == (0 if data["assignment"]["feasible"] else 2)
    assert run("validate", "--instance", inst_file, "--result", out) == code
    again = tmp_path / "again.json"
    run("solve", "--instance", inst_file, "--mode", mode, "--out", again, "--max-subgradient-iters", 50)
    assert again.read_bytes() == out.read_bytes()


def test_fixed_shape1_at_quarter_ms_is_demand_unmet(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"latency_ms": 0.25}))
    inst = tmp_path / "i.json"
    run("generate", "--config", cfg, "--seed", 1, "--out", inst)
    assert run("solve", "--instance", inst, "--mode", "fixed:0.5ms-15kHz", "--out", tmp_path / "r.json") == 2


def test_exact_on_partition_without_equal_split(tmp_path):
    path = tmp_path / "p.json"
    partition_instance([2, 4, 10]).save(path)
    out = tmp_path / "r.json"
    run("solve", "--instance", path, "--mode", "exact", "--out", out)
    res = json.loads(out.read_text())
    # no split reaches 8: either the demand is missed or the capacity side gets less than 8
    assert res["assignment"]["unmet"] or res["assignment"]["objective"] < 8


def test_errors_exit_one(inst_file, tmp_path, capsys):
    assert run("solve", "--instance", inst_file, "--mode", "magic") == 1
    small = tmp_path / "s.json"
    partition_instance([1, 1]).save(small)
    assert run("solve", "--instance", small, "--mode", "fixed:0.5ms-15kHz") == 1
    assert run("solve", "--instance", tmp_path / "missing.json") == 1
    assert run("solve", "--instance", inst_file, "--rho-grid", "0,2") == 1


def test_validate_catches_tampering(inst_file, tmp_path):
    out = tmp_path / "res.json"
    run("solve", "--instance", inst_file, "--mode", "rate", "--out", out)
    data = json.loads(out.read_text())
    data["assignment"]["objective"] += 1000
    out.write_text(json.dumps(data))
    assert run("validate", "--instance", inst_file, "--result", out) == 1


def test_trace_written(inst_file, tmp_path):
    trace = tmp_path / "trace.csv"
    run("solve", "--instance", inst_file, "--mode", "ld", "--max-subgradient-iters", 7,
        "--trace", trace, "--out", tmp_path / "r.json")
    rows = list(csv.reader(trace.open()))
    assert rows[0] == ["h", "g", "s_inf", "assigned"] and len(rows) == 8


def test_experiment_single_exact_row(tmp_path):
    out = tmp_path / "e.csv"
    assert run("experiment", "--sweep", "demand", "--values", "16", "--seeds", 1, "--modes", "exact",
               "--exact", "--out", out) == 0
    rows = list(csv.DictReader(out.open()))
    assert [r["seed"] for r in rows] == ["0", "mean"]
    assert float(rows[0]["gap"]) == 0.0 and rows[0]["feasible"] == "1"
    meta = json.loads(Path(str(out) + ".meta.json").read_text())
    assert meta["seeds"] == 1 and meta["demand_convention"] == "q_bits = q_kbps * horizon_ms"
    assert "wall" not in json.dumps(meta)


def test_experiment_rejects_values_outside_table(tmp_path):
    assert run("experiment", "--sweep", "tau", "--values", "0.3", "--seeds", 1, "--out", tmp_path / "x.csv") == 1


def test_experiment_golden_file(tmp_path):
    out = tmp_path / "g.csv"
    run("experiment", "--sweep", "demand", "--values", "16,32", "--seeds", 2, "--modes", "rate,lp", "--out", out)
    with out.open() as fh:
        assert next(csv.reader(fh)) == list(COLUMNS)
    assert out.read_text() == GOLDEN.read_text()


def test_experiment_rows_sorted_and_means_last(tmp_path):
    out = tmp_path / "s.csv"
    run("experiment", "--sweep", "demand", "--values", "32,16", "--seeds", 2, "--modes", "rate", "--out", out)
    rows = list(csv.DictReader(out.open()))
    assert [(r["value"], r["seed"]) for r in rows] == [
        ("16.0", "0"), ("16.0", "1"), ("16.0", "mean"), ("32.0", "0"), ("32.0", "1"), ("32.0", "mean"),
    ]
