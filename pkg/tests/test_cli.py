import csv
import io
import json
import subprocess
import sys

import jsonschema
import pytest

from splitfield.cli import (
    SCHEMA,
    ConfigError,
    dumps,
    emit_report,
    execute,
    main,
    selftest_configs,
    validate,
)

UNIT = {"pieces": [{"lower": [0.0], "upper": [1.0], "value": 1.0}]}
THEOREM1 = {
    "experiment": "theorem1", "seed": 1, "model": {"name": "poisson"}, "phi": UNIT,
    "schedule": [{"r": 16.0, "lambda": 0.2}, {"r": 64.0, "lambda": 0.1},
                 {"r": 256.0, "lambda": 0.05}, {"r": 1024.0, "lambda": 0.02}],
}


def _write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def _verdicts(obj):
    if isinstance(obj, dict):
        for k, v in obj.items():
            if k in ("verdict", "overall") and isinstance(v, str):
                yield v
            else:
                yield from _verdicts(v)
    elif isinstance(obj, list):
        for v in obj:
            yield from _verdicts(v)


# run ------------------------------------------------------------------------------

def test_theorem1_run(tmp_path, capsys):
    code = main(["run", _write(tmp_path, THEOREM1), "--out", str(tmp_path / "o")])
    assert code == 0
    rep = json.loads((tmp_path / "o" / "theorem1.json").read_text())
    assert rep["target"] == 0.5
    assert rep["overall"] == "pass"
    assert capsys.readouterr().out.strip().splitlines() == [
        "theorem1: pass (5/5 verdicts pass)"]


def test_increasing_schedule_is_config_error(tmp_path, capsys):
    cfg = dict(THEOREM1, schedule=[{"r": 16.0, "lambda": 0.1}, {"r": 64.0, "lambda": 0.2}])
    assert main(["run", _write(tmp_path, cfg), "--out", str(tmp_path)]) == 2
    err = capsys.readouterr().err
    assert "config/schedule" in err and "strictly decrease" in err


def test_schema_error_has_pointer(tmp_path, capsys):
    cfg = dict(THEOREM1, model={"name": "poisson", "dim": 0})
    assert main(["run", _write(tmp_path, cfg), "--out", str(tmp_path)]) == 2
    assert "config/model/dim" in capsys.readouterr().err
    with pytest.raises(ConfigError, match="config/experiment"):
        validate(dict(THEOREM1, experiment="nope"))


def test_missing_required_key():
    cfg = {k: v for k, v in THEOREM1.items() if k != "schedule"}
    with pytest.raises(ConfigError):
        validate(cfg)


def test_unreadable_config(tmp_path):
    assert main(["run", str(tmp_path / "missing.json")]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["run", str(bad)]) == 2


def test_unwritable_output(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["run", _write(tmp_path, THEOREM1), "--out", str(blocker / "sub")]) == 2


def test_verify_split_poisson(tmp_path):
    cfg = {"experiment": "verify-split", "seed": 3, "model": {"name": "poisson"},
           "window": {"lower": [-4.0], "upper": [4.0]}, "n": 1000}
    assert main(["run", _write(tmp_path, cfg), "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "verify-split.json").read_text())
    assert rep["points"][0]["leak_radius"] == 0


def test_exit_one_on_failed_verdict(tmp_path):
    cfg = dict(THEOREM1, schedule=[{"r": 16.0, "lambda": 0.5}])
    assert main(["run", _write(tmp_path, cfg), "--out", str(tmp_path)]) == 1
    rep = json.loads((tmp_path / "theorem1.json").read_text())
    assert "fail" in set(_verdicts(rep))


def test_seed_override(tmp_path):
    cfg = {"experiment": "sample", "seed": 1, "model": {"name": "poisson"},
           "window": {"lower": [0.0], "upper": [4.0]}}
    path = _write(tmp_path, cfg)
    main(["run", path, "--seed", "99", "--out", str(tmp_path / "a")])
    rep = json.loads((tmp_path / "a" / "sample.json").read_text())
    assert rep["seed"] == 99
    assert main(["run", path, "--seed", "-1"]) == 2
    assert main(["run", path, "--seed", str(2 ** 64)]) == 2


def test_step_target_phi(tmp_path):
    cfg = dict(THEOREM1, phi={"target": {"kind": "tent"}, "eps": 0.01},
               schedule=[{"r": 64.0, "lambda": 0.02}])
    report, _ = execute(cfg)
    assert report["target"] == pytest.approx(0.5 * 0.66665, abs=1e-5)


# outputs -------------------------------------------------------------------------

def test_empty_result_is_valid_json(tmp_path):
    emit_report([], None, tmp_path / "empty.json", None)
    assert json.loads((tmp_path / "empty.json").read_text()) == []


def test_float_formatting():
    text = dumps({"b": 1 / 3, "a": float("inf"), "c": [0.1 + 0.2]})
    assert text.index('"a"') < text.index('"b"')
    assert json.loads(text) == {"a": "inf", "b": 0.333333333333, "c": [0.3]}


@pytest.mark.parametrize("cfg", selftest_configs(0), ids=lambda c: c["experiment"])
def test_csv_columns_fixed_and_verdicts_consistent(cfg):
    report, text = execute(cfg)
    rows = list(csv.reader(io.StringIO(text)))
    rows = [r for r in rows if r and not r[0].startswith("#")]
    assert len({len(r) for r in rows}) == 1
    verdicts = set(_verdicts(report))
    assert verdicts <= {"pass", "fail", "skipped"}
    assert (report["overall"] == "pass") == (verdicts == {"pass"})


def test_rerun_byte_identical(tmp_path):
    cfg_path = _write(tmp_path, THEOREM1)
    for d in ("a", "b"):
        assert main(["run", cfg_path, "--out", str(tmp_path / d)]) == 0
    for name in ("theorem1.json", "theorem1.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


# schema and entry points -------------------------------------------------------------

def test_schema_subcommand(capsys):
    assert main(["schema"]) == 0
    printed = json.loads(capsys.readouterr().out)
    assert printed == json.loads(json.dumps(SCHEMA))
    jsonschema.Draft202012Validator.check_schema(printed)


def test_selftest_configs_validate():
    for cfg in selftest_configs(7):
        validate(cfg)


def test_bad_flags():
    assert main([]) == 2
    assert main(["schema", "--threads", "0"]) == 2


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "splitfield", "schema"], capture_output=True,
                          text=True, cwd=tmp_path)
    assert proc.returncode == 0 and '"$schema"' in proc.stdout
