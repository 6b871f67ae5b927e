import json
from pathlib import Path

import pytest

from impmarkov.cli import main
from impmarkov.errors import ConfigError
from impmarkov.fixtures import ENV_VAR, FixtureSet, load_all, scan
from impmarkov.harness import load_config, run, run_config, task_ids

ROOT = Path(__file__).resolve().parents[1]
EXPERIMENTS = ROOT / "experiments"


def payloads(out):
    return {p.name: p.read_text() for p in sorted(Path(out).iterdir()) if p.name != "metadata.json"}


def test_reproduction_config(tmp_path):
    assert run(EXPERIMENTS / "reproduction.json", tmp_path) == 0
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["passed"] == 6 and summary["failed"] == 0
    reports = [p for p in tmp_path.glob("*.json") if p.name not in ("summary.json", "metadata.json")]
    assert len(reports) == 6
    assert len(list(tmp_path.glob("*.csv"))) == 6


def test_module_examples_config(tmp_path):
    assert run(EXPERIMENTS / "module_examples.json", tmp_path) == 0


def test_full_suite_config(tmp_path):
    assert run(EXPERIMENTS / "full_suite.json", tmp_path) == 0


def test_rho_above_curvature_fails(tmp_path):
    assert run(EXPERIMENTS / "rho_too_high.json", tmp_path) == 1
    report = json.loads((tmp_path / "ergodicity.json").read_text())
    checks = report["result"]["checks"]
    assert not checks["gradient_bound"]["pass"]
    assert checks["gradient_bound"]["worst_slack"] < 0


def test_missing_fixture(tmp_path):
    cfg = {"tasks": [{"type": "axioms", "generator": "no_such_chain"}]}
    with pytest.raises(ConfigError) as exc:
        run(cfg, tmp_path)
    assert "no_such_chain" in str(exc.value)
    assert exc.value.pointer == "/tasks/0/generator"


def test_missing_family_member(tmp_path):
    cfg = {"fixtures": {"fam": {"kind": "family", "members": ["two_state_A", "ghost"], "f_tilde": [1, 0]}},
           "tasks": [{"type": "sandwich", "family": "fam"}]}
    with pytest.raises(ConfigError) as exc:
        run(cfg, tmp_path)
    assert "ghost" in str(exc.value)


def test_schema_violation_pointer():
    with pytest.raises(ConfigError) as exc:
        load_config({"tasks": [{"type": "curvature", "generator": "complete_4", "n": "many"}]})
    assert exc.value.pointer.startswith("/tasks/0")
    with pytest.raises(ConfigError):
        load_config({"tasks": [{"type": "teleport"}]})
    with pytest.raises(ConfigError):
        load_config({"tasks": []})


def test_invalid_json(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(p)


def test_heat_rejected_by_ergodicity(tmp_path):
    with pytest.raises(ConfigError) as exc:
        run({"tasks": [{"type": "ergodicity", "generator": "heat"}]}, tmp_path)
    assert "diffusion" in str(exc.value)


def test_task_ids_unique():
    assert task_ids([{"type": "order"}, {"type": "order"}, {"type": "axioms", "id": "x"}]) == ["order", "order_2", "x"]


def test_determinism(tmp_path):
    a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    run(EXPERIMENTS / "full_suite.json", a)
    run(EXPERIMENTS / "full_suite.json", b)
    run(EXPERIMENTS / "full_suite.json", c, parallel=4)
    assert payloads(a) == payloads(b) == payloads(c)
    assert (a / "metadata.json").exists()


def test_seed_changes_random_content(tmp_path):
    run(EXPERIMENTS / "full_suite.json", tmp_path / "s1", seed=1)
    run(EXPERIMENTS / "full_suite.json", tmp_path / "s2", seed=2)
    assert (tmp_path / "s1" / "ergodicity.csv").read_text() != (tmp_path / "s2" / "ergodicity.csv").read_text()


def test_task_failure_recorded(tmp_path):
    cfg = {"tasks": [{"type": "ergodicity", "generator": "reducible_pair"}]}
    assert run(cfg, tmp_path) == 1
    report = json.loads((tmp_path / "ergodicity.json").read_text())
    assert report["pass"] is False


# fixtures

def test_bundled_fixtures():
    rows = scan()
    assert len(rows) >= 8
    assert all(r["error"] is None and r["provenance"] for r in rows)
    fx = FixtureSet(load_all())
    fam = fx.family("duplicates")
    assert fam.names == ["two_state_C", "two_state_C#2", "two_state_C#3"]


def test_env_var_empty_dir(tmp_path, monkeypatch):
    monkeypatch.setenv(ENV_VAR, str(tmp_path))
    assert [r["name"] for r in scan()] == [r["name"] for r in scan() if r["source"] == "bundled"]


def test_env_var_override_and_add(tmp_path, monkeypatch):
    (tmp_path / "two_state_A.json").write_text(json.dumps(
        {"kind": "generator", "provenance": "override", "rates": [[-2, 2], [2, -2]]}))
    (tmp_path / "extra.json").write_text(json.dumps(
        {"kind": "functional", "provenance": "added", "values": [0, 1]}))
    monkeypatch.setenv(ENV_VAR, str(tmp_path))
    rows = {r["name"]: r for r in scan()}
    assert rows["two_state_A"]["source"] == "custom" and rows["extra"]["source"] == "custom"
    L, _ = FixtureSet(load_all()).generator("two_state_A")
    assert L.rates[0, 1] == 2


# CLI

def test_cli_run_and_hasse(tmp_path, capsys):
    out = tmp_path / "res"
    assert main(["run", "--config", str(EXPERIMENTS / "reproduction.json"), "--out", str(out), "--seed", "42"]) == 0
    text = capsys.readouterr().out
    assert "6 passed, 0 failed" in text
    dot = tmp_path / "hasse.dot"
    assert main(["hasse", "--report", str(out / "order.json"), "--out", str(dot)]) == 0
    assert dot.read_text().count("->") == 8
    assert (out / "order.dot").read_text() == dot.read_text()


def test_cli_config_error_exit(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"tasks": [{"type": "axioms", "generator": "nope"}]}))
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "nope" in capsys.readouterr().err


def test_cli_rho_too_high_exit(tmp_path):
    assert main(["run", "--config", str(EXPERIMENTS / "rho_too_high.json"), "--out", str(tmp_path)]) == 1


def test_cli_hasse_bad_report(tmp_path):
    bad = tmp_path / "r.json"
    bad.write_text("{}")
    assert main(["hasse", "--report", str(bad), "--out", str(tmp_path / "x.dot")]) == 2


def test_cli_fixtures(capsys):
    assert main(["fixtures"]) == 0
    out = capsys.readouterr().out
    assert "hasse_six" in out and "16 fixtures (0 unreadable)" in out


def test_cli_fixtures_corrupt(tmp_path, monkeypatch, capsys):
    (tmp_path / "broken.json").write_text("{oops")
    monkeypatch.setenv(ENV_VAR, str(tmp_path))
    assert main(["fixtures"]) == 0
    out = capsys.readouterr().out
    assert "broken" in out and "parse error" in out
    assert main(["fixtures", "--strict"]) == 1
