import csv
import json
import subprocess
import sys

import pytest
import yaml

from bgpbt.cli import EXIT_CONFIG, EXIT_OK, main

from conftest import CONFIGS

MINIMAL = str(CONFIGS / "minimal.yaml")


def run_cli(*args):
    return main([str(a) for a in args])


class TestRun:
    def test_writes_artifacts(self, tmp_path):
        assert run_cli("run", "--config", MINIMAL, "--out", tmp_path) == EXIT_OK
        seed_dir = tmp_path / "seed_0"
        for name in ("schedule.jsonl", "schedule.csv", "regret.csv", "summary.json", "run_log.jsonl"):
            assert (seed_dir / name).exists()
        assert (tmp_path / "config.yaml").exists()
        rows = list(csv.DictReader((tmp_path / "summary.csv").open()))
        assert rows[0]["status"] == "ok"
        summary = json.loads((seed_dir / "summary.json").read_text())
        assert summary["ticks"] == 3 and summary["final_regret"] is not None

    def test_seed_flag_is_reproducible(self, tmp_path):
        for d in ("a", "b"):
            assert run_cli("run", "--config", MINIMAL, "--seed", 7, "--out", tmp_path / d) == EXIT_OK
        a = (tmp_path / "a" / "seed_7" / "schedule.jsonl").read_bytes()
        b = (tmp_path / "b" / "seed_7" / "schedule.jsonl").read_bytes()
        assert a == b
        assert not (tmp_path / "a" / "seed_0").exists()

    def test_method_preset(self, tmp_path):
        assert run_cli("run", "--config", MINIMAL, "--method", "pb2", "--out", tmp_path) == EXIT_OK
        rows = [json.loads(x) for x in (tmp_path / "seed_0" / "schedule.jsonl").read_text().splitlines()]
        assert all(r["L_x"] is None for r in rows)

    def test_env_output_root(self, tmp_path, monkeypatch):
        monkeypatch.setenv("BGPBT_OUT", str(tmp_path))
        assert run_cli("run", "--config", MINIMAL) == EXIT_OK
        assert (tmp_path / "minimal" / "seed_0" / "summary.json").exists()

    def test_missing_space_is_config_error(self, tmp_path, capsys):
        raw = yaml.safe_load(open(MINIMAL))
        del raw["space"]
        p = tmp_path / "bad.yaml"
        p.write_text(yaml.safe_dump(raw))
        assert run_cli("run", "--config", p, "--out", tmp_path / "o") == EXIT_CONFIG
        assert "space" in capsys.readouterr().err

    def test_missing_file(self, tmp_path):
        assert run_cli("validate", "--config", tmp_path / "nope.yaml") == EXIT_CONFIG

    def test_override(self, tmp_path):
        assert run_cli("run", "--config", MINIMAL, "--set", "scheduler.t_max=2", "--out", tmp_path) == EXIT_OK
        assert json.loads((tmp_path / "seed_0" / "summary.json").read_text())["ticks"] == 2


class TestCompare:
    def test_two_methods_three_seeds(self, tmp_path, capsys):
        code = run_cli("compare", "--config", MINIMAL, "--set", "methods=[pb2, bgpbt]",
                       "--seed", 0, "--seed", 1, "--seed", 2, "--out", tmp_path)
        assert code == EXIT_OK
        rows = list(csv.DictReader((tmp_path / "compare.csv").open()))
        assert len(rows) == 6
        assert {r["method"] for r in rows} == {"pb2", "bgpbt"}
        assert "pb2" in capsys.readouterr().out
        for m in ("pb2", "bgpbt"):
            for s in range(3):
                assert (tmp_path / m / f"seed_{s}" / "schedule.jsonl").exists()

    def test_compare_matches_single_run(self, tmp_path):
        run_cli("compare", "--config", MINIMAL, "--set", "methods=[bgpbt]", "--out", tmp_path / "c")
        run_cli("run", "--config", MINIMAL, "--method", "bgpbt", "--out", tmp_path / "r")
        a = (tmp_path / "c" / "bgpbt" / "seed_0" / "schedule.jsonl").read_bytes()
        b = (tmp_path / "r" / "seed_0" / "schedule.jsonl").read_bytes()
        assert a == b


class TestScheduleData:
    def test_single_seed_has_zero_sem(self, tmp_path):
        run_cli("run", "--config", MINIMAL, "--out", tmp_path)
        assert run_cli("schedule-data", tmp_path) == EXIT_OK
        files = sorted((tmp_path / "schedule_data").glob("*.csv"))
        assert len(files) == 4
        for f in files:
            rows = list(csv.DictReader(f.open()))
            assert [int(r["tick"]) for r in rows] == [1, 2, 3]
            assert all(float(r["sem"]) == 0.0 for r in rows)
            assert all(float(r["lower"]) <= float(r["mean"]) <= float(r["upper"]) for r in rows)

    def test_empty_dir(self, tmp_path):
        assert run_cli("schedule-data", tmp_path) == EXIT_CONFIG


class TestValidate:
    def test_prints_effective_config(self, capsys):
        assert run_cli("validate", "--config", MINIMAL, "--set", "scheduler.q=25") == EXIT_OK
        out = yaml.safe_load(capsys.readouterr().out)
        assert out["scheduler"]["q"] == 25
        assert out["scheduler"]["population_size"] == 4

    def test_module_entry_point(self):
        proc = subprocess.run([sys.executable, "-m", "bgpbt.cli", "validate", "--config", MINIMAL],
                              capture_output=True, text=True)
        assert proc.returncode == 0 and "population_size" in proc.stdout

    def test_missing_subcommand(self):
        with pytest.raises(SystemExit):
            main([])
