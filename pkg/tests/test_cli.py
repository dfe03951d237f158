import csv

import pytest

from etfilter.cli import main


def _run(argv):
    return main([str(a) for a in argv])


class TestSimulateCommand:
    def test_writes_all_outputs(self, tmp_path, capsys):
        out = tmp_path / "run"
        code = _run(
            ["simulate", "--case", "1", "--trials", 12, "--steps", 15, "--seed", 4, "--out", out]
        )
        assert code == 0
        for name in ("rms.csv", "rates.csv", "summary.csv"):
            assert (out / name).exists(), name
        printed = capsys.readouterr().out
        assert "case=case1" in printed
        assert "average rates" in printed

    def test_numeric_case_aliases(self, tmp_path):
        out = tmp_path / "c2"
        assert _run(["simulate", "--case", "2", "--trials", 5, "--steps", 8, "--out", out]) == 0
        row = list(csv.reader((out / "summary.csv").open()))[1]
        assert row[0] == "case2"

    def test_rejects_unknown_case(self, tmp_path, capsys):
        code = _run(["simulate", "--case", "nope", "--trials", 3, "--steps", 5, "--out", tmp_path])
        assert code == 2
        assert "unknown case" in capsys.readouterr().err


class TestRatesCommand:
    def test_writes_only_rates(self, tmp_path):
        out = tmp_path / "r"
        code = _run(
            [
                "rates",
                "--case",
                "3",
                "--trials",
                6,
                "--steps",
                10,
                "--seed",
                2,
                "--trial-index",
                1,
                "--out",
                out,
            ]
        )
        assert code == 0
        assert (out / "rates.csv").exists()
        assert not (out / "rms.csv").exists()
        header = (out / "rates.csv").open().readline().strip()
        assert header == "k,empirical,alg1,alg2,empirical_se"


class TestTable1Command:
    def test_prints_reference_comparison(self, tmp_path, capsys):
        code = _run(["table1", "--trials", 8, "--seed", 6, "--out", tmp_path])
        assert code == 0
        printed = capsys.readouterr().out
        assert "ref_emp" in printed
        assert (tmp_path / "case3" / "summary.csv").exists()
        assert (tmp_path / "summary.csv").exists()


class TestConfigFile:
    def test_values_read_from_file(self, tmp_path):
        cfg = tmp_path / "opts.cfg"
        cfg.write_text("case = 2\ntrials = 7\nsteps=9\n# a comment\n\nout = %s\n" % (tmp_path / "o"))
        assert _run(["--config", cfg, "simulate"]) == 0
        rows = list(csv.reader((tmp_path / "o" / "rms.csv").open()))
        assert len(rows) == 10  # header + steps
        srow = list(csv.reader((tmp_path / "o" / "summary.csv").open()))[1]
        assert srow[0] == "case2"

    def test_flags_override_file(self, tmp_path):
        cfg = tmp_path / "opts.cfg"
        cfg.write_text(f"case=2\ntrials=6\nsteps=7\nout={tmp_path / 'ignored'}\n")
        assert _run(["--config", cfg, "simulate", "--case", "3", "--out", tmp_path / "won"]) == 0
        srow = list(csv.reader((tmp_path / "won" / "summary.csv").open()))[1]
        assert srow[0] == "case3"

    def test_config_accepted_after_subcommand(self, tmp_path):
        cfg = tmp_path / "opts.cfg"
        cfg.write_text(f"case=2\ntrials=5\nsteps=8\nout={tmp_path / 'after'}\n")
        assert _run(["simulate", "--config", cfg]) == 0
        srow = list(csv.reader((tmp_path / "after" / "summary.csv").open()))[1]
        assert srow[0] == "case2"

    def test_unknown_key_rejected(self, tmp_path, capsys):
        cfg = tmp_path / "opts.cfg"
        cfg.write_text("bogus=1\n")
        assert _run(["--config", cfg, "simulate"]) == 2
        assert "unknown option" in capsys.readouterr().err

    def test_malformed_line_rejected(self, tmp_path, capsys):
        cfg = tmp_path / "opts.cfg"
        cfg.write_text("trials\n")
        assert _run(["--config", cfg, "simulate"]) == 2
        assert "key=value" in capsys.readouterr().err

    def test_non_numeric_value_rejected(self, tmp_path, capsys):
        cfg = tmp_path / "opts.cfg"
        cfg.write_text("trials=lots\n")
        assert _run(["--config", cfg, "simulate"]) == 2
        assert "not a number" in capsys.readouterr().err

    def test_missing_file_rejected(self, tmp_path):
        assert _run(["--config", tmp_path / "absent.cfg", "simulate"]) == 2


class TestOutputDirResolution:
    def test_environment_variable_used(self, tmp_path, monkeypatch):
        monkeypatch.setenv("ETFILTER_OUT_DIR", str(tmp_path / "envdir"))
        assert _run(["rates", "--case", "1", "--trials", 4, "--steps", 6]) == 0
        assert (tmp_path / "envdir" / "rates.csv").exists()

    def test_flag_beats_environment(self, tmp_path, monkeypatch):
        monkeypatch.setenv("ETFILTER_OUT_DIR", str(tmp_path / "envdir"))
        assert (
            _run(["rates", "--case", "1", "--trials", 4, "--steps", 6, "--out", tmp_path / "f"])
            == 0
        )
        assert (tmp_path / "f" / "rates.csv").exists()
        assert not (tmp_path / "envdir").exists()

    def test_fallback_directory(self, tmp_path, monkeypatch):
        monkeypatch.delenv("ETFILTER_OUT_DIR", raising=False)
        monkeypatch.chdir(tmp_path)
        assert _run(["rates", "--case", "1", "--trials", 4, "--steps", 6]) == 0
        assert (tmp_path / "etfilter-output" / "rates.csv").exists()


class TestTopLevel:
    def test_check_flag_runs_suite(self, capsys):
        assert _run(["--check"]) == 0
        printed = capsys.readouterr().out
        assert "[PASS]" in printed
        assert "[FAIL]" not in printed

    def test_subcommand_required_without_check(self, capsys):
        with pytest.raises(SystemExit) as exc:
            _run([])
        assert exc.value.code == 2

    def test_bad_flag_value_exits(self):
        with pytest.raises(SystemExit):
            _run(["simulate", "--trials", "many"])
