import csv
import json

import pytest

from niducc import cli
from niducc.chem import fixture_path
from niducc.mcp import read_cache, read_pool


def kv(text):
    return dict(line.split("=", 1) for line in text.splitlines() if "=" in line)


class TestHelpers:
    def test_parse_bytes(self):
        assert cli.parse_bytes("256MiB") == 256 * 2**20
        assert cli.parse_bytes("1G") == 2**30
        assert cli.parse_bytes("4096") == 4096

    def test_config_file(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("# comment\nk = 2\nprotocol = strong\n")
        args = cli.parse_args(["vqe", "--molecule", "H2", "--bond-length", "0.735", "--config", str(cfg), "--k", "3"])
        assert args.k == 3 and args.protocol == "strong"

    def test_unknown_config_key(self, tmp_path, capsys):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("colour = blue\n")
        assert cli.main(["vqe", "--molecule", "H2", "--bond-length", "0.735", "--config", str(cfg)]) == cli.EXIT_CONFIG
        assert "colour" in capsys.readouterr().err


class TestMcpCommand:
    def test_generic_sector(self, tmp_path, capsys):
        rc = cli.main(["mcp", "--qubits", "8", "--electrons", "4", "--out", str(tmp_path), "--cache-group"])
        out = kv(capsys.readouterr().out)
        assert rc == 0
        assert (out["FullGroup"], out["FullSet"], out["Starters"]) == ("2048", "992", "320")
        pool = read_pool(tmp_path / "q8_e4_pool.txt")
        assert len(pool) == int(out["MCP"]) >= 14
        group, _ = read_cache(tmp_path / "q8_e4_fullgroup.bin")
        assert group.count == 2048

    def test_budget_exceeded(self, tmp_path, capsys):
        rc = cli.main(["mcp", "--qubits", "14", "--electrons", "7", "--mem-budget", "1MiB", "--out", str(tmp_path)])
        assert rc == cli.EXIT_RESOURCE
        assert "memory budget" in capsys.readouterr().err

    def test_missing_arguments(self, tmp_path):
        assert cli.main(["mcp", "--out", str(tmp_path)]) == cli.EXIT_CONFIG


class TestVqeCommand:
    def test_h2(self, tmp_path, capsys):
        rc = cli.main(["vqe", "--molecule", "H2", "--bond-length", "0.735", "--k", "1", "--fidelity", "--out", str(tmp_path)])
        out = kv(capsys.readouterr().out)
        assert rc == 0 and abs(float(out["error"])) < 1e-9
        (report,) = tmp_path.glob("*.json")
        data = json.loads(report.read_text())
        assert data["parameters"] == data["pool_size"]
        rows = list(csv.DictReader((tmp_path / report.name.replace(".json", ".csv")).open()))
        assert len(rows) == data["evaluations"] and rows[-1]["fidelity"]

    def test_fcidump_path_and_env_out(self, tmp_path, monkeypatch, capsys):
        monkeypatch.setenv(cli.OUT_ENV, str(tmp_path))
        rc = cli.main(["vqe", "--fcidump", str(fixture_path("H2", 0.735)), "--k", "1"])
        assert rc == 0 and list(tmp_path.glob("*.json"))

    def test_accuracy_not_met(self, tmp_path, capsys):
        rc = cli.main(["vqe", "--molecule", "H4", "--bond-length", "1.0", "--k", "1", "--eval-cap", "2", "--out", str(tmp_path)])
        assert rc == cli.EXIT_ACCURACY

    def test_missing_file(self, tmp_path, capsys):
        rc = cli.main(["vqe", "--fcidump", str(tmp_path / "nope.fcidump")])
        assert rc == cli.EXIT_IO

    def test_malformed_file(self, tmp_path, capsys):
        bad = tmp_path / "bad.fcidump"
        bad.write_text("&FCI NORB=2 &END\n")
        assert cli.main(["vqe", "--fcidump", str(bad), "--out", str(tmp_path)]) == cli.EXIT_IO

    def test_bad_flag_value(self):
        with pytest.raises(SystemExit) as err:
            cli.main(["vqe", "--molecule", "H2", "--k", "0"])
        assert err.value.code == 2


class TestScanCommand:
    def test_records_failures(self, tmp_path, capsys):
        rc = cli.main(["scan", "--molecule", "H2", "--bond-lengths", "0.735,5.0", "--k", "1", "--out", str(tmp_path)])
        assert rc == cli.EXIT_PIPELINE
        rows = list(csv.DictReader((tmp_path / "H2_k1_scan.csv").open()))
        assert rows[0]["status"] == "ok" and abs(float(rows[0]["error"])) < 1e-9
        assert rows[1]["status"].startswith("CliError: no such file")
