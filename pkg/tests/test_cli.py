import json

from click.testing import CliRunner

from choicefed.cli import main
from choicefed.datagen import CSV_HEADER

SMALL_CONFIG = {
    "n": 60,
    "workers": 2,
    "seed": 5,
    "temp_min": 0.2,
    "alpha": 0.5,
    "inner_iterations": 10,
}


def invoke(*args):
    return CliRunner().invoke(main, list(args), catch_exceptions=False)


class TestGenData:
    def test_writes_csv(self, tmp_path):
        out = tmp_path / "d.csv"
        res = invoke("gen-data", "--n", "20", "--seed", "9", "--out", str(out))
        assert res.exit_code == 0
        lines = out.read_text().splitlines()
        assert lines[0] == CSV_HEADER
        assert len(lines) == 21

    def test_bad_range_exit_2(self, tmp_path):
        res = CliRunner().invoke(main, [
            "gen-data", "--cost-range", "10", "5",
            "--out", str(tmp_path / "d.csv")])
        assert res.exit_code == 2


class TestPartition:
    def test_split_files(self, tmp_path):
        data = tmp_path / "d.csv"
        invoke("gen-data", "--n", "30", "--out", str(data))
        res = invoke("partition", str(data), "--sizes", "10,20",
                     "--out-prefix", str(tmp_path / "part"))
        assert res.exit_code == 0
        assert len((tmp_path / "part1.csv").read_text().splitlines()) == 11
        assert len((tmp_path / "part2.csv").read_text().splitlines()) == 21

    def test_size_mismatch_exit_1(self, tmp_path):
        data = tmp_path / "d.csv"
        invoke("gen-data", "--n", "30", "--out", str(data))
        res = CliRunner().invoke(main, [
            "partition", str(data), "--sizes", "10,10",
            "--out-prefix", str(tmp_path / "p")])
        assert res.exit_code == 1


class TestRunAndReport:
    def test_full_pipeline(self, tmp_path):
        cfg = tmp_path / "config.json"
        cfg.write_text(json.dumps({**SMALL_CONFIG,
                                   "outdir": str(tmp_path / "run")}))
        res = invoke("run", "--config", str(cfg))
        assert res.exit_code == 0
        outdir = tmp_path / "run"
        assert (outdir / "report.json").exists()
        assert (outdir / "report.txt").exists()
        assert (outdir / "trajectory.csv").exists()
        report = json.loads((outdir / "report.json").read_text())
        assert report["rho_square"] == 1 - report["final_ll"] / report["null_ll"]

        res = invoke("verify-ledger", str(outdir / "ledger.jsonl"))
        assert res.exit_code == 0
        assert "chain valid: True" in res.output

        res = invoke("report", "--run-dir", str(outdir))
        assert res.exit_code == 0
        assert (outdir / "trajectory.png").exists()
        assert (outdir / "temperature.png").exists()
        assert (outdir / "latency.png").exists()

    def test_tampered_ledger_exit_nonzero(self, tmp_path):
        cfg = tmp_path / "config.json"
        cfg.write_text(json.dumps({**SMALL_CONFIG,
                                   "outdir": str(tmp_path / "run")}))
        invoke("run", "--config", str(cfg))
        ledger = tmp_path / "run" / "ledger.jsonl"
        lines = ledger.read_text().splitlines()
        entry = json.loads(lines[3])
        entry["sender"] = "mallory"
        lines[3] = json.dumps(entry, separators=(",", ":"))
        ledger.write_text("\n".join(lines) + "\n")
        res = CliRunner().invoke(main, ["verify-ledger", str(ledger)])
        assert res.exit_code == 1
        assert "first bad index: 2" in res.output

    def test_unknown_config_field_exit_2(self, tmp_path):
        cfg = tmp_path / "config.json"
        cfg.write_text(json.dumps({"bogus": 1}))
        res = CliRunner().invoke(main, ["run", "--config", str(cfg)])
        assert res.exit_code == 2


class TestCentralized:
    def test_runs_on_csv(self, tmp_path):
        data = tmp_path / "d.csv"
        invoke("gen-data", "--n", "80", "--out", str(data))
        res = invoke("centralized", "--data", str(data), "--fast",
                     "--outdir", str(tmp_path / "central"))
        assert res.exit_code == 0
        assert "rho square" in res.output
        assert (tmp_path / "central" / "trajectory.csv").exists()
