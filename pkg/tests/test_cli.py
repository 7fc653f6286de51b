"""End-to-end CLI tests through main()."""

import json

import pytest

from marketlab.cli import main


def run_cli(*argv):
    return main(list(argv))


class TestSimulateAnalyze:
    def test_simulate_then_analyze_fundamentalists(self, tmp_path, capsys):
        out = tmp_path / "runs"
        assert run_cli("simulate", "--roster", "all-fundamentalist", "--seed", "7", "--out", str(out)) == 0
        log = out / "session-seed7.jsonl"
        assert log.exists()
        assert run_cli("analyze", "--log", str(log), "--out", str(tmp_path / "report")) == 0
        captured = capsys.readouterr().out
        r2_line = next(l for l in captured.splitlines() if "haessel_r2_trading" in l)
        assert float(r2_line.split()[-1]) >= 0.9
        report = json.loads((tmp_path / "report" / "report.json").read_text())
        assert report["haessel_r2_trading"] >= 0.9
        assert (tmp_path / "report" / "trades.csv").read_text().startswith("session_id,")

    def test_seed_batch_writes_reports_and_aggregate(self, tmp_path):
        out = tmp_path / "batch"
        assert (
            run_cli(
                "simulate", "--roster", "all-zic", "--seeds", "1..3", "--ticks", "5", "--out", str(out)
            )
            == 0
        )
        assert sorted(p.name for p in out.glob("*.jsonl")) == [
            "session-seed1.jsonl",
            "session-seed2.jsonl",
            "session-seed3.jsonl",
        ]
        for seed in (1, 2, 3):
            report = json.loads((out / f"session-seed{seed}-report.json").read_text())
            assert report["n_periods"] == 10
        aggregate = json.loads((out / "aggregate.json").read_text())
        assert aggregate["n_seeds"] == 3
        assert set(aggregate["per_seed"]) == {"1", "2", "3"}
        assert "mean_napd" in aggregate["summary"]

    def test_roster_file(self, tmp_path):
        roster_path = tmp_path / "roster.json"
        roster_path.write_text(
            json.dumps(
                [{"kind": "FUNDAMENTALIST", "noise_width": 2}] * 3
                + [{"kind": "ZIC"}] * 2
                + [{"kind": "ANCHOR_SPECULATOR", "anchor_weight": 0.8, "markup": 6}]
            )
        )
        assert (
            run_cli(
                "simulate", "--roster", str(roster_path), "--seed", "1", "--ticks", "5",
                "--out", str(tmp_path),
            )
            == 0
        )

    def test_config_file(self, tmp_path):
        config_path = tmp_path / "config.json"
        config_path.write_text(
            json.dumps({"n_traders": 2, "n_periods": 2, "session_id": "tiny", "rng_seed": 3})
        )
        assert (
            run_cli(
                "simulate", "--config", str(config_path), "--roster", "all-zic",
                "--seed", "3", "--ticks", "5", "--out", str(tmp_path),
            )
            == 0
        )
        assert (tmp_path / "tiny-seed3.jsonl").exists()


class TestReplayVerb:
    def test_replay_ok(self, tmp_path, capsys):
        run_cli("simulate", "--roster", "all-zic", "--seed", "2", "--ticks", "5", "--out", str(tmp_path))
        assert run_cli("replay", "--log", str(tmp_path / "session-seed2.jsonl")) == 0
        assert "replay OK" in capsys.readouterr().out

    def test_replay_catches_tampering(self, tmp_path, capsys):
        run_cli("simulate", "--roster", "all-zic", "--seed", "2", "--ticks", "5", "--out", str(tmp_path))
        log = tmp_path / "session-seed2.jsonl"
        lines = log.read_text().splitlines()
        for i, line in enumerate(lines):
            record = json.loads(line)
            if record["kind"] == "TRADE":
                record["payload"]["price_cents"] += 1
                lines[i] = json.dumps(record, sort_keys=True, separators=(",", ":"))
                break
        log.write_text("\n".join(lines) + "\n")
        assert run_cli("replay", "--log", str(log)) == 2
        assert "replay FAILED" in capsys.readouterr().err


class TestExitCodes:
    def test_missing_log_is_data_error(self, tmp_path):
        assert run_cli("analyze", "--log", str(tmp_path / "missing.jsonl")) == 2

    def test_usage_error(self):
        assert run_cli("simulate", "--bogus") == 1

    def test_no_verb_is_usage_error(self):
        assert run_cli() == 1


class TestExportFigures:
    def test_export(self, tmp_path):
        run_cli("simulate", "--roster", "all-fundamentalist", "--seed", "1", "--out", str(tmp_path))
        out = tmp_path / "figs"
        assert (
            run_cli("export-figures", "--log", str(tmp_path / "session-seed1.jsonl"), "--out", str(out))
            == 0
        )
        fig1 = (out / "figure1.csv").read_text().splitlines()
        assert fig1[0] == "t,mean_price,intrinsic,max_pv,mean_declared"
        assert [int(line.split(",")[2]) for line in fig1[1:]] == [100, 90, 80, 70, 60, 50, 40, 30, 20, 10]
        assert [int(line.split(",")[3]) for line in fig1[1:]] == [200, 180, 160, 140, 120, 100, 80, 60, 40, 20]
        assert (out / "figure2.csv").exists()
