"""CLI tests: config parsing, provenance printing, sweep, oracle, exit codes."""

import io
import subprocess
import sys

import numpy as np
import pytest

from uavedge.cli import (ConfigError, build_config, config_values, main,
                         parse_config, print_config, read_config_text,
                         run_oracle, run_sweep)
from uavedge.sim import SimConfig, normalized_config


BASE_CONFIG = """
# desk-scale test configuration
seed = 3
duration_slots = 40
policy = random-path
uav_count = 2
sensor_count = 80
area_width = 200.0
area_height = 150.0
lambda_low = 250.0
lambda_high = 300.0
uplink_rate = 2000.0
obs_resolution = 36
obs_span = 120.0
"""


class TestParseConfig:
    def test_round_trip_through_print(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text(BASE_CONFIG)
        cfg = parse_config(path)
        buf = io.StringIO()
        print_config(cfg, overridden=("seed",), stream=buf)
        reparsed = build_config(read_config_text(buf.getvalue()))
        assert config_values(reparsed) == config_values(cfg)

    def test_empty_file_gives_reference_defaults(self, tmp_path):
        path = tmp_path / "empty.cfg"
        path.write_text("")
        cfg = parse_config(path)
        reference = normalized_config(SimConfig())
        assert config_values(cfg) == config_values(reference)
        assert cfg.edge.f_max == 2e9
        assert cfg.edge.cycles_per_bit == 3000.0
        assert cfg.edge.kappa == 1e-26

    def test_unknown_key_names_line(self, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text("seed = 1\nwarp_factor = 9\n")
        with pytest.raises(ConfigError, match=r"line 2.*warp_factor"):
            parse_config(path)

    def test_negative_tradeoff_rejected(self, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text("v_tradeoff = -1\n")
        with pytest.raises(ConfigError, match="v_tradeoff"):
            parse_config(path)

    def test_malformed_line_reports_position(self):
        with pytest.raises(ConfigError, match="line 1"):
            read_config_text("this is not a key value line")

    def test_bad_value_type_reported(self):
        with pytest.raises(ConfigError, match="seed"):
            read_config_text("seed = banana")

    def test_weight_follows_uav_count(self, tmp_path):
        path = tmp_path / "k.cfg"
        path.write_text("uav_count = 4\n")
        cfg = parse_config(path)
        assert cfg.edge.weight == pytest.approx(0.25)


class TestSweep:
    def test_single_value_matches_run(self, tmp_path):
        cfg = build_config(read_config_text(BASE_CONFIG))
        rows = run_sweep(cfg, "v_tradeoff", [6e9], tmp_path)
        assert len(rows) == 1
        from uavedge.sim import run_experiment
        records, _ = run_experiment(cfg)
        half = records[len(records) // 2:]
        assert rows[0][1] == pytest.approx(
            float(np.mean([r.weighted_power_w for r in half])))
        assert (tmp_path / "summary.csv").exists()

    def test_non_numeric_parameter_rejected(self, tmp_path):
        cfg = build_config(read_config_text(BASE_CONFIG))
        with pytest.raises(ConfigError, match="policy"):
            run_sweep(cfg, "policy", [1.0], tmp_path)

    def test_summary_reparses(self, tmp_path):
        cfg = build_config(read_config_text(BASE_CONFIG))
        run_sweep(cfg, "v_tradeoff", [1e9, 6e9], tmp_path)
        lines = (tmp_path / "summary.csv").read_text().splitlines()
        assert lines[0] == "v_tradeoff,mean_weighted_power_w,mean_queue_bits"
        values = [float(line.split(",")[0]) for line in lines[1:]]
        assert values == [1e9, 6e9]


class TestOracleCommand:
    def test_small_audit_passes(self):
        buf = io.StringIO()
        worst, failures = run_oracle(k=2, count=5, seed=0, stream=buf)
        assert failures == 0
        assert worst <= 1e-3
        assert "pass" in buf.getvalue()

    def test_oversize_instance_refused(self):
        with pytest.raises(ConfigError, match="at most"):
            run_oracle(k=5, count=1, seed=0)

    def test_symmetric_instance_splits_evenly(self):
        from uavedge.channel import OffloadChannelParams
        from uavedge.edge import EdgeParams
        from uavedge.gridoracle import p2b_grid_oracle
        from uavedge.scheduler import SchedulerConfig, schedule_slot
        edge = EdgeParams(weight=1.0 / 3.0)
        chan = OffloadChannelParams()
        cfg = SchedulerConfig(v_tradeoff=6e9, epsilon_floor=0.01)
        qs, gains = [2e5] * 3, [2e-15] * 3
        dec = schedule_slot(qs, gains, edge, chan, cfg, 0.5)
        _, _, _, a_oracle = p2b_grid_oracle(qs, gains, edge, chan, cfg, 0.5)
        np.testing.assert_allclose(dec.band_shares, 1.0 / 3.0, atol=1e-6)
        np.testing.assert_allclose(a_oracle, 1.0 / 3.0, atol=0.02)


class TestMainEntry:
    def test_run_and_print_config(self, tmp_path, capsys):
        path = tmp_path / "run.cfg"
        path.write_text(BASE_CONFIG)
        assert main(["run", "--config", str(path), "--print-config"]) == 0
        out = capsys.readouterr().out
        assert "seed = 3" in out
        assert "f_max = 2000000000.0" in out

    def test_run_writes_metrics_csv(self, tmp_path, capsys):
        path = tmp_path / "run.cfg"
        path.write_text(BASE_CONFIG)
        out_dir = tmp_path / "out"
        assert main(["run", "--config", str(path), "--out",
                     str(out_dir)]) == 0
        csv_path = out_dir / "metrics.csv"
        lines = csv_path.read_text().splitlines()
        assert lines[0] == "slot,avg_urgency,avg_queue_bits," \
                           "weighted_power_w,policy,seed"
        assert len(lines) == 41
        # every numeric field re-parses exactly
        for line in lines[1:]:
            fields = line.split(",")
            float(fields[1]), float(fields[2]), float(fields[3])
            assert fields[4] == "random-path"
            assert fields[5] == "3"

    def test_invalid_config_exit_code(self, tmp_path, capsys):
        path = tmp_path / "bad.cfg"
        path.write_text("nonsense_key = 1\n")
        assert main(["run", "--config", str(path)]) == 2
        assert "nonsense_key" in capsys.readouterr().err

    def test_grad_check_command(self, capsys):
        assert main(["grad-check", "--seed", "0"]) == 0
        out = capsys.readouterr().out
        assert "pass" in out

    def test_oracle_command(self, capsys):
        assert main(["oracle", "--uavs", "2", "--count", "3",
                     "--seed", "1"]) == 0

    def test_train_command_writes_checkpoint(self, tmp_path, capsys):
        path = tmp_path / "run.cfg"
        path.write_text(BASE_CONFIG + "duration_slots = 30\n")
        out_dir = tmp_path / "out"
        assert main(["train", "--config", str(path), "--out",
                     str(out_dir)]) == 0
        assert (out_dir / "qnet_checkpoint.bin").exists()
        assert (out_dir / "training_metrics.csv").exists()

    def test_seed_override(self, tmp_path, capsys):
        path = tmp_path / "run.cfg"
        path.write_text(BASE_CONFIG)
        assert main(["run", "--config", str(path), "--seed", "42",
                     "--print-config"]) == 0
        assert "seed = 42" in capsys.readouterr().out
