"""Command-line interface: subcommands, overrides, reports, artifacts."""

import json
import os

import numpy as np
import pytest

from marlab.cli import curve_auc, main
from marlab.config import load_run_config


def write_toy_config(tmp_path, **overrides):
    cfg = {
        "env": {"name": "cue_passing", "params": {"n_agents": 2, "num_cues": 2}},
        "mixer": "vdn",
        "comm": {"enabled": True, "num_layers": 1, "ffn_dim": 8, "heads": 2,
                 "dropout": 0.1},
        "train": {"batch_size": 4, "buffer_capacity": 50, "anneal_steps": 100,
                  "hidden_dim": 8, "test_interval": 40, "test_episodes": 4,
                  "target_update_interval": 10},
        "seeds": [1],
        "total_env_steps": 40,
        "out_dir": str(tmp_path / "run"),
    }
    cfg.update(overrides)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    return path


class TestTrainCommand:
    def test_train_writes_artifacts(self, tmp_path, capsys):
        cfg = write_toy_config(tmp_path)
        assert main(["train", "--config", str(cfg)]) == 0
        out = tmp_path / "run"
        assert (out / "config.json").exists()
        assert (out / "metrics.csv").exists()
        assert (out / "seed_1" / "checkpoint.bin").exists()
        assert (out / "seed_1" / "checkpoint.json").exists()
        assert "seed 1" in capsys.readouterr().out

    def test_overrides_are_recorded_in_resolved_config(self, tmp_path):
        cfg = write_toy_config(tmp_path)
        out = tmp_path / "alt"
        assert main(["train", "--config", str(cfg), "--out", str(out),
                     "--mixer", "qmix", "--comm", "none", "--no-residual",
                     "--explore", "topk", "--k", "2", "--temperature", "0.33",
                     "--seed", "7"]) == 0
        resolved = load_run_config(out / "config.json")
        assert resolved.mixer == "qmix"
        assert resolved.comm.enabled is False
        assert resolved.comm.residual is False
        assert resolved.exploration.k == 2
        assert resolved.exploration.temperature == 0.33
        assert resolved.seeds == (7,)

    def test_invalid_config_exits_nonzero(self, tmp_path, capsys):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"mixer": "qplex"}))
        assert main(["train", "--config", str(path)]) == 2
        assert "error" in capsys.readouterr().err

    def test_output_root_env_var(self, tmp_path, monkeypatch):
        monkeypatch.setenv("MARLAB_OUT", str(tmp_path / "root"))
        cfg = write_toy_config(tmp_path, out_dir="rel_run")
        assert main(["train", "--config", str(cfg)]) == 0
        assert (tmp_path / "root" / "rel_run" / "metrics.csv").exists()


class TestCheckCommand:
    def test_clean_build_passes(self, tmp_path, capsys):
        report_path = tmp_path / "report.json"
        code = main(["check", "--seed", "0", "--out", str(report_path)])
        assert code == 0
        report = json.loads(report_path.read_text())
        assert report["passed"] is True
        assert all(c["passed"] for c in report["checks"].values())

    def test_qmix_positivity_fault_detected(self, tmp_path, capsys):
        code = main(["check", "--seed", "0", "--inject-fault", "qmix-signed"])
        out = capsys.readouterr().out
        assert code == 1
        report = json.loads(out)
        assert report["checks"]["qmix_monotonicity"]["passed"] is False

    def test_comm_zero_init_fault_detected(self, capsys):
        code = main(["check", "--seed", "0", "--inject-fault", "comm-hot-init"])
        report = json.loads(capsys.readouterr().out)
        assert code == 1
        assert report["checks"]["comm_zero_init_passthrough"]["passed"] is False


class TestEvalCommand:
    def test_eval_after_train(self, tmp_path, capsys):
        cfg = write_toy_config(tmp_path)
        main(["train", "--config", str(cfg)])
        capsys.readouterr()  # drop training output
        code = main(["eval", "--run", str(tmp_path / "run" / "seed_1"),
                     "--episodes", "4"])
        assert code == 0
        row = json.loads(capsys.readouterr().out)
        assert row["episodes"] == 4
        assert 0.0 <= row["success_rate"] <= 1.0

    def test_eval_with_deployment_traffic(self, tmp_path, capsys):
        cfg = write_toy_config(tmp_path)
        main(["train", "--config", str(cfg)])
        capsys.readouterr()  # drop training output
        out_csv = tmp_path / "eval.csv"
        code = main(["eval", "--run", str(tmp_path / "run" / "seed_1"),
                     "--episodes", "2", "--deploy", "centralized",
                     "--out", str(out_csv)])
        assert code == 0
        row = json.loads(capsys.readouterr().out)
        # 2 agents, hidden width 8: 2*2*8 floats per env step
        assert row["comm_floats"] == 2 * 2 * 8 * row["env_steps"]
        header = out_csv.read_text().splitlines()[0]
        assert "comm_messages" in header

    def test_eval_with_topology_restriction(self, tmp_path, capsys):
        cfg = write_toy_config(tmp_path)
        main(["train", "--config", str(cfg)])
        topo = {"n": 2, "reachable": [[1, 0], [0, 1]]}
        topo_path = tmp_path / "topo.json"
        topo_path.write_text(json.dumps(topo))
        capsys.readouterr()  # drop training output
        code = main(["eval", "--run", str(tmp_path / "run" / "seed_1"),
                     "--episodes", "2", "--topology", str(topo_path),
                     "--deploy", "distributed"])
        assert code == 0
        row = json.loads(capsys.readouterr().out)
        assert row["comm_messages"] == 0  # nobody hears anybody


class TestSweepCommand:
    def test_auc_trapezoid_hand_case(self):
        # three-point curve: trapezoids (0.0+0.5)/2*10 + (0.5+1.0)/2*10
        steps = np.array([0.0, 10.0, 20.0])
        rets = np.array([0.0, 0.5, 1.0])
        assert abs(curve_auc(steps, rets) - (2.5 + 7.5)) < 1e-12

    def test_single_cell_sweep_matches_train(self, tmp_path):
        base = json.loads(write_toy_config(tmp_path).read_text())
        base.pop("out_dir")
        sweep_spec = {"base": base, "grid": {"num_layers": [1]}}
        sweep_path = tmp_path / "sweep.json"
        sweep_path.write_text(json.dumps(sweep_spec))
        assert main(["sweep", "--config", str(sweep_path),
                     "--out", str(tmp_path / "sweepout")]) == 0
        summary = json.loads((tmp_path / "sweepout" / "summary.json").read_text())
        assert len(summary) == 1

        cell_csv = tmp_path / "sweepout" / "cell_num_layers1" / "metrics.csv"
        main(["train", "--config", str(write_toy_config(tmp_path)),
              "--out", str(tmp_path / "plain")])
        assert cell_csv.read_bytes() == (tmp_path / "plain" / "metrics.csv").read_bytes()

    def test_grid_covers_cartesian_product(self, tmp_path):
        base = json.loads(write_toy_config(tmp_path).read_text())
        base.pop("out_dir")
        base["total_env_steps"] = 40
        sweep_spec = {"base": base,
                      "grid": {"num_layers": [1, 2], "dropout": [0.0, 0.1]}}
        path = tmp_path / "sweep.json"
        path.write_text(json.dumps(sweep_spec))
        assert main(["sweep", "--config", str(path),
                     "--out", str(tmp_path / "grid")]) == 0
        summary = json.loads((tmp_path / "grid" / "summary.json").read_text())
        assert len(summary) == 4
        combos = {(c["num_layers"], c["dropout"]) for c in summary}
        assert combos == {(1, 0.0), (1, 0.1), (2, 0.0), (2, 0.1)}
        csv_header = (tmp_path / "grid" / "summary.csv").read_text().splitlines()[0]
        assert csv_header == "dropout,num_layers,auc,final_return,final_success"

    def test_empty_grid_rejected(self, tmp_path, capsys):
        path = tmp_path / "sweep.json"
        path.write_text(json.dumps({"base": {}, "grid": {}}))
        assert main(["sweep", "--config", str(path)]) == 2
        assert "grid" in capsys.readouterr().err
