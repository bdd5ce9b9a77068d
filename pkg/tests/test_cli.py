import json
import subprocess
import sys

import numpy as np
import pytest

from tabrep.cli import EXIT_CODES, load_config, main
from tabrep.errors import ConfigError


def run_cli(argv, capsys=None):
    return main(argv)


@pytest.fixture()
def workdir(tmp_path):
    config = {
        "seed": 5,
        "format": {"date_column": "date", "label_columns": ["churn"]},
        "synth": {"n_customers": 80, "records_min": 3, "records_max": 8},
        "model": {"embed_dim": 8, "n_s": 5, "heads": 2, "t_max": 2,
                  "rep_width": 8, "fusion_hidden": 16, "head_hidden": 8,
                  "recon_count": 1, "recon_dim": 4, "dropout": 0.0},
        "train": {"epochs": 2, "batch_size": 16, "learning_rate": 0.01},
        "interpret": {"k": 3, "mask_samples": 6,
                      "targets": [{"kind": "class", "task": "churn"}]},
        "tasks": ["churn"],
    }
    path = tmp_path / "config.json"
    path.write_text(json.dumps(config))
    return tmp_path


def test_config_rejects_unknown_sections(tmp_path):
    path = tmp_path / "c.json"
    path.write_text('{"optimizer": {}}')
    with pytest.raises(ConfigError):
        load_config(str(path))


def test_config_rejects_unknown_keys(tmp_path):
    path = tmp_path / "c.json"
    path.write_text('{"train": {"momentum": 0.9}}')
    with pytest.raises(ConfigError):
        load_config(str(path))


def test_config_seed_flows_into_stages(tmp_path):
    path = tmp_path / "c.json"
    path.write_text('{"seed": 9}')
    cfg = load_config(str(path))
    assert cfg.seed == 9
    assert cfg.train.seed == 9
    assert cfg.synth.seed == 9
    assert cfg.interpret.seed == 9
    cfg = load_config(str(path), seed_override=21)
    assert cfg.train.seed == 21


def test_config_stage_seed_can_be_pinned(tmp_path):
    path = tmp_path / "c.json"
    path.write_text('{"seed": 9, "synth": {"seed": 3}}')
    cfg = load_config(str(path))
    assert cfg.synth.seed == 3
    assert cfg.train.seed == 9


def test_full_pipeline_round_trip(workdir, capsys):
    config = str(workdir / "config.json")
    out = str(workdir / "run")
    table = f"{out}/synth.csv"

    assert run_cli(["synth", "--config", config, "--out", out]) == 0
    assert (workdir / "run" / "synth.csv").exists()

    assert run_cli(["profile", "--config", config, "--table", table,
                    "--out", out]) == 0
    schema = json.loads((workdir / "run" / "schema.json").read_text())
    stats = json.loads((workdir / "run" / "stats.json").read_text())
    assert set(schema["kinds"].values()) >= {"SN", "DN", "SC", "DC"}
    assert abs(sum(stats["kind_ratios"].values()) - 1.0) < 1e-9

    assert run_cli(["train", "--config", config, "--table", table,
                    "--schema", f"{out}/schema.json", "--out", out]) == 0
    checkpoint = f"{out}/checkpoint.json"
    log_lines = (workdir / "run" / "train_log.jsonl").read_text().splitlines()
    assert len(log_lines) == 2
    for line in log_lines:
        rec = json.loads(line)
        assert {"epoch", "train_loss", "val_loss", "val_auc"} <= set(rec)

    assert run_cli(["embed", "--config", config, "--table", table,
                    "--checkpoint", checkpoint, "--out", out]) == 0
    rows = (workdir / "run" / "embeddings.csv").read_text().splitlines()
    assert len(rows) == 81           # header + one row per customer
    assert rows[0].split(",")[0] == "customer_id"
    assert len(rows[1].split(",")) == 9

    assert run_cli(["predict", "--config", config, "--table", table,
                    "--checkpoint", checkpoint, "--out", out]) == 0
    rows = (workdir / "run" / "predictions.csv").read_text().splitlines()
    assert rows[0] == "customer_id,p_churn_0,p_churn_1"
    assert len(rows) == 81
    proba = np.array([[float(v) for v in line.split(",")[1:]] for line in rows[1:]])
    assert np.all(np.abs(proba.sum(axis=1) - 1.0) < 1e-9)

    assert run_cli(["interpret", "--config", config, "--table", table,
                    "--checkpoint", checkpoint, "--out", out, "--text"]) == 0
    genome = json.loads((workdir / "run" / "genome.json").read_text())
    assert genome["targets"][0]["target"] == {"kind": "class", "task": "churn",
                                              "class_index": 1}
    assert (workdir / "run" / "genome.txt").exists()

    assert run_cli(["evaluate", "--config", config, "--table", table,
                    "--checkpoint", checkpoint, "--out", out]) == 0
    metrics = json.loads((workdir / "run" / "metrics.json").read_text())
    assert set(metrics) == {"auc", "f_score", "weighted_accuracy"}
    for v in metrics.values():
        assert 0.0 <= v <= 1.0
    capsys.readouterr()


def test_pipeline_is_deterministic(workdir, capsys):
    config = str(workdir / "config.json")
    outputs = []
    for run in range(2):
        out = str(workdir / f"rep{run}")
        run_cli(["synth", "--config", config, "--out", out])
        run_cli(["train", "--config", config, "--table", f"{out}/synth.csv",
                 "--out", out])
        run_cli(["embed", "--config", config, "--table", f"{out}/synth.csv",
                 "--checkpoint", f"{out}/checkpoint.json", "--out", out])
        run_cli(["evaluate", "--config", config, "--table", f"{out}/synth.csv",
                 "--checkpoint", f"{out}/checkpoint.json", "--out", out])
        outputs.append({name: (workdir / f"rep{run}" / name).read_bytes()
                        for name in ("synth.csv", "checkpoint.json",
                                     "train_log.jsonl", "embeddings.csv",
                                     "metrics.json")})
    assert outputs[0] == outputs[1]
    capsys.readouterr()


def test_missing_date_index_fails_with_error_json(tmp_path, capsys):
    table = tmp_path / "t.csv"
    table.write_text("customer_id,age\na,1\nb,2\n")
    code = run_cli(["profile", "--table", str(table), "--out", str(tmp_path)])
    captured = capsys.readouterr()
    assert code == EXIT_CODES["profile"]
    payload = json.loads(captured.err)
    assert payload["error"]["code"] == "missing-date-index"


def test_unreadable_table_maps_to_stage_exit_code(tmp_path, capsys):
    code = run_cli(["embed", "--table", str(tmp_path / "absent.csv"),
                    "--checkpoint", str(tmp_path / "absent.json"),
                    "--out", str(tmp_path)])
    captured = capsys.readouterr()
    assert code == EXIT_CODES["embed"]
    payload = json.loads(captured.err)
    assert "message" in payload["error"]


def test_bad_config_reports_stage_code(tmp_path, capsys):
    config = tmp_path / "c.json"
    config.write_text('{"synth": {"n_customers": -4}}')
    code = run_cli(["synth", "--config", str(config), "--out", str(tmp_path)])
    captured = capsys.readouterr()
    assert code == EXIT_CODES["synth"]
    assert json.loads(captured.err)["error"]["code"]


def test_console_entry_point_runs():
    proc = subprocess.run([sys.executable, "-m", "tabrep.cli", "--help"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    for name in EXIT_CODES:
        assert name in proc.stdout
