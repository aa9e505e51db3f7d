"""Tests for the command-line interface."""

import json

import pytest

from skelzsl.cli import DEFAULTS, RunConfig, main
from skelzsl.errors import ConfigurationError

TINY = ["--num-classes", "6", "--samples-per-class", "6", "--frames", "12",
        "--joints", "4", "--embed-dim", "6"]
TINY_MODEL = TINY + ["--t-hat", "6", "--channels", "8", "--hidden", "6",
                     "--n-s", "5", "--n-t", "7", "--batch-size", "8"]


def gen(tmp_path, name="d", seed="1"):
    out = tmp_path / name
    assert main(["gen-data", "--out", str(out), "--seed", seed] + TINY) == 0
    return out


def train(tmp_path, data, name="m", seed="1", epochs="1"):
    out = tmp_path / name
    assert main(["train", "--data", str(data), "--out", str(out),
                 "--seed", seed, "--epochs", epochs] + TINY_MODEL) == 0
    return out


class TestRunConfig:
    def test_defaults_apply(self):
        cfg = RunConfig(env={})
        assert cfg.n_s == 80 and cfg.epochs == 30 and cfg.seed == 0
        assert cfg.alphas == (0.3, 0.5, 0.7)

    def test_precedence_flags_over_file_over_defaults(self):
        cfg = RunConfig(file_values={"epochs": 5, "lr": 0.2},
                        flag_values={"epochs": 7}, env={})
        assert cfg.epochs == 7      # flag wins
        assert cfg.lr == 0.2        # file wins over default
        assert cfg.batch_size == 64  # default
        assert cfg.overrides == {"file": ["epochs", "lr"], "flags": ["epochs"]}

    def test_env_seed_sits_between_file_and_default(self):
        assert RunConfig(env={"NEURON_SEED": "9"}).seed == 9
        assert RunConfig(file_values={"seed": 3}, env={"NEURON_SEED": "9"}).seed == 3
        assert RunConfig(flag_values={"seed": 4}, env={"NEURON_SEED": "9"}).seed == 4

    def test_unknown_file_key_rejected(self):
        with pytest.raises(ConfigurationError, match="momentum"):
            RunConfig(file_values={"momentum": 0.9}, env={})

    def test_constructors_consume_the_resolved_values(self):
        cfg = RunConfig(flag_values={"n_s": 20, "gamma_s": 0.1}, env={})
        assert cfg.model_config().n_s == 20
        assert cfg.calibration().gamma_s == 0.1
        assert cfg.train_config().lr == DEFAULTS["lr"]
        assert cfg.synth_spec().num_classes == DEFAULTS["num_classes"]


class TestGenData:
    def test_writes_all_artifacts_and_manifest(self, tmp_path):
        out = gen(tmp_path)
        for name in ("dataset.json", "dataset.bin", "bank.json", "bank.bin",
                     "protocol.json", "run.json"):
            assert (out / name).exists(), name
        doc = json.loads((out / "run.json").read_text())
        assert doc["command"] == "gen-data"
        assert doc["seed"] == 1
        assert set(doc["artifacts"]) == {"dataset.json", "dataset.bin",
                                         "bank.json", "bank.bin", "protocol.json"}

    def test_same_seed_gives_identical_hashes(self, tmp_path):
        a = gen(tmp_path, "a", seed="7")
        b = gen(tmp_path, "b", seed="7")
        ha = json.loads((a / "run.json").read_text())["artifacts"]
        hb = json.loads((b / "run.json").read_text())["artifacts"]
        assert ha == hb

    def test_different_seed_changes_hashes(self, tmp_path):
        a = gen(tmp_path, "a", seed="7")
        b = gen(tmp_path, "b", seed="8")
        ha = json.loads((a / "run.json").read_text())["artifacts"]
        hb = json.loads((b / "run.json").read_text())["artifacts"]
        assert ha != hb


class TestTrainEval:
    def test_round_trip(self, tmp_path, capsys):
        data = gen(tmp_path)
        model = train(tmp_path, data)
        assert (model / "model.ckpt.json").exists()
        assert (model / "run.json").exists()
        code = main(["eval", "--ckpt", str(model / "model.ckpt"),
                     "--data", str(data), "--mode", "gzsl",
                     "--out", str(tmp_path / "r")] + TINY_MODEL)
        assert code == 0
        text = capsys.readouterr().out
        assert "harmonic" in text
        report = json.loads((tmp_path / "r" / "report.json").read_text())
        assert report["mode"] == "gzsl"
        assert {"seen", "unseen", "harmonic", "n_samples",
                "protocol", "calib"} <= set(report)

    def test_eval_zsl_reports_acc(self, tmp_path, capsys):
        data = gen(tmp_path)
        model = train(tmp_path, data)
        capsys.readouterr()  # drop gen/train chatter
        code = main(["eval", "--ckpt", str(model / "model.ckpt"),
                     "--data", str(data), "--mode", "zsl"] + TINY_MODEL)
        assert code == 0
        out = capsys.readouterr().out
        report = json.loads(out[:out.index("\nmode")])
        assert report["mode"] == "zsl" and "acc" in report

    def test_config_file_feeds_training(self, tmp_path):
        data = gen(tmp_path)
        config = {"epochs": 1, "t_hat": 6, "channels": 8, "hidden": 6,
                  "n_s": 5, "n_t": 7, "batch_size": 8, "num_classes": 6,
                  "samples_per_class": 6, "frames": 12, "joints": 4,
                  "embed_dim": 6, "seed": 1}
        cfg_path = tmp_path / "config.json"
        cfg_path.write_text(json.dumps(config))
        out = tmp_path / "m"
        assert main(["train", "--data", str(data), "--out", str(out),
                     "--config", str(cfg_path), "--epochs", "2"]) == 0
        doc = json.loads((out / "run.json").read_text())
        assert doc["config"]["epochs"] == 2  # flag beats file
        assert doc["config"]["n_s"] == 5
        assert "epochs" in doc["overrides"]["file"]
        assert "epochs" in doc["overrides"]["flags"]

    def test_manifest_values_rebuild_the_config(self, tmp_path):
        data = gen(tmp_path)
        model = train(tmp_path, data)
        doc = json.loads((model / "run.json").read_text())
        rebuilt = RunConfig(file_values=doc["config"], env={})
        assert rebuilt.resolved() == doc["config"]


class TestGradcheckCommand:
    def test_passes_and_prints_error(self, capsys):
        assert main(["gradcheck"]) == 0
        out = capsys.readouterr().out
        assert "max relative error" in out
        assert "PASS" in out


class TestSweep:
    def test_tiny_grid_emits_csv(self, tmp_path):
        out = tmp_path / "s"
        code = main(["sweep", "--out", str(out), "--grid", "4,6",
                     "--seed", "1", "--epochs", "1"] + TINY_MODEL)
        assert code == 0
        rows = list(csv_rows(out / "sweep.csv"))
        assert len(rows) == 4
        assert {(r["n_s"], r["n_t"]) for r in rows} == \
            {("4", "4"), ("4", "6"), ("6", "4"), ("6", "6")}
        for r in rows:
            assert 0.0 <= float(r["harmonic"]) <= 1.0
        doc = json.loads((out / "run.json").read_text())
        assert "sweep.csv" in doc["artifacts"]


def csv_rows(path):
    import csv
    with open(path, newline="") as fh:
        yield from csv.DictReader(fh)


class TestExitCodes:
    def test_usage_errors_exit_two(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["eval", "--mode", "gzsl", "--data", "d"])  # no --ckpt
        assert exc.value.code == 2
        with pytest.raises(SystemExit) as exc:
            main(["bogus"])
        assert exc.value.code == 2
        with pytest.raises(SystemExit) as exc:
            main(["train", "--data", "d", "--out", "o", "--no-such-flag", "1"])
        assert exc.value.code == 2
        capsys.readouterr()

    def test_file_errors_exit_one(self, tmp_path, capsys):
        code = main(["train", "--data", str(tmp_path / "missing"),
                     "--out", str(tmp_path / "o")])
        assert code == 1
        assert "error:" in capsys.readouterr().err

    def test_corrupt_config_exits_one(self, tmp_path, capsys):
        bad = tmp_path / "config.json"
        bad.write_text(json.dumps({"momentum": 0.9}))
        code = main(["gen-data", "--out", str(tmp_path / "d"),
                     "--config", str(bad)])
        assert code == 1
        assert "momentum" in capsys.readouterr().err
