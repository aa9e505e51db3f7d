"""Command-line entry point: data generation, training, evaluation,
gradient verification, and attribute-count sweeps.

Configuration precedence is flags > config file > defaults, with the
NEURON_SEED environment variable as a seed fallback between file and
default.  Every writing subcommand drops a run manifest (resolved config,
seed, artifact hashes) next to its outputs so a run can be reproduced
from the manifest alone.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import fileio
from .alignment import TrainConfig, total_loss, train
from .autodiff import Tensor
from .encoder import load_dataset, save_dataset
from .errors import ConfigurationError
from .evaluate import (CalibrationConfig, SplitProtocol, evaluate, format_report,
                       load_protocol, save_protocol)
from .model import DualStreamModel, ModelConfig, load_checkpoint, save_checkpoint
from .semantics import load_bank, save_bank, synth_bank
from .synth import SynthSpec, generate, split_dataset

DEFAULTS = {
    "seed": 0,
    # synthetic data
    "num_classes": 12, "samples_per_class": 50, "noise_std": 0.05,
    "seen_fraction": 2.0 / 3.0, "n_a": 5, "train_fraction": 0.8,
    # shared dimensions
    "frames": 60, "joints": 8, "persons": 1, "embed_dim": 16,
    # model
    "t_hat": 12, "channels": 64, "hidden": 32, "n_s": 80, "n_t": 80,
    "n_e": 3, "alphas": (0.3, 0.5, 0.7),
    # training
    "lr": 0.1, "lr_decay": 0.1, "lr_milestones": (10, 20),
    "weight_decay": 0.0005, "batch_size": 64, "epochs": 30,
    # calibration
    "gamma_s": 0.0003, "gamma_t": 0.0002,
}

_TUPLE_FIELDS = {"alphas": float, "lr_milestones": int}


class RunConfig:
    """Flat resolved configuration with override provenance."""

    def __init__(self, file_values=None, flag_values=None, env=None):
        env = os.environ if env is None else env
        file_values = dict(file_values or {})
        flag_values = {k: v for k, v in (flag_values or {}).items() if v is not None}
        unknown = sorted(set(file_values) - set(DEFAULTS))
        if unknown:
            raise ConfigurationError(f"unknown config file keys: {unknown}")
        values = dict(DEFAULTS)
        if "NEURON_SEED" in env:
            values["seed"] = int(env["NEURON_SEED"])
        values.update(file_values)
        values.update(flag_values)
        for key, cast in _TUPLE_FIELDS.items():
            values[key] = tuple(cast(v) for v in values[key])
        self.values = values
        self.overrides = {"file": sorted(file_values), "flags": sorted(flag_values)}

    def __getattr__(self, name):
        try:
            return self.values[name]
        except KeyError:
            raise AttributeError(name) from None

    def resolved(self) -> dict:
        out = dict(self.values)
        for key in _TUPLE_FIELDS:
            out[key] = list(out[key])
        return out

    def synth_spec(self) -> SynthSpec:
        return SynthSpec(num_classes=self.num_classes,
                         samples_per_class=self.samples_per_class,
                         frames=self.frames, joints=self.joints,
                         persons=self.persons, noise_std=self.noise_std,
                         seed=self.seed, seen_fraction=self.seen_fraction,
                         n_a=self.n_a, embed_dim=self.embed_dim)

    def model_config(self, **overrides) -> ModelConfig:
        kw = dict(frames=self.frames, t_hat=self.t_hat, joints=self.joints,
                  persons=self.persons, channels=self.channels, hidden=self.hidden,
                  n_s=self.n_s, n_t=self.n_t, n_e=self.n_e, alphas=self.alphas,
                  embed_dim=self.embed_dim)
        kw.update(overrides)
        return ModelConfig(**kw)

    def train_config(self) -> TrainConfig:
        return TrainConfig(lr=self.lr, lr_decay=self.lr_decay,
                           lr_milestones=self.lr_milestones,
                           weight_decay=self.weight_decay,
                           batch_size=self.batch_size, epochs=self.epochs,
                           seed=self.seed)

    def calibration(self) -> CalibrationConfig:
        return CalibrationConfig(gamma_s=self.gamma_s, gamma_t=self.gamma_t)


def load_run_config(args) -> RunConfig:
    file_values = {}
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.exists():
            raise FileNotFoundError(f"config file {path} does not exist")
        file_values = json.loads(path.read_text())
        if not isinstance(file_values, dict):
            raise ConfigurationError(f"{path}: config file must hold a JSON object")
    flag_values = {k: getattr(args, k, None) for k in DEFAULTS}
    return RunConfig(file_values, flag_values)


def write_run_manifest(out_dir: Path, command: str, cfg: RunConfig, artifacts):
    doc = {
        "command": command,
        "seed": cfg.seed,
        "config": cfg.resolved(),
        "overrides": cfg.overrides,
        "artifacts": {p.name: fileio.sha256_file(p) for p in artifacts},
    }
    tmp = out_dir / "run.json.tmp"
    tmp.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    os.replace(tmp, out_dir / "run.json")


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _artifact_paths(*stems):
    paths = []
    for stem in stems:
        stem = Path(stem)
        if stem.suffix == ".json":
            paths.append(stem)
        else:
            paths.append(Path(fileio.manifest_path(stem)))
            paths.append(Path(fileio.payload_path(stem)))
    return paths


def cmd_gen_data(args) -> int:
    cfg = load_run_config(args)
    out = _outdir(args)
    dataset, bank, protocol = generate(cfg.synth_spec(), n_e=cfg.n_e)
    save_dataset(out / "dataset", dataset)
    save_bank(out / "bank", bank)
    save_protocol(out / "protocol.json", protocol)
    artifacts = _artifact_paths(out / "dataset", out / "bank", out / "protocol.json")
    write_run_manifest(out, "gen-data", cfg, artifacts)
    print(f"wrote {len(dataset)} samples, {len(bank.classes)} classes -> {out}")
    return 0


def _load_data_dir(data_dir, mode=None):
    data = Path(data_dir)
    dataset = list(load_dataset(data / "dataset"))
    bank = load_bank(data / "bank")
    protocol = load_protocol(data / "protocol.json", mode=mode)
    return dataset, bank, protocol


def cmd_train(args) -> int:
    cfg = load_run_config(args)
    out = _outdir(args)
    dataset, bank, protocol = _load_data_dir(args.data)
    train_set, _ = split_dataset(dataset, protocol, cfg.train_fraction)
    ckpt = train(train_set, bank, protocol, cfg.train_config(),
                 model_config=cfg.model_config())
    save_checkpoint(out / "model.ckpt", ckpt)
    write_run_manifest(out, "train", cfg, _artifact_paths(out / "model.ckpt"))
    log = ckpt.meta["loss_log"]
    print(f"trained {cfg.epochs} epochs on {len(train_set)} samples: "
          f"loss {log[0]:.4f} -> {log[-1]:.4f}")
    return 0


def cmd_eval(args) -> int:
    cfg = load_run_config(args)
    ckpt = load_checkpoint(args.ckpt)
    dataset, bank, protocol = _load_data_dir(args.data, mode=args.mode)
    if args.split != "all":
        train_set, test_set = split_dataset(dataset, protocol, cfg.train_fraction)
        dataset = train_set if args.split == "train" else test_set
    report = evaluate(ckpt, dataset, bank, protocol, calib=cfg.calibration(),
                      strict=args.strict, batch_size=cfg.batch_size)
    print(json.dumps(report, indent=2, sort_keys=True))
    print(format_report(report))
    if args.out:
        out = _outdir(args)
        report_path = out / "report.json"
        report_path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
        write_run_manifest(out, "eval", cfg, [report_path])
    return 0


def cmd_gradcheck(args) -> int:
    cfg = load_run_config(args)
    config = ModelConfig(frames=12, t_hat=6, joints=4, persons=1, channels=8,
                         hidden=6, n_s=5, n_t=5, n_e=3, alphas=(0.3, 0.5, 0.7),
                         embed_dim=4)
    model = DualStreamModel(config, seed=3, dtype=ad.VERIFY_DTYPE)
    bank = synth_bank(4, n_a=2, d=4, seed=5)
    rng = np.random.default_rng(7)
    coords = rng.standard_normal((2, config.frames, config.joints, 3))

    def loss_fn():
        xs, xt = model.phase_features(Tensor(coords))
        return total_loss(xs, xt, model.heads, bank, [0, 2], range(4))

    graph = ad.Graph(loss_fn, model.parameters())
    err = ad.grad_check(graph, eps=args.eps)
    ok = err < 1e-5
    print(f"max relative error: {err:.3e}")
    print("PASS (< 1e-5)" if ok else "FAIL (>= 1e-5)")
    return 0 if ok else 1


def cmd_sweep(args) -> int:
    cfg = load_run_config(args)
    out = _outdir(args)
    grid = [int(v) for v in args.grid.split(",")]
    dataset, bank, protocol = generate(cfg.synth_spec(), n_e=cfg.n_e)
    train_set, test_set = split_dataset(dataset, protocol, cfg.train_fraction)
    zsl = SplitProtocol(protocol.seen, protocol.unseen, "zsl")
    rows = []
    for n_s in grid:
        for n_t in grid:
            model_config = cfg.model_config(n_s=n_s, n_t=n_t)
            ckpt = train(train_set, bank, protocol, cfg.train_config(),
                         model_config=model_config)
            gz = evaluate(ckpt, test_set, bank, protocol, calib=cfg.calibration())
            zs = evaluate(ckpt, test_set, bank, zsl, calib=cfg.calibration())
            rows.append({"n_s": n_s, "n_t": n_t, "seed": cfg.seed,
                         "zsl_acc": zs["acc"], "seen": gz["seen"],
                         "unseen": gz["unseen"], "harmonic": gz["harmonic"]})
            print(f"n_s={n_s} n_t={n_t}: zsl {zs['acc']:.3f} h {gz['harmonic']:.3f}")
    csv_path = out / "sweep.csv"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)
    write_run_manifest(out, "sweep", cfg, [csv_path])
    return 0


def _add_config_flags(parser):
    parser.add_argument("--config", help="JSON config file")
    for key, default in DEFAULTS.items():
        flag = "--" + key.replace("_", "-")
        if key in _TUPLE_FIELDS:
            cast = _TUPLE_FIELDS[key]
            parser.add_argument(flag, default=None, metavar="V,V,...",
                                type=lambda s, c=cast: tuple(c(v) for v in s.split(",")))
        elif isinstance(default, int):
            parser.add_argument(flag, default=None, type=int)
        else:
            parser.add_argument(flag, default=None, type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="skelzsl",
                                     description="zero-shot skeleton action recognition")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="write a synthetic dataset, bank and protocol")
    p.add_argument("--out", required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train a checkpoint on a generated dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint under a split protocol")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--mode", required=True, choices=("zsl", "gzsl"))
    p.add_argument("--split", default="test", choices=("train", "test", "all"))
    p.add_argument("--strict", action="store_true")
    p.add_argument("--out")
    _add_config_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="verify gradients on a toy forward pass")
    p.add_argument("--eps", default=1e-4, type=float)
    _add_config_flags(p)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("sweep", help="grid over attribute counts, emitting a CSV")
    p.add_argument("--out", required=True)
    p.add_argument("--grid", default="20,50,80,100", metavar="N,N,...")
    _add_config_flags(p)
    p.set_defaults(func=cmd_sweep)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
