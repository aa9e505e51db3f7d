"""Full dual-stream model: encoder, both prototype streams, projection
heads, and checkpoint serialization.

The model owns every trainable parameter under a stable flat namespace,
so checkpoints are an ordered list of (name, shape) pairs over one raw
payload and reload bit-exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import fileio
from .autodiff import MLP, Tensor
from .encoder import EncoderConfig, SkeletonEncoder
from .errors import ConfigurationError, DimensionError, FormatError
from .spatial import PhaseSchedule, init_prototype, run_spatial
from .temporal import GateSet, run_temporal

DEFAULT_ALPHAS = (0.3, 0.5, 0.7)


@dataclass
class ProjectionHeads:
    """Per-phase skeleton projections into the semantic space, plus the
    shared semantic-side projection."""

    spatial: list
    temporal: list
    psi: MLP

    @classmethod
    def create(cls, rng, channels, hidden, embed_dim, n_e, dtype, shared=False):
        def make():
            return MLP.create(rng, channels, hidden, embed_dim, dtype)

        if shared:
            s = make()
            t = make()
            spatial = [s] * n_e
            temporal = [t] * n_e
        else:
            spatial = [make() for _ in range(n_e)]
            temporal = [make() for _ in range(n_e)]
        psi = MLP.create(rng, embed_dim, hidden, embed_dim, dtype)
        return cls(spatial, temporal, psi)

    def parameters(self, prefix="heads"):
        params = {}
        for e, head in enumerate(_unique(self.spatial)):
            params.update(head.parameters(f"{prefix}.s{e}"))
        for e, head in enumerate(_unique(self.temporal)):
            params.update(head.parameters(f"{prefix}.t{e}"))
        params.update(self.psi.parameters(f"{prefix}.psi"))
        return params


def _unique(items):
    seen = []
    for item in items:
        if not any(item is s for s in seen):
            seen.append(item)
    return seen


@dataclass(frozen=True)
class ModelConfig:
    frames: int = 60
    t_hat: int = 12
    joints: int = 8
    persons: int = 1
    channels: int = 64
    hidden: int = 32
    n_s: int = 80
    n_t: int = 80
    n_e: int = 3
    alphas: tuple = DEFAULT_ALPHAS
    embed_dim: int = 16
    share_refiners: bool = False
    share_gates: bool = False
    share_heads: bool = False

    def __post_init__(self):
        object.__setattr__(self, "alphas", tuple(float(a) for a in self.alphas))
        if len(self.alphas) != self.n_e:
            raise ConfigurationError(
                f"{len(self.alphas)} retention fractions for n_e={self.n_e} phases")
        if min(self.n_s, self.n_t, self.embed_dim, self.hidden) < 1:
            raise ConfigurationError("n_s, n_t, hidden and embed_dim must all be >= 1")
        self.encoder_config()  # validates the dimension arithmetic

    def encoder_config(self) -> EncoderConfig:
        return EncoderConfig(frames=self.frames, t_hat=self.t_hat, joints=self.joints,
                             persons=self.persons, channels=self.channels,
                             hidden=self.hidden, n_e=self.n_e)

    def to_manifest(self) -> dict:
        return {
            "frames": self.frames, "t_hat": self.t_hat, "joints": self.joints,
            "persons": self.persons, "channels": self.channels, "hidden": self.hidden,
            "n_s": self.n_s, "n_t": self.n_t, "n_e": self.n_e,
            "alphas": list(self.alphas), "embed_dim": self.embed_dim,
            "share_refiners": self.share_refiners, "share_gates": self.share_gates,
            "share_heads": self.share_heads,
        }

    @classmethod
    def from_manifest(cls, doc: dict) -> "ModelConfig":
        kw = dict(doc)
        kw["alphas"] = tuple(kw.get("alphas", DEFAULT_ALPHAS))
        return cls(**kw)


class DualStreamModel:
    """Encoder plus spatial/temporal prototype streams and heads."""

    def __init__(self, config: ModelConfig, seed=0, dtype=ad.TRAIN_DTYPE):
        self.config = config
        self.seed = int(seed)
        self.dtype = np.dtype(dtype)
        rng = np.random.default_rng([self.seed, 0xD0DE])
        cfg = config
        self.encoder = SkeletonEncoder(cfg.encoder_config(), rng, self.dtype)
        self.p_s0 = init_prototype(rng, cfg.channels, cfg.n_s, self.dtype)
        self.p_t0 = init_prototype(rng, cfg.channels, cfg.n_t, self.dtype)
        self.schedule = PhaseSchedule(cfg.alphas)
        if cfg.share_refiners:
            shared = MLP.create(rng, cfg.channels, cfg.hidden, cfg.channels, self.dtype)
            self.refiners = [shared] * cfg.n_e
        else:
            self.refiners = [MLP.create(rng, cfg.channels, cfg.hidden, cfg.channels, self.dtype)
                             for _ in range(cfg.n_e)]
        if cfg.share_gates:
            shared = GateSet.create(rng, cfg.channels, cfg.hidden, self.dtype)
            self.gate_sets = [shared] * cfg.n_e
        else:
            self.gate_sets = [GateSet.create(rng, cfg.channels, cfg.hidden, self.dtype)
                              for _ in range(cfg.n_e)]
        self.heads = ProjectionHeads.create(rng, cfg.channels, cfg.hidden, cfg.embed_dim,
                                            cfg.n_e, self.dtype, shared=cfg.share_heads)
        self._params = self._collect_parameters()

    def _collect_parameters(self):
        params = {"prototype.s0": self.p_s0, "prototype.t0": self.p_t0}
        params.update(self.encoder.parameters("encoder"))
        for e, r in enumerate(_unique(self.refiners)):
            params.update(r.parameters(f"refine.s{e}"))
        for e, g in enumerate(_unique(self.gate_sets)):
            params.update(g.parameters(f"gates.t{e}"))
        params.update(self.heads.parameters("heads"))
        return params

    def parameters(self) -> dict:
        return dict(self._params)

    def forward(self, coords: Tensor):
        """coords (batch, frames, v_hat, 3) -> per-phase prototype lists."""
        _, f_s, f_t = self.encoder.forward(coords)
        spatial = run_spatial(f_s, self.p_s0, self.schedule, self.refiners)
        temporal = run_temporal(f_t, self.p_t0, self.gate_sets)
        return spatial, temporal

    def phase_features(self, coords: Tensor):
        """Pooled per-phase features for both streams: lists of (batch, C)."""
        spatial, temporal = self.forward(coords)
        xs = [ad.mean_pool(p, p.data.ndim - 1) for p in spatial]
        xt = [ad.mean_pool(p, p.data.ndim - 1) for p in temporal]
        return xs, xt


class Checkpoint:
    """Trained parameter snapshot plus the config needed to rebuild it."""

    def __init__(self, model_config: ModelConfig, params: dict, meta: dict | None = None):
        self.model_config = model_config
        self.params = {name: np.asarray(arr, dtype=np.float32)
                       for name, arr in params.items()}
        self.meta = dict(meta or {})

    @classmethod
    def from_model(cls, model: DualStreamModel, meta=None) -> "Checkpoint":
        params = {name: np.array(t.data, dtype=np.float32)
                  for name, t in model.parameters().items()}
        return cls(model.config, params, meta)

    def to_model(self, dtype=ad.TRAIN_DTYPE) -> DualStreamModel:
        model = DualStreamModel(self.model_config, seed=self.meta.get("seed", 0), dtype=dtype)
        live = model.parameters()
        if set(live) != set(self.params):
            missing = sorted(set(live) ^ set(self.params))
            raise FormatError(f"checkpoint parameter names disagree with the model: {missing}")
        for name, tensor in live.items():
            stored = self.params[name]
            if stored.shape != tensor.data.shape:
                raise DimensionError(
                    f"checkpoint parameter {name} has shape {stored.shape}, "
                    f"model expects {tensor.data.shape}")
            tensor.data = stored.astype(dtype, copy=True)
        return model


def save_checkpoint(path, checkpoint: Checkpoint):
    names = sorted(checkpoint.params)
    manifest = {
        "kind": "checkpoint",
        "params": [{"name": n, "shape": list(checkpoint.params[n].shape)} for n in names],
        "model_config": checkpoint.model_config.to_manifest(),
        "meta": checkpoint.meta,
    }
    payload = np.concatenate([checkpoint.params[n].ravel() for n in names])
    fileio.write_blob(path, manifest, payload)


def load_checkpoint(path) -> Checkpoint:
    manifest, values = fileio.read_blob(path)
    fileio.require_keys(manifest, ("params", "model_config"), path)
    if manifest.get("kind", "checkpoint") != "checkpoint":
        raise FormatError(f"{fileio.manifest_path(path)}: not a checkpoint "
                          f"(kind={manifest.get('kind')!r})")
    entries = manifest["params"]
    expected = sum(int(np.prod(e["shape"])) for e in entries)
    fileio.require_count(values, expected, path, "checkpoint payload")
    params = {}
    cursor = 0
    for entry in entries:
        shape = tuple(int(v) for v in entry["shape"])
        size = int(np.prod(shape))
        params[entry["name"]] = values[cursor:cursor + size].reshape(shape)
        cursor += size
    config = ModelConfig.from_manifest(manifest["model_config"])
    return Checkpoint(config, params, manifest.get("meta"))
