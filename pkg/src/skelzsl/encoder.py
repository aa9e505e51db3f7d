"""Skeleton sequences, temporal resampling, and the desk-scale joint encoder.

The encoder lifts raw 3D joint coordinates into a cell grid F of shape
(t_hat, v_hat, channels): persons are folded into the joint axis, each
joint's coordinates get an affine lift to `channels` dims, frames are
average-pooled by stride frames/t_hat, and a shared two-layer MLP runs
on every cell.  Pooled views over frames (f_s) and joints (f_t) are
always recomputed from F, never stored.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import fileio
from .autodiff import MLP, Tensor
from .errors import ConfigurationError, DimensionError, DomainError, FormatError


class SkeletonSequence:
    """A labelled motion clip: coords has shape (3, frames, joints, persons)."""

    __slots__ = ("coords", "label")

    def __init__(self, coords, label: int):
        coords = np.asarray(coords, dtype=np.float32)
        if coords.ndim != 4 or coords.shape[0] != 3:
            raise DimensionError(
                f"skeleton coords must have shape (3, frames, joints, persons), got {coords.shape}")
        if min(coords.shape[1:]) < 1:
            raise DimensionError(f"frames, joints and persons must all be >= 1, got {coords.shape}")
        if not np.all(np.isfinite(coords)):
            raise DomainError("skeleton coords contain non-finite values")
        label = int(label)
        if label < 0:
            raise DomainError(f"class label must be >= 0, got {label}")
        self.coords = coords
        self.label = label

    @property
    def frames(self):
        return self.coords.shape[1]

    @property
    def joints(self):
        return self.coords.shape[2]

    @property
    def persons(self):
        return self.coords.shape[3]


def resample(x: SkeletonSequence, target_frames: int) -> SkeletonSequence:
    """Uniform temporal resampling by linear interpolation of frame indices."""
    target_frames = int(target_frames)
    if target_frames < 1:
        raise DomainError(f"target_frames must be >= 1, got {target_frames}")
    t = x.frames
    if t == target_frames:
        return SkeletonSequence(x.coords.copy(), x.label)
    positions = np.linspace(0.0, t - 1, target_frames)
    lo = np.floor(positions).astype(np.intp)
    hi = np.minimum(lo + 1, t - 1)
    w = (positions - lo).astype(np.float64)
    src = x.coords.astype(np.float64)
    out = src[:, lo] * (1.0 - w)[None, :, None, None] + src[:, hi] * w[None, :, None, None]
    return SkeletonSequence(out.astype(np.float32), x.label)


class FeatureMap:
    """Encoder output grid; pooled views are derived properties."""

    __slots__ = ("f",)

    def __init__(self, f):
        f = np.asarray(f)
        if f.ndim != 3:
            raise DimensionError(f"feature map must be (t_hat, v_hat, channels), got {f.shape}")
        if not np.all(np.isfinite(f)):
            raise DomainError("feature map contains non-finite values")
        self.f = f

    @property
    def f_s(self):
        """Per-joint features: mean over the frame axis."""
        return self.f.mean(axis=0)

    @property
    def f_t(self):
        """Per-frame features: mean over the joint axis."""
        return self.f.mean(axis=1)

    @property
    def shape(self):
        return self.f.shape


@dataclass(frozen=True)
class EncoderConfig:
    frames: int = 60
    t_hat: int = 12
    joints: int = 8
    persons: int = 1
    channels: int = 64
    hidden: int = 64
    n_e: int = 3

    def __post_init__(self):
        for name in ("frames", "t_hat", "joints", "persons", "channels", "hidden", "n_e"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.frames % self.t_hat:
            raise ConfigurationError(
                f"frames={self.frames} is not divisible by t_hat={self.t_hat}")
        if self.t_hat % self.n_e:
            raise ConfigurationError(
                f"t_hat={self.t_hat} is not divisible by the phase count n_e={self.n_e}")

    @property
    def v_hat(self):
        return self.joints * self.persons


class SkeletonEncoder:
    """Trainable desk-scale encoder producing FeatureMaps."""

    def __init__(self, config: EncoderConfig, rng=None, dtype=ad.TRAIN_DTYPE):
        if rng is None:
            rng = np.random.default_rng(0)
        self.config = config
        self.dtype = np.dtype(dtype)
        c = config.channels
        self.lift_w = Tensor(ad._uniform_init(rng, (3, c), 3, self.dtype,
                                              gain=ad._MLP_GAIN), requires_grad=True)
        self.lift_b = Tensor(np.zeros(c, dtype=self.dtype), requires_grad=True)
        self.cell = MLP.create(rng, c, config.hidden, c, self.dtype)

    def parameters(self, prefix="encoder"):
        params = {f"{prefix}.lift_w": self.lift_w, f"{prefix}.lift_b": self.lift_b}
        params.update(self.cell.parameters(f"{prefix}.cell"))
        return params

    def forward(self, coords: Tensor):
        """coords: (batch, frames, v_hat, 3) -> (f, f_s, f_t) Tensors.

        f is (batch, t_hat, v_hat, channels); f_s pools over frames,
        f_t over joints.
        """
        cfg = self.config
        if coords.data.ndim != 4 or coords.data.shape[-1] != 3:
            raise DimensionError(
                f"encoder input must be (batch, frames, joints, 3), got {coords.shape}")
        if coords.data.shape[1] != cfg.frames:
            raise DimensionError(
                f"encoder configured for {cfg.frames} frames, got {coords.data.shape[1]}; "
                f"resample first")
        if coords.data.shape[2] != cfg.v_hat:
            raise DimensionError(
                f"encoder configured for {cfg.v_hat} folded joints, got {coords.data.shape[2]}")
        batch = coords.data.shape[0]
        stride = cfg.frames // cfg.t_hat
        x = ad.affine(coords, self.lift_w, self.lift_b)
        x = ad.reshape(x, (batch, cfg.t_hat, stride, cfg.v_hat, cfg.channels))
        x = ad.mean_pool(x, 2)
        f = self.cell(x)
        f_s = ad.mean_pool(f, 1)
        f_t = ad.mean_pool(f, 2)
        return f, f_s, f_t

    def prepare(self, x: SkeletonSequence) -> np.ndarray:
        """Fold persons into joints: (3, T, V, M) -> (T, V*M, 3)."""
        cfg = self.config
        if x.joints * x.persons != cfg.v_hat:
            raise DimensionError(
                f"sequence has {x.joints} joints x {x.persons} persons, "
                f"encoder expects {cfg.v_hat} folded joints")
        t = x.frames
        folded = x.coords.transpose(1, 2, 3, 0).reshape(t, x.joints * x.persons, 3)
        return np.ascontiguousarray(folded, dtype=self.dtype)

    def prepare_batch(self, sequences) -> np.ndarray:
        return np.stack([self.prepare(s) for s in sequences])

    def encode(self, x: SkeletonSequence) -> FeatureMap:
        if x.frames != self.config.frames:
            raise DimensionError(
                f"sequence has {x.frames} frames, encoder expects {self.config.frames}; "
                f"resample first")
        batch = Tensor(self.prepare(x)[None], dtype=self.dtype)
        f, _, _ = self.forward(batch)
        return FeatureMap(f.data[0])


def save_features(path, maps, labels):
    maps = list(maps)
    labels = [int(v) for v in labels]
    if len(maps) != len(labels):
        raise DimensionError(f"{len(maps)} feature maps but {len(labels)} labels")
    if not maps:
        raise DomainError("refusing to write an empty feature file")
    shape = maps[0].shape
    for i, m in enumerate(maps):
        if m.shape != shape:
            raise DimensionError(f"feature map {i} has shape {m.shape}, expected {shape}")
    manifest = {
        "kind": "features",
        "count": len(maps),
        "T_hat": shape[0],
        "V_hat": shape[1],
        "C": shape[2],
        "labels": labels,
    }
    payload = np.stack([m.f for m in maps])
    fileio.write_blob(path, manifest, payload)


def load_features(path, n_e=3):
    """Validated stream of (FeatureMap, label) pairs."""
    manifest, values = fileio.read_blob(path)
    fileio.require_keys(manifest, ("count", "T_hat", "V_hat", "C", "labels"), path)
    if manifest.get("kind", "features") != "features":
        raise FormatError(f"{fileio.manifest_path(path)}: not a feature file "
                          f"(kind={manifest.get('kind')!r})")
    count = int(manifest["count"])
    t_hat, v_hat, c = int(manifest["T_hat"]), int(manifest["V_hat"]), int(manifest["C"])
    labels = manifest["labels"]
    if len(labels) != count:
        raise FormatError(
            f"{fileio.manifest_path(path)}: {len(labels)} labels for count={count}")
    if t_hat % n_e:
        raise FormatError(
            f"{fileio.manifest_path(path)}: T_hat={t_hat} is not divisible by "
            f"the phase count n_e={n_e}")
    fileio.require_count(values, count * t_hat * v_hat * c, path, "feature payload")
    grid = values.reshape(count, t_hat, v_hat, c)
    return ((FeatureMap(grid[i]), int(labels[i])) for i in range(count))


def save_dataset(path, sequences):
    sequences = list(sequences)
    if not sequences:
        raise DomainError("refusing to write an empty dataset file")
    shape = sequences[0].coords.shape
    for i, s in enumerate(sequences):
        if s.coords.shape != shape:
            raise DimensionError(f"sequence {i} has shape {s.coords.shape}, expected {shape}")
    manifest = {
        "kind": "skeletons",
        "count": len(sequences),
        "T": shape[1],
        "V": shape[2],
        "M": shape[3],
        "labels": [s.label for s in sequences],
    }
    payload = np.stack([s.coords for s in sequences])
    fileio.write_blob(path, manifest, payload)


def load_dataset(path):
    manifest, values = fileio.read_blob(path)
    fileio.require_keys(manifest, ("count", "T", "V", "M", "labels"), path)
    if manifest.get("kind", "skeletons") != "skeletons":
        raise FormatError(f"{fileio.manifest_path(path)}: not a skeleton dataset "
                          f"(kind={manifest.get('kind')!r})")
    count = int(manifest["count"])
    t, v, m = int(manifest["T"]), int(manifest["V"]), int(manifest["M"])
    labels = manifest["labels"]
    if len(labels) != count:
        raise FormatError(
            f"{fileio.manifest_path(path)}: {len(labels)} labels for count={count}")
    fileio.require_count(values, count * 3 * t * v * m, path, "skeleton payload")
    coords = values.reshape(count, 3, t, v, m)
    return [SkeletonSequence(coords[i], int(labels[i])) for i in range(count)]
