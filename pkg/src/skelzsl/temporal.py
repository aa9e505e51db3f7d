"""Temporal stream: gated growth of a (channels x n_t) micro-prototype.

The frame axis is split into equal contiguous segments, one per phase.
Each phase aggregates its segment's frames into a candidate prototype
by frame-axis attention, then blends it with the previous prototype
through remember/recall gates so earlier phases are retained instead of
overwritten.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import MLP, Tensor
from .errors import ConfigurationError, DimensionError

from .spatial import init_prototype  # shared initialization scheme


@dataclass
class GateSet:
    """Per-phase gate and refinement projections, each along channels."""

    recall_proj: MLP
    remember_proj: MLP
    refine: MLP | None

    @classmethod
    def create(cls, rng, channels, hidden, dtype=ad.TRAIN_DTYPE):
        return cls(
            recall_proj=MLP.create(rng, channels, hidden, channels, dtype),
            remember_proj=MLP.create(rng, channels, hidden, channels, dtype),
            refine=MLP.create(rng, channels, hidden, channels, dtype),
        )

    def parameters(self, prefix):
        params = {}
        params.update(self.recall_proj.parameters(f"{prefix}.recall"))
        params.update(self.remember_proj.parameters(f"{prefix}.remember"))
        if self.refine is not None:
            params.update(self.refine.parameters(f"{prefix}.refine"))
        return params


def segment_temporal(f_t: Tensor, n_e: int) -> list:
    """Split the frame axis (second from last) into n_e contiguous parts."""
    if n_e < 1:
        raise ConfigurationError(f"phase count must be >= 1, got {n_e}")
    if f_t.data.ndim < 2:
        raise DimensionError(f"expected (..., frames, channels), got {f_t.shape}")
    axis = f_t.data.ndim - 2
    frames = f_t.data.shape[axis]
    if frames % n_e:
        raise ConfigurationError(
            f"{frames} frames cannot split into {n_e} equal segments")
    seg = frames // n_e
    return [ad.slice_axis(f_t, axis, i * seg, (i + 1) * seg) for i in range(n_e)]


def temporal_aggregate(f_seg: Tensor, p_t: Tensor) -> Tensor:
    """Candidate prototype from one segment.

    Attention weights are normalized over the frame axis per attribute,
    so each attribute is a convex combination of the segment's frames.
    No score masking here.
    """
    h = ad.softmax(ad.matmul(f_seg, p_t), axis=-2)
    return ad.matmul(ad.swap_last(f_seg), h)


def memory_update(p_hat: Tensor, p_prev: Tensor, gates: GateSet) -> Tensor:
    """sigmoid(recall) * previous + sigmoid(remember) * refined candidate."""
    recall = ad.sigmoid(gates.recall_proj.over_columns(p_hat))
    remember = ad.sigmoid(gates.remember_proj.over_columns(p_hat))
    refined = p_hat if gates.refine is None else gates.refine.over_columns(p_hat)
    return ad.add(ad.multiply(recall, p_prev), ad.multiply(remember, refined))


def run_temporal(f_t: Tensor, p0: Tensor, gate_sets) -> list:
    """Phase e aggregates segment e and folds it into the running prototype;
    returns every intermediate prototype."""
    gate_sets = list(gate_sets)
    segments = segment_temporal(f_t, len(gate_sets))
    outputs = []
    p = p0
    for seg, gates in zip(segments, gate_sets):
        p_hat = temporal_aggregate(seg, p)
        p = memory_update(p_hat, p, gates)
        outputs.append(p)
    return outputs


def _cosine(a: np.ndarray, b: np.ndarray) -> float:
    a = a.ravel()
    b = b.ravel()
    denom = np.linalg.norm(a) * np.linalg.norm(b)
    if denom == 0.0:
        return 0.0
    return float(a @ b / denom)


def retention_probe(seed, channels=48, n_t=8, frames_per_phase=6, n_e=3):
    """Measure how much of the phase-1 state survives to the final phase.

    A marker segment drives phase 1; the remaining phases see unrelated
    segments.  Returns (gated, ungated) cosine similarities between the
    final prototype and that run's own phase-1 prototype, where the
    ungated variant replaces the memory step with plain refinement.
    """
    rng = np.random.default_rng([int(seed), 0x9E7A1])
    dtype = ad.VERIFY_DTYPE
    gate_sets = [GateSet.create(rng, channels, channels, dtype) for _ in range(n_e)]
    p0 = init_prototype(rng, channels, n_t, dtype)
    segments = [Tensor(rng.standard_normal((frames_per_phase, channels)))
                for _ in range(n_e)]

    gated = []
    p = p0
    for seg, gates in zip(segments, gate_sets):
        p = memory_update(temporal_aggregate(seg, p), p, gates)
        gated.append(p.data)

    ungated = []
    q = p0
    for seg, gates in zip(segments, gate_sets):
        q = gates.refine.over_columns(temporal_aggregate(seg, q))
        ungated.append(q.data)

    return _cosine(gated[-1], gated[0]), _cosine(ungated[-1], ungated[0])
