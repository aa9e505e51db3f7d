"""Spatial stream: grow a (channels x n_s) micro-prototype over phases.

Each phase scores joints against the current prototype, keeps only the
strongest fraction of attribute scores per joint, and compresses the
joint features through the retained scores into the next prototype.
The retained fraction grows phase by phase, so early phases see only
the most discriminative body parts and later phases fill in detail.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigurationError, DomainError

TOPK_DUST = 1e-12


@dataclass(frozen=True)
class PhaseSchedule:
    """Retention fractions, one per phase, nondecreasing in [0, 1]."""

    alphas: tuple

    def __post_init__(self):
        object.__setattr__(self, "alphas", tuple(float(a) for a in self.alphas))
        if not self.alphas:
            raise ConfigurationError("a phase schedule needs at least one fraction")
        for a in self.alphas:
            if not 0.0 <= a <= 1.0:
                raise DomainError(f"retention fraction {a} outside [0, 1]")
        for earlier, later in zip(self.alphas, self.alphas[1:]):
            if later < earlier:
                raise ConfigurationError(
                    f"retention fractions must be nondecreasing, got {self.alphas}")

    def __len__(self):
        return len(self.alphas)


def init_prototype(rng, channels, n_attributes, dtype=ad.TRAIN_DTYPE) -> Tensor:
    if n_attributes < 1 or channels < 1:
        raise DomainError(f"prototype dims must be >= 1, got ({channels}, {n_attributes})")
    return ad.uniform_param(rng, (channels, n_attributes), channels, dtype)


def spatial_similarity(f_s: Tensor, p_s: Tensor) -> Tensor:
    """Row-stochastic scores: softmax over attributes for each joint."""
    return ad.softmax(ad.matmul(f_s, p_s), axis=-1)


def retained_count(alpha: float, n: int) -> int:
    """k = max(1, ceil(alpha * n)), clamped to n.

    The dust subtraction keeps float noise in alpha * n from bumping an
    exact product to the next integer (0.3 * 80 must give 24, not 25).
    """
    if not 0.0 <= alpha <= 1.0:
        raise DomainError(f"retention fraction {alpha} outside [0, 1]")
    if n < 1:
        raise DomainError(f"attribute count must be >= 1, got {n}")
    return min(n, max(1, math.ceil(alpha * n - TOPK_DUST)))


def topk_mask(h: Tensor, alpha: float) -> Tensor:
    """Zero all but the k strongest scores per row; retained scores are
    passed through unchanged and the support is constant under backprop.
    Ties keep the lower attribute index."""
    n = h.data.shape[-1]
    k = retained_count(alpha, n)
    if k == n:
        return h
    order = np.argsort(-h.data, axis=-1, kind="stable")
    mask = np.zeros_like(h.data)
    np.put_along_axis(mask, order[..., :k], 1.0, axis=-1)
    return ad.multiply(h, Tensor(mask))


def compress_update(f_s: Tensor, h_hat: Tensor, refine=None) -> Tensor:
    """Next prototype: refine(f_s^T @ h_hat); refine=None means identity."""
    p_raw = ad.matmul(ad.swap_last(f_s), h_hat)
    if refine is None:
        return p_raw
    return refine.over_columns(p_raw)


def run_spatial(f_s: Tensor, p0: Tensor, schedule: PhaseSchedule, refiners) -> list:
    """Evolve the prototype once per phase; returns every intermediate."""
    refiners = list(refiners)
    if len(refiners) != len(schedule):
        raise ConfigurationError(
            f"schedule has {len(schedule)} phases but {len(refiners)} refiners were given")
    outputs = []
    p = p0
    for alpha, refine in zip(schedule.alphas, refiners):
        h = spatial_similarity(f_s, p)
        p = compress_update(f_s, topk_mask(h, alpha), refine)
        outputs.append(p)
    return outputs
