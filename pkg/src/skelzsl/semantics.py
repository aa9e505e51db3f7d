"""Per-class, per-phase semantic description banks.

A bank holds, for every class and every phase, two small matrices of
description embeddings: one for the spatial stream (body-part focus at
coarse/mid/fine granularity) and one for the temporal stream
(start/mid/end of the motion).  Banks are immutable after load and are
the only channel through which class knowledge enters the model.
"""

from __future__ import annotations

import warnings

import numpy as np

from . import fileio
from .errors import CompletenessError, DimensionError, DomainError, FormatError

STREAMS = ("s", "t")
DEFAULT_PHASE_LABELS = {
    "s": ["coarse", "mid", "fine"],
    "t": ["start", "mid", "end"],
}


class SemanticBank:
    """Immutable map (class, stream, phase) -> (n_a, d) embedding block."""

    __slots__ = ("classes", "n_e", "n_a", "d", "cells", "phase_labels")

    def __init__(self, classes, n_e, n_a, d, cells, phase_labels=None):
        self.classes = [int(y) for y in classes]
        if len(set(self.classes)) != len(self.classes):
            raise DomainError(f"duplicate class ids in bank: {self.classes}")
        self.n_e = int(n_e)
        self.n_a = int(n_a)
        self.d = int(d)
        if min(self.n_e, self.n_a, self.d) < 1:
            raise DomainError(
                f"n_e, n_a and d must all be >= 1, got {self.n_e}, {self.n_a}, {self.d}")
        self.cells = {}
        for key, block in cells.items():
            y, stream, e = key
            block = np.asarray(block, dtype=np.float32)
            self.cells[(int(y), str(stream), int(e))] = block
        self.phase_labels = phase_labels or dict(DEFAULT_PHASE_LABELS)
        self._validate()

    def _validate(self):
        for y in self.classes:
            for stream in STREAMS:
                for e in range(self.n_e):
                    block = self.cells.get((y, stream, e))
                    if block is None:
                        raise CompletenessError(
                            f"bank is missing the cell (class {y}, stream {stream}, phase {e})")
                    if block.shape != (self.n_a, self.d):
                        raise DimensionError(
                            f"cell (class {y}, stream {stream}, phase {e}) has shape "
                            f"{block.shape}, expected ({self.n_a}, {self.d})")
                    if not np.all(np.isfinite(block)):
                        raise DomainError(
                            f"cell (class {y}, stream {stream}, phase {e}) has "
                            f"non-finite values")
        extra = set(self.cells) - {(y, s, e) for y in self.classes
                                   for s in STREAMS for e in range(self.n_e)}
        if extra:
            raise FormatError(f"bank holds cells outside its declared grid: {sorted(extra)}")

    def cell(self, y, stream, e):
        key = (int(y), str(stream), int(e))
        if key not in self.cells:
            raise KeyError(f"no bank cell (class {y}, stream {stream}, phase {e})")
        return self.cells[key]

    def subset(self, classes):
        classes = [int(y) for y in classes]
        cells = {(y, s, e): self.cells[(y, s, e)]
                 for y in classes for s in STREAMS for e in range(self.n_e)}
        return SemanticBank(classes, self.n_e, self.n_a, self.d, cells, self.phase_labels)


def pool_class(bank: SemanticBank, y, phase, stream) -> np.ndarray:
    """Mean over the description axis for one (class, phase, stream) cell."""
    if stream not in STREAMS:
        raise DomainError(f"stream must be one of {STREAMS}, got {stream!r}")
    if not 0 <= int(phase) < bank.n_e:
        raise DomainError(f"phase {phase} out of range for a {bank.n_e}-phase bank")
    return bank.cell(y, stream, phase).mean(axis=0)


def save_bank(path, bank: SemanticBank):
    manifest = {
        "kind": "semantic-bank",
        "classes": bank.classes,
        "N_e": bank.n_e,
        "N_a": bank.n_a,
        "d": bank.d,
        "phase_labels": bank.phase_labels,
    }
    blocks = [bank.cell(y, stream, e)
              for y in bank.classes for stream in STREAMS for e in range(bank.n_e)]
    fileio.write_blob(path, manifest, np.concatenate([b.ravel() for b in blocks]))


def load_bank(path) -> SemanticBank:
    manifest, values = fileio.read_blob(path)
    fileio.require_keys(manifest, ("classes", "N_e", "N_a", "d"), path)
    if manifest.get("kind", "semantic-bank") != "semantic-bank":
        raise FormatError(f"{fileio.manifest_path(path)}: not a semantic bank "
                          f"(kind={manifest.get('kind')!r})")
    classes = [int(y) for y in manifest["classes"]]
    n_e, n_a, d = int(manifest["N_e"]), int(manifest["N_a"]), int(manifest["d"])
    cell_size = n_a * d
    expected = len(classes) * 2 * n_e * cell_size
    if values.size < expected:
        # name the first cell the payload fails to cover
        idx = values.size // cell_size
        grid = [(y, s, e) for y in classes for s in STREAMS for e in range(n_e)]
        y, stream, e = grid[min(idx, len(grid) - 1)]
        raise CompletenessError(
            f"{fileio.payload_path(path)}: payload ends inside or before the cell "
            f"(class {y}, stream {stream}, phase {e}); got {values.size} float32 values, "
            f"expected {expected} (first missing byte at offset {values.size * 4})")
    fileio.require_count(values, expected, path, "bank payload")
    cells = {}
    cursor = 0
    for y in classes:
        for stream in STREAMS:
            for e in range(n_e):
                cells[(y, stream, e)] = values[cursor:cursor + cell_size].reshape(n_a, d)
                cursor += cell_size
    if n_e != 3:
        warnings.warn(f"semantic bank declares {n_e} phases (3 is the usual setting); "
                      f"the pipeline will follow the bank", stacklevel=2)
    return SemanticBank(classes, n_e, n_a, d, cells,
                        manifest.get("phase_labels") or None)


def class_base_directions(num_classes, d, seed) -> np.ndarray:
    """Seeded near-orthogonal unit directions, one row per class."""
    rng = np.random.default_rng([int(seed), 0x5EED])
    raw = rng.standard_normal((d, num_classes))
    q, _ = np.linalg.qr(raw)
    k = min(num_classes, d)
    bases = np.zeros((num_classes, d))
    bases[:k] = q[:, :k].T
    for i in range(k, num_classes):
        v = rng.standard_normal(d)
        bases[i] = v / np.linalg.norm(v)
    return bases


def synth_bank(num_classes, n_a, d, seed, n_e=3, noise_std=0.02) -> SemanticBank:
    """Deterministic synthetic bank: orthogonal class bases plus per-phase
    perturbations whose magnitude shrinks as the phase index grows."""
    num_classes, n_a, d = int(num_classes), int(n_a), int(d)
    if min(num_classes, n_a, d) < 1:
        raise DomainError("num_classes, n_a and d must all be >= 1")
    bases = class_base_directions(num_classes, d, seed)
    rng = np.random.default_rng([int(seed), 0xBA5E])
    cells = {}
    for ci in range(num_classes):
        for stream in STREAMS:
            for e in range(n_e):
                direction = rng.standard_normal(d)
                direction /= np.linalg.norm(direction)
                magnitude = 0.5 / (e + 1)
                center = bases[ci] + magnitude * direction
                noise = noise_std * rng.standard_normal((n_a, d))
                cells[(ci, stream, e)] = (center[None, :] + noise).astype(np.float32)
    return SemanticBank(list(range(num_classes)), n_e, n_a, d, cells)
