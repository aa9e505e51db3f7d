"""Calibrated-stacking prediction and the Acc/S/U/H metric suite.

Each stream scores every candidate class; under the generalized
protocol a per-stream constant is subtracted from seen-class scores to
counter seen-class bias.  The prediction is the (possibly singleton)
set of both stream argmaxes, and top-1 accuracy counts set membership.
A strict variant fuses the two calibrated score vectors and yields a
single label.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import (CompletenessError, DimensionError, DomainError, FormatError,
                     ProtocolError)
from .model import Checkpoint, DualStreamModel

MODES = ("zsl", "gzsl")


@dataclass(frozen=True)
class SplitProtocol:
    seen: tuple
    unseen: tuple
    mode: str = "gzsl"

    def __post_init__(self):
        object.__setattr__(self, "seen", tuple(sorted(int(y) for y in self.seen)))
        object.__setattr__(self, "unseen", tuple(sorted(int(y) for y in self.unseen)))
        object.__setattr__(self, "mode", str(self.mode).lower())
        if self.mode not in MODES:
            raise DomainError(f"mode must be one of {MODES}, got {self.mode!r}")
        overlap = set(self.seen) & set(self.unseen)
        if overlap:
            raise ProtocolError(f"seen and unseen classes overlap: {sorted(overlap)}")
        if len(set(self.seen)) != len(self.seen) or len(set(self.unseen)) != len(self.unseen):
            raise ProtocolError("duplicate class ids in the split")

    @property
    def classes(self):
        return tuple(sorted(self.seen + self.unseen))

    @property
    def candidates(self):
        return self.unseen if self.mode == "zsl" else self.classes

    def to_dict(self):
        return {"seen": list(self.seen), "unseen": list(self.unseen), "mode": self.mode}


def save_protocol(path, protocol: SplitProtocol):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(protocol.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_protocol(path, mode=None) -> SplitProtocol:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as err:
        raise FormatError(f"{path}: protocol file is not valid JSON ({err})")
    for key in ("seen", "unseen"):
        if key not in doc:
            raise FormatError(f"{path}: protocol file missing key {key!r}")
    return SplitProtocol(doc["seen"], doc["unseen"], mode or doc.get("mode", "gzsl"))


@dataclass(frozen=True)
class CalibrationConfig:
    gamma_s: float = 0.0003
    gamma_t: float = 0.0002

    def __post_init__(self):
        if not (np.isfinite(self.gamma_s) and np.isfinite(self.gamma_t)):
            raise DomainError("calibration factors must be finite")

    def to_dict(self):
        return {"gamma_s": self.gamma_s, "gamma_t": self.gamma_t}


def _project(head, psi, x_rows: np.ndarray, z_rows: np.ndarray):
    """Score matrix - rows of x against rows of z - via the heads."""
    dtype = x_rows.dtype
    emb = Tensor(x_rows) if head is None else head(Tensor(x_rows, dtype=dtype))
    z = Tensor(z_rows, dtype=dtype) if psi is None else psi(Tensor(z_rows, dtype=dtype))
    return ad.matmul(emb, ad.swap_last(z)).data


def class_scores(x, head, psi, bank, stream, candidates, phase=None) -> dict:
    """Final-phase (by default) alignment score for each candidate class."""
    from .alignment import pooled_rows

    candidates = [int(y) for y in candidates]
    if not candidates:
        raise DomainError("empty candidate set")
    if phase is None:
        phase = bank.n_e - 1
    x = np.asarray(x.data if isinstance(x, Tensor) else x)
    if x.ndim != 1:
        raise DimensionError(f"class_scores expects a single feature vector, got {x.shape}")
    z_rows = pooled_rows(bank, candidates, stream, phase, x.dtype)
    scores = _project(head, psi, x[None, :], z_rows)[0]
    return {y: float(s) for y, s in zip(candidates, scores)}


def _argmax_lowest_id(scores: dict, candidates) -> int:
    best_y, best_v = None, None
    for y in sorted(candidates):
        v = scores[y]
        if best_v is None or v > best_v:
            best_y, best_v = y, v
    return best_y


def _calibrated(scores: dict, protocol: SplitProtocol, gamma: float) -> dict:
    if protocol.mode != "gzsl" or gamma == 0.0:
        return dict(scores)
    seen = set(protocol.seen)
    return {y: (v - gamma if y in seen else v) for y, v in scores.items()}


def calibrated_predict(scores_s: dict, scores_t: dict, protocol: SplitProtocol,
                       calib: CalibrationConfig) -> set:
    """Two-stream prediction set {argmax_s, argmax_t} after seen-score
    calibration; ties break toward the lower class id."""
    candidates = protocol.candidates
    if not candidates:
        raise DomainError("empty candidate set")
    for name, scores in (("spatial", scores_s), ("temporal", scores_t)):
        missing = [y for y in candidates if y not in scores]
        if missing:
            raise CompletenessError(f"{name} scores missing candidates {missing}")
    y_s = _argmax_lowest_id(_calibrated(scores_s, protocol, calib.gamma_s), candidates)
    y_t = _argmax_lowest_id(_calibrated(scores_t, protocol, calib.gamma_t), candidates)
    return {y_s, y_t}


def top1_accuracy(predictions, labels) -> float:
    predictions = list(predictions)
    labels = list(labels)
    if len(predictions) != len(labels):
        raise DimensionError(
            f"{len(predictions)} predictions for {len(labels)} labels")
    if not labels:
        raise DomainError("cannot score an empty evaluation set")
    hits = sum(1 for p, y in zip(predictions, labels) if int(y) in p)
    return hits / len(labels)


def harmonic_mean(s, u) -> float:
    s, u = float(s), float(u)
    if not (np.isfinite(s) and np.isfinite(u)) or s < 0 or u < 0:
        raise DomainError(f"accuracies must be finite and >= 0, got {s}, {u}")
    if s + u == 0.0:
        return 0.0
    return 2.0 * s * u / (s + u)


def _score_matrices(model: DualStreamModel, coords: np.ndarray, candidates,
                    bank, batch_size=64):
    """Final-phase score matrices (n, k) for both streams."""
    from .alignment import pooled_rows

    final = bank.n_e - 1
    dtype = model.dtype
    z_s = pooled_rows(bank, candidates, "s", final, dtype)
    z_t = pooled_rows(bank, candidates, "t", final, dtype)
    chunks_s, chunks_t = [], []
    for start in range(0, coords.shape[0], batch_size):
        batch = Tensor(coords[start:start + batch_size], dtype=dtype)
        xs, xt = model.phase_features(batch)
        chunks_s.append(_project(model.heads.spatial[final], model.heads.psi,
                                 xs[final].data, z_s))
        chunks_t.append(_project(model.heads.temporal[final], model.heads.psi,
                                 xt[final].data, z_t))
    return np.concatenate(chunks_s), np.concatenate(chunks_t)


def evaluate(checkpoint, dataset, bank, protocol: SplitProtocol,
             calib: CalibrationConfig | None = None, strict=False,
             batch_size=64) -> dict:
    """Score a dataset under the split protocol.

    ZSL mode reports Acc over unseen-labelled samples; GZSL reports
    seen/unseen accuracy and their harmonic mean, plus per-stream counts
    of seen-class predictions (used for calibration diagnostics).
    """
    if calib is None:
        calib = CalibrationConfig()
    model = checkpoint.to_model() if isinstance(checkpoint, Checkpoint) else checkpoint
    if model.config.n_e != bank.n_e:
        raise ProtocolError(
            f"model runs {model.config.n_e} phases but the bank declares {bank.n_e}")
    dataset = list(dataset)
    labels = np.array([s.label for s in dataset])
    outside = sorted(set(labels.tolist()) - set(protocol.classes))
    if outside:
        raise ProtocolError(f"labels {outside} are outside the protocol classes")
    if protocol.mode == "zsl":
        keep = [i for i, y in enumerate(labels) if y in set(protocol.unseen)]
        if not keep:
            raise DomainError("no unseen-labelled samples to score in zsl mode")
        dataset = [dataset[i] for i in keep]
        labels = labels[keep]
    candidates = list(protocol.candidates)
    coords = model.encoder.prepare_batch(dataset)
    mat_s, mat_t = _score_matrices(model, coords, candidates, bank, batch_size)

    report = {
        "mode": protocol.mode,
        "n_samples": len(dataset),
        "protocol": protocol.to_dict(),
        "calib": calib.to_dict(),
        "strict": bool(strict),
    }
    seen_set = set(protocol.seen)
    predictions = []
    seen_hits = {"s": 0, "t": 0}
    for i in range(len(dataset)):
        scores_s = {y: float(v) for y, v in zip(candidates, mat_s[i])}
        scores_t = {y: float(v) for y, v in zip(candidates, mat_t[i])}
        if strict:
            fused = {y: _calibrated(scores_s, protocol, calib.gamma_s)[y]
                     + _calibrated(scores_t, protocol, calib.gamma_t)[y]
                     for y in candidates}
            predictions.append({_argmax_lowest_id(fused, candidates)})
        else:
            predictions.append(calibrated_predict(scores_s, scores_t, protocol, calib))
        if protocol.mode == "gzsl":
            y_s = _argmax_lowest_id(_calibrated(scores_s, protocol, calib.gamma_s),
                                    candidates)
            y_t = _argmax_lowest_id(_calibrated(scores_t, protocol, calib.gamma_t),
                                    candidates)
            seen_hits["s"] += y_s in seen_set
            seen_hits["t"] += y_t in seen_set

    if protocol.mode == "zsl":
        report["acc"] = top1_accuracy(predictions, labels)
        return report

    seen_idx = [i for i, y in enumerate(labels) if y in seen_set]
    unseen_idx = [i for i, y in enumerate(labels) if y not in seen_set]
    s_acc = (top1_accuracy([predictions[i] for i in seen_idx],
                           labels[seen_idx]) if seen_idx else 0.0)
    u_acc = (top1_accuracy([predictions[i] for i in unseen_idx],
                           labels[unseen_idx]) if unseen_idx else 0.0)
    report.update({
        "seen": s_acc,
        "unseen": u_acc,
        "harmonic": harmonic_mean(s_acc, u_acc),
        "n_seen_samples": len(seen_idx),
        "n_unseen_samples": len(unseen_idx),
        "stream_seen_counts": dict(seen_hits),
    })
    return report


def format_report(report: dict) -> str:
    lines = [f"mode      {report['mode']}",
             f"samples   {report['n_samples']}"]
    if report["mode"] == "zsl":
        lines.append(f"acc       {report['acc']:.4f}")
    else:
        lines.append(f"seen      {report['seen']:.4f}  ({report['n_seen_samples']} samples)")
        lines.append(f"unseen    {report['unseen']:.4f}  ({report['n_unseen_samples']} samples)")
        lines.append(f"harmonic  {report['harmonic']:.4f}")
    calib = report.get("calib", {})
    lines.append(f"gamma     s={calib.get('gamma_s')}  t={calib.get('gamma_t')}")
    return "\n".join(lines)
