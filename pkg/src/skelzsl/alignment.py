"""Cross-modal alignment losses and the training loop.

Each phase of each stream contributes a softmax cross-entropy term over
the seen classes: the pooled skeleton feature, projected into the
semantic space, should score its own class's pooled description highest.
The total objective sums all phase terms and averages over the batch.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import semantics
from .autodiff import Tensor
from .errors import ConfigurationError, DomainError, ProtocolError
from .model import Checkpoint, DualStreamModel, ModelConfig, ProjectionHeads

__all__ = ["ProjectionHeads", "TrainConfig", "pool_prototype", "phase_loss",
           "total_loss", "train", "lr_at_epoch", "pooled_rows"]


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.1
    lr_decay: float = 0.1
    lr_milestones: tuple = (10, 20)
    weight_decay: float = 0.0005
    batch_size: int = 64
    epochs: int = 30
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "lr_milestones",
                           tuple(int(m) for m in self.lr_milestones))
        # lr = 0 is allowed: it must leave parameters bit-identical
        if self.lr < 0 or self.weight_decay < 0 or self.lr_decay < 0:
            raise ConfigurationError("lr, lr_decay and weight_decay must be >= 0")
        if self.batch_size < 1 or self.epochs < 1:
            raise ConfigurationError("batch_size and epochs must be >= 1")


def lr_at_epoch(config: TrainConfig, epoch: int) -> float:
    hits = sum(1 for m in config.lr_milestones if m <= epoch)
    return config.lr * config.lr_decay ** hits


def pool_prototype(p: Tensor) -> Tensor:
    """Mean over the attribute axis: (..., C, N) -> (..., C)."""
    return ad.mean_pool(p, p.data.ndim - 1)


def pooled_rows(bank, classes, stream, phase, dtype) -> np.ndarray:
    """Stacked pooled description vectors, one row per class, fixed order."""
    rows = [semantics.pool_class(bank, y, phase, stream) for y in classes]
    return np.stack(rows).astype(dtype)


def _as_matrix(x: Tensor) -> Tensor:
    if x.data.ndim == 1:
        return ad.reshape(x, (1, x.data.shape[0]))
    if x.data.ndim == 2:
        return x
    raise DomainError(f"expected a feature vector or batch, got shape {x.shape}")


def _phase_logits(x: Tensor, head, psi, z_rows: np.ndarray, dtype) -> Tensor:
    emb = _as_matrix(x) if head is None else _as_matrix(head(x))
    z = Tensor(z_rows, dtype=dtype)
    if psi is not None:
        z = psi(z)
    return ad.matmul(emb, ad.swap_last(z))


def _cross_entropy_vec(logits: Tensor, label_idx: np.ndarray, dtype) -> Tensor:
    """Per-sample softmax cross entropy: logsumexp(logits) - picked logit."""
    n, k = logits.data.shape
    onehot = np.zeros((n, k), dtype=dtype)
    onehot[np.arange(n), label_idx] = 1.0
    picked = ad.reduce_sum(ad.multiply(logits, Tensor(onehot)), axis=1)
    return ad.add(ad.logsumexp(logits, axis=1), ad.negate(picked))


def phase_loss(x: Tensor, head, psi, bank, y, phase, stream, seen_classes) -> Tensor:
    """Alignment loss of one sample's phase feature against its class."""
    seen = sorted(int(c) for c in seen_classes)
    y = int(y)
    if y not in seen:
        raise ProtocolError(f"class {y} is not in the seen set {seen}")
    dtype = x.data.dtype
    z_rows = pooled_rows(bank, seen, stream, phase, dtype)
    logits = _phase_logits(x, head, psi, z_rows, dtype)
    vec = _cross_entropy_vec(logits, np.array([seen.index(y)]), dtype)
    return ad.reshape(vec, ())


def total_loss(spatial_xs, temporal_xs, heads: ProjectionHeads, bank, labels,
               seen_classes) -> Tensor:
    """Sum of all phase losses over both streams, averaged over the batch.

    Either stream's feature list may be None to score the other alone.
    """
    seen = sorted(int(c) for c in seen_classes)
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    bad = [int(v) for v in labels if int(v) not in seen]
    if bad:
        raise ProtocolError(f"labels {sorted(set(bad))} are not in the seen set {seen}")
    index = {y: i for i, y in enumerate(seen)}
    label_idx = np.array([index[int(v)] for v in labels])
    if spatial_xs is None and temporal_xs is None:
        raise DomainError("total_loss needs at least one stream's features")

    vec = None
    for stream, xs, stream_heads in (("s", spatial_xs, heads.spatial),
                                     ("t", temporal_xs, heads.temporal)):
        if xs is None:
            continue
        if len(xs) != bank.n_e:
            raise ConfigurationError(
                f"stream {stream} produced {len(xs)} phases, bank declares {bank.n_e}")
        for phase, (x, head) in enumerate(zip(xs, stream_heads)):
            x = _as_matrix(x)
            dtype = x.data.dtype
            z_rows = pooled_rows(bank, seen, stream, phase, dtype)
            logits = _phase_logits(x, head, heads.psi, z_rows, dtype)
            term = _cross_entropy_vec(logits, label_idx, dtype)
            vec = term if vec is None else ad.add(vec, term)
    return ad.mean_pool(vec, 0)


def _batches(n, batch_size, rng):
    order = rng.permutation(n)
    return [order[i:i + batch_size] for i in range(0, n, batch_size)]


def train(dataset, bank, protocol, config: TrainConfig, model_config=None,
          dtype=ad.TRAIN_DTYPE) -> Checkpoint:
    """SGD over shuffled mini-batches with stepped lr decay and decoupled
    weight decay; deterministic given config.seed."""
    seen = sorted(protocol.seen)
    bad = sorted({s.label for s in dataset} - set(seen))
    if bad:
        raise ProtocolError(f"training labels {bad} are outside the seen set {seen}")
    if model_config is None:
        model_config = ModelConfig()
    if model_config.n_e != bank.n_e:
        raise ConfigurationError(
            f"model runs {model_config.n_e} phases but the bank declares {bank.n_e}")
    model = DualStreamModel(model_config, seed=config.seed, dtype=dtype)
    params = model.parameters()

    coords = model.encoder.prepare_batch(dataset)
    labels = np.array([s.label for s in dataset])

    current = {"coords": None, "labels": None}

    def loss_fn():
        xs, xt = model.phase_features(Tensor(current["coords"], dtype=dtype))
        return total_loss(xs, xt, model.heads, bank, current["labels"], seen)

    graph = ad.Graph(loss_fn, params)
    loss_log = []
    for epoch in range(config.epochs):
        lr = lr_at_epoch(config, epoch)
        shrink = 1.0 - lr * config.weight_decay
        rng = np.random.default_rng([config.seed, 0xEB0C, epoch])
        total, count = 0.0, 0
        for batch in _batches(len(dataset), config.batch_size, rng):
            current["coords"] = coords[batch]
            current["labels"] = labels[batch]
            loss = graph.loss()
            grads = ad.backward(graph, loss)
            if lr != 0.0:
                for name, p in params.items():
                    p.data = p.data * shrink - lr * grads[name]
            total += float(loss.data) * len(batch)
            count += len(batch)
        loss_log.append(total / count)
    meta = {
        "seed": config.seed,
        "epochs": config.epochs,
        "final_lr": lr_at_epoch(config, config.epochs - 1),
        "loss_log": loss_log,
        "seen_classes": seen,
    }
    return Checkpoint.from_model(model, meta)
