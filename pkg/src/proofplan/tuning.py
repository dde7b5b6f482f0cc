"""Contrastive training of the projection head.

The trainer nudges summed premise embeddings toward the embedding of the
deduction they license. Each item contributes a temperature-scaled
log-softmax loss whose negatives are the other deductions in the batch;
batches are built from whole annotated trees so in-batch negatives share
surface vocabulary with the positive and stay hard. Similarity inside the
loss is the raw dot product. The base encoder never moves; only the head
trains, by plain full-batch gradient descent, with early stopping on
ranking accuracy over a held-out dev split.

Gradients are hand-derived (see ProjectionHead.backward) and checked
against central differences in gradient_check.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .core import ProofInstance, Vector
from .encoders import Encoder, ProjectedEncoder
from .errors import DimensionMismatchError, EmptyBatchError, NoTripletsError
from .evaluation import Conditioning, mrr
from .heuristics import AdditiveHeuristic
from .projection import ProjectionHead, head_forward


@dataclass(frozen=True)
class Triplet:
    """Embeddings of one annotated deduction: two premises and their conclusion."""

    e_a: Vector
    e_b: Vector
    e_d: Vector
    tree_id: str

    def __post_init__(self) -> None:
        if not (self.e_a.dim == self.e_b.dim == self.e_d.dim):
            raise DimensionMismatchError(
                f"triplet dims differ: {self.e_a.dim}/{self.e_b.dim}/{self.e_d.dim}")


@dataclass
class TrainConfig:
    tau: float = 0.1
    learning_rate: float = 1e-3
    trees_per_batch: int = 100
    max_epochs: int = 20
    patience: int = 3
    seed: int = 0
    dev_conditioning: Conditioning = Conditioning.DEDUCTION

    def validate(self) -> None:
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.trees_per_batch < 1:
            raise ValueError("trees_per_batch must be at least 1")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be at least 1")
        if self.patience < 1:
            raise ValueError("patience must be at least 1")


# ---------------------------------------------------------------------------
# loss


def _stack(batch: Sequence[Triplet]):
    a = np.stack([t.e_a.values for t in batch])
    b = np.stack([t.e_b.values for t in batch])
    d = np.stack([t.e_d.values for t in batch])
    return a, b, d


def per_item_losses_from_logits(logits: np.ndarray) -> np.ndarray:
    """-log softmax along each row, taken at the diagonal entry.

    Exposed separately so the softmax path can be probed directly; shifting
    any row by a constant must not change that row's loss.
    """
    m = logits.max(axis=1, keepdims=True)
    lse = m[:, 0] + np.log(np.exp(logits - m).sum(axis=1))
    return lse - np.diagonal(logits)


def infonce_loss(batch: Sequence[Triplet], head: ProjectionHead,
                 tau: float = 0.1) -> tuple[float, np.ndarray]:
    """Mean contrastive loss over the batch, plus the per-item losses.

    Item i scores head(e_a)+head(e_b) against every head(e_d_j) in the
    batch by dot product over temperature; its loss is the log-softmax
    deficit of the matching deduction j=i. A singleton batch therefore
    scores exactly zero.
    """
    if not batch:
        raise EmptyBatchError("contrastive loss needs at least one triplet")
    a, b, d = _stack(batch)
    u = head.forward(a) + head.forward(b)
    t = head.forward(d)
    logits = (u @ t.T) / tau
    per_item = per_item_losses_from_logits(logits)
    return float(per_item.mean()), per_item


def loss_gradients(batch: Sequence[Triplet], head: ProjectionHead,
                   tau: float = 0.1) -> tuple[float, dict[str, np.ndarray]]:
    """Loss and its analytic gradient w.r.t. every head parameter.

    Reverse pass: log-softmax rows give (softmax - I)/N at the logits,
    which splits into gradients at the pair sums and at the targets; both
    then run backward through the shared head. The pair-sum gradient feeds
    the backward pass twice, once per premise.
    """
    if not batch:
        raise EmptyBatchError("contrastive loss needs at least one triplet")
    a, b, d = _stack(batch)
    ya, cache_a = head.forward_cached(a)
    yb, cache_b = head.forward_cached(b)
    yd, cache_d = head.forward_cached(d)
    u = ya + yb
    logits = (u @ yd.T) / tau
    per_item = per_item_losses_from_logits(logits)
    loss = float(per_item.mean())

    n = len(batch)
    m = logits.max(axis=1, keepdims=True)
    e = np.exp(logits - m)
    p = e / e.sum(axis=1, keepdims=True)
    g = (p - np.eye(n)) / n

    d_u = (g @ yd) / tau
    d_t = (g.T @ u) / tau
    grads = head.zero_grads()
    head.backward(cache_a, d_u, grads)
    head.backward(cache_b, d_u, grads)
    head.backward(cache_d, d_t, grads)
    return loss, grads


# ---------------------------------------------------------------------------
# gradient verification


@dataclass(frozen=True)
class GradReport:
    analytic: Mapping[str, np.ndarray]
    numeric: Mapping[str, np.ndarray]
    max_rel_err: float
    worst_param: str


def gradient_check(batch: Sequence[Triplet], head: ProjectionHead,
                   tau: float = 0.1, *, h: float = 1e-5) -> GradReport:
    """Compare analytic gradients against central differences, entry by entry.

    Relative error uses a unit-floored denominator so near-zero gradients
    are judged on absolute error instead of blowing up the ratio.
    """
    loss, analytic = loss_gradients(batch, head, tau)
    del loss
    numeric: dict[str, np.ndarray] = {}
    params = head.params()
    for name, arr in params.items():
        num = np.zeros_like(arr)
        flat = arr.reshape(-1)
        num_flat = num.reshape(-1)
        for idx in range(flat.size):
            saved = flat[idx]
            flat[idx] = saved + h
            up, _ = infonce_loss(batch, head, tau)
            flat[idx] = saved - h
            down, _ = infonce_loss(batch, head, tau)
            flat[idx] = saved
            num_flat[idx] = (up - down) / (2.0 * h)
        numeric[name] = num

    max_rel = 0.0
    worst = ""
    for name in params:
        diff = np.abs(analytic[name] - numeric[name])
        floor = np.maximum(1.0, np.abs(analytic[name]) + np.abs(numeric[name]))
        rel = float((diff / floor).max()) if diff.size else 0.0
        if rel >= max_rel:
            max_rel = rel
            worst = name
    return GradReport(analytic, numeric, max_rel, worst)


# ---------------------------------------------------------------------------
# training loop


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    loss: float
    dev_mrr: float | None


@dataclass(frozen=True)
class TrainResult:
    head: ProjectionHead
    history: tuple[EpochRecord, ...]
    best_epoch: int
    stopped_early: bool


def group_by_tree(triplets: Sequence[Triplet]) -> dict[str, list[Triplet]]:
    """Triplets bucketed by tree id, first-seen order preserved."""
    groups: dict[str, list[Triplet]] = {}
    for t in triplets:
        groups.setdefault(t.tree_id, []).append(t)
    return groups


def _batches(groups: dict[str, list[Triplet]], order: Sequence[str],
             trees_per_batch: int) -> list[list[Triplet]]:
    """Whole trees only; a tree's triplets never split across batches."""
    out = []
    for start in range(0, len(order), trees_per_batch):
        chunk = order[start:start + trees_per_batch]
        out.append([t for tree_id in chunk for t in groups[tree_id]])
    return out


def train(triplets: Sequence[Triplet], config: TrainConfig | None = None, *,
          dev_instances: Sequence[ProofInstance] | None = None,
          base_encoder: Encoder | None = None,
          head: ProjectionHead | None = None) -> TrainResult:
    """Fit the head; returns the parameters of the best dev epoch.

    Tree order is reshuffled each epoch under a seed derived from
    (config.seed, epoch), so runs are reproducible but batches vary across
    epochs. With a dev split (instances plus the frozen base encoder) the
    loop stops once ranking accuracy has not improved for ``patience``
    epochs; without one it runs all ``max_epochs`` and keeps the final
    parameters.
    """
    config = config or TrainConfig()
    config.validate()
    if not triplets:
        raise NoTripletsError("nothing to train on")
    if (dev_instances is None) != (base_encoder is None):
        raise ValueError("dev_instances and base_encoder come together or not at all")

    groups = group_by_tree(triplets)
    tree_ids = list(groups)
    if head is None:
        head = ProjectionHead.initialize(triplets[0].e_a.dim, seed=config.seed)

    def dev_score() -> float | None:
        if dev_instances is None:
            return None
        ranker = AdditiveHeuristic(ProjectedEncoder(base_encoder, head))
        return mrr(dev_instances, ranker, config.dev_conditioning).mrr

    history: list[EpochRecord] = []
    best_params = head.copy()
    best_mrr = float("-inf")
    best_epoch = 0
    since_best = 0
    stopped_early = False

    for epoch in range(1, config.max_epochs + 1):
        rng = np.random.default_rng((config.seed, epoch))
        order = [tree_ids[i] for i in rng.permutation(len(tree_ids))]
        losses = []
        for batch in _batches(groups, order, config.trees_per_batch):
            loss, grads = loss_gradients(batch, head, config.tau)
            head.apply_gradients(grads, config.learning_rate)
            losses.append(loss)
        epoch_loss = sum(losses) / len(losses)
        score = dev_score()
        history.append(EpochRecord(epoch, epoch_loss, score))
        if score is None:
            best_params = head.copy()
            best_epoch = epoch
            continue
        if score > best_mrr:
            best_mrr = score
            best_params = head.copy()
            best_epoch = epoch
            since_best = 0
        else:
            since_best += 1
            if since_best >= config.patience:
                stopped_early = True
                break

    return TrainResult(best_params, tuple(history), best_epoch, stopped_early)


__all__ = [
    "EpochRecord",
    "GradReport",
    "ProjectionHead",
    "TrainConfig",
    "TrainResult",
    "Triplet",
    "gradient_check",
    "group_by_tree",
    "head_forward",
    "infonce_loss",
    "loss_gradients",
    "per_item_losses_from_logits",
    "train",
]
