"""Training loops.

One epoch visits every labeled offer exactly once, in a seeded shuffled
order, in batches of ``batch_size``.  The multi-task model trains a single
parameter set against the summed per-class loss; nine-binary mode trains
nine independent single-head models on the same batch schedule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..autodiff import (
    AdamState,
    Tape,
    Tensor,
    activation,
    adam_step,
    affine,
    backward,
    bce_loss,
    scale,
    sgd_step,
)
from ..graph import HeteroGraph
from ..sampling import OfferBatch, extract_ego_network
from .core import EdgeGnnConfig, cast_params, edge_gnn_forward, init_edge_gnn_params

__all__ = [
    "TrainConfig",
    "TrainingDiverged",
    "EdgeGnnModel",
    "train_edge_gnn",
    "train_mlp_heads",
    "score_mlp_heads",
    "mlp_head_forward",
]


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 8
    batch_size: int = 1024
    lr: float = 1e-3
    seed: int = 0
    optimizer: str = "adam"  # or "sgd"
    weight_decay: float = 0.0

    def __post_init__(self):
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")


def _make_stepper(params: dict, tc: TrainConfig):
    if tc.optimizer == "adam":
        state = AdamState(lr=tc.lr, weight_decay=tc.weight_decay)
        return lambda grads: adam_step(params, grads, state)
    return lambda grads: sgd_step(params, grads, tc.lr, tc.weight_decay)


def _named_grads(params: dict, grads_by_tensor: dict) -> dict:
    return {
        name: grads_by_tensor[p] for name, p in params.items() if p in grads_by_tensor
    }


def _epoch_batches(m: int, batch_size: int, rng: np.random.Generator):
    perm = rng.permutation(m)
    for lo in range(0, m, batch_size):
        yield perm[lo:lo + batch_size]


@dataclass
class EdgeGnnModel:
    """Trained edge classifier: one parameter group, or nine in binary mode."""

    cfg: EdgeGnnConfig
    param_groups: list
    history: list = field(default_factory=list)

    def score(self, g: HeteroGraph, offers, dtype=np.float64) -> np.ndarray:
        """Per-class probability matrix for the given offers.

        Scoring runs with 64-bit accumulation by default; parameters stay
        float32 in memory and on disk.  The ego network is extracted once
        and shared across heads.
        """
        batch = OfferBatch(np.asarray(offers, dtype=np.int64))
        ego = extract_ego_network(g, batch, hops=self.cfg.gnn_layers)
        groups = [cast_params(p, dtype) for p in self.param_groups]
        if self.cfg.mode == "multi_task":
            return edge_gnn_forward(g, batch, groups[0], self.cfg, ego=ego).data
        cols = [
            edge_gnn_forward(g, batch, grp, self.cfg, ego=ego).data for grp in groups
        ]
        return np.concatenate(cols, axis=1)


def train_edge_gnn(g: HeteroGraph, cfg: EdgeGnnConfig, tc: TrainConfig) -> EdgeGnnModel:
    if g.labels is None or g.n_offers == 0:
        raise ValueError("graph has no labeled offers")
    labels = g.labels.astype(np.float32)
    m = g.n_offers

    if cfg.mode == "multi_task":
        head_specs = [(None, labels)]
    else:
        head_specs = [(k, labels[:, k:k + 1]) for k in range(cfg.n_classes)]

    groups, history = [], []
    for head_class, targets in head_specs:
        params = init_edge_gnn_params(cfg, tc.seed, head_class=head_class)
        step = _make_stepper(params, tc)
        rng = np.random.default_rng(tc.seed)
        dropout_rng = np.random.default_rng([tc.seed, 1]) if cfg.dropout > 0 else None
        losses = []
        for epoch in range(tc.epochs):
            total, batches = 0.0, 0
            for idx in _epoch_batches(m, tc.batch_size, rng):
                batch = OfferBatch(np.sort(idx))
                ego = extract_ego_network(g, batch, hops=cfg.gnn_layers)
                with Tape() as tape:
                    probs = edge_gnn_forward(g, batch, params, cfg, ego=ego, rng=dropout_rng)
                    loss = bce_loss(probs, targets[batch.offers])
                    if cfg.mode == "multi_task":
                        # mean over elements -> sum of the nine per-class means
                        loss = scale(loss, cfg.n_classes)
                loss_val = loss.item()
                if not math.isfinite(loss_val):
                    raise TrainingDiverged(
                        f"non-finite loss {loss_val} at epoch {epoch}, batch {batches}"
                        + ("" if head_class is None else f", head {head_class}")
                    )
                grads = backward(tape, loss)
                step(_named_grads(params, grads))
                total += loss_val
                batches += 1
            losses.append(total / max(batches, 1))
        groups.append(params)
        history.append(losses)
    return EdgeGnnModel(cfg=cfg, param_groups=groups, history=history)


# ---------------------------------------------------------------------------
# per-class MLP heads over a fixed feature table (tabular-style models)


def init_mlp_head(rng: np.random.Generator, d_in: int, hidden: int) -> dict:
    from .core import glorot

    return {
        "w0": Tensor(glorot(rng, d_in, hidden), requires_grad=True),
        "b0": Tensor(np.zeros(hidden, dtype=np.float32), requires_grad=True),
        "w1": Tensor(glorot(rng, hidden, 1), requires_grad=True),
        "b1": Tensor(np.zeros(1, dtype=np.float32), requires_grad=True),
    }


def mlp_head_forward(x: Tensor, params: dict) -> Tensor:
    h = activation(affine(x, params["w0"], params["b0"]), "relu")
    return activation(affine(h, params["w1"], params["b1"]), "sigmoid")


def train_mlp_heads(
    table: np.ndarray,
    labels: np.ndarray,
    tc: TrainConfig,
    hidden: int = 64,
    n_classes: Optional[int] = None,
) -> tuple:
    """Nine independent binary MLPs over a row-per-offer feature table.

    Returns (head param dicts, per-head loss history).
    """
    if labels.ndim != 2 or labels.shape[0] != table.shape[0]:
        raise ValueError("labels must align with table rows")
    n_classes = labels.shape[1] if n_classes is None else n_classes
    m = table.shape[0]
    heads, history = [], []
    for k in range(n_classes):
        rng = np.random.default_rng([tc.seed, k])
        params = init_mlp_head(rng, table.shape[1], hidden)
        step = _make_stepper(params, tc)
        target = labels[:, k:k + 1].astype(np.float32)
        losses = []
        for epoch in range(tc.epochs):
            total, batches = 0.0, 0
            for idx in _epoch_batches(m, tc.batch_size, rng):
                with Tape() as tape:
                    probs = mlp_head_forward(Tensor(table[idx]), params)
                    loss = bce_loss(probs, target[idx])
                loss_val = loss.item()
                if not math.isfinite(loss_val):
                    raise TrainingDiverged(
                        f"non-finite loss at epoch {epoch}, batch {batches}, head {k}"
                    )
                grads = backward(tape, loss)
                step(_named_grads(params, grads))
                total += loss_val
                batches += 1
            losses.append(total / max(batches, 1))
        heads.append(params)
        history.append(losses)
    return heads, history


def score_mlp_heads(heads: list, table: np.ndarray, dtype=np.float64) -> np.ndarray:
    x = Tensor(table.astype(dtype, copy=False))
    cols = [mlp_head_forward(x, cast_params(p, dtype)).data for p in heads]
    return np.concatenate(cols, axis=1)
