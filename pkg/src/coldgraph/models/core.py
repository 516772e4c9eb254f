"""The edge classifier: relational GNN node embedder, sibling-offer edge
embedder, and an MLP head over the concatenated embeddings.

The model scores offer edges.  Per batch offer it consumes

- seller and product node embeddings from a relational graph convolution
  stack run over the batch ego network,
- an edge embedding built from the offer's own features concatenated with
  the mean features of its sibling offers (other offers of the same
  product, and other offers of the same seller; the offer itself is
  excluded, and either mean is a zero vector when no siblings exist),

and emits independent per-class probabilities through sigmoid heads.

Two head modes exist: ``multi_task`` trains one parameter set with a
nine-column head on the summed per-class loss; ``nine_binary`` trains
nine independent single-column models.  Binary head k is initialized as
column k of the same nine-column head draw, so at initialization the two
modes produce identical per-class losses given the same seed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..autodiff import (
    Tensor,
    activation,
    add_n,
    affine,
    concat_cols,
    const_matmul,
    dropout,
    matmul,
    mean_rows,
    stack_rows,
    take_rows,
)
from ..graph import N_CLASSES, N_RELATIONS, HeteroGraph
from ..sampling import EgoNetwork, OfferBatch, extract_ego_network

__all__ = [
    "EdgeGnnConfig",
    "init_edge_gnn_params",
    "cast_params",
    "project_node_features",
    "rgcn_layer",
    "node_embedder_forward",
    "summarize_neighbor_offers",
    "sibling_offer_summaries",
    "edge_embedder_forward",
    "classifier_forward",
    "edge_gnn_forward",
]


@dataclass(frozen=True)
class EdgeGnnConfig:
    d_s: int
    d_p: int
    d_o: int
    hidden: int = 64
    gnn_layers: int = 3
    edge_hidden: int = 64
    cls_hidden: int = 64
    n_classes: int = N_CLASSES
    mode: str = "multi_task"  # or "nine_binary"
    dropout: float = 0.0

    def __post_init__(self):
        if self.mode not in ("multi_task", "nine_binary"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.gnn_layers < 1:
            raise ValueError("need at least one graph layer")

    @property
    def head_width(self) -> int:
        return self.n_classes if self.mode == "multi_task" else 1

    def to_dict(self) -> dict:
        return {
            "d_s": self.d_s, "d_p": self.d_p, "d_o": self.d_o,
            "hidden": self.hidden, "gnn_layers": self.gnn_layers,
            "edge_hidden": self.edge_hidden, "cls_hidden": self.cls_hidden,
            "n_classes": self.n_classes, "mode": self.mode,
            "dropout": self.dropout,
        }


def glorot(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-limit, limit, size=(rows, cols)).astype(np.float32)


def init_edge_gnn_params(
    cfg: EdgeGnnConfig, seed: int, head_class: Optional[int] = None
) -> dict:
    """Seeded parameter dict.

    Draw order is fixed, so two configs differing only in head selection
    share every tensor draw.  The head is always drawn at full nine-class
    width; ``head_class`` (required iff mode is ``nine_binary``) slices out
    that column.
    """
    if (head_class is not None) != (cfg.mode == "nine_binary"):
        raise ValueError("head_class is required exactly when mode is nine_binary")
    if head_class is not None and not 0 <= head_class < cfg.n_classes:
        raise ValueError(f"head_class out of range: {head_class}")
    rng = np.random.default_rng(seed)
    h = cfg.hidden
    params: dict = {}
    params["proj_seller_w"] = Tensor(glorot(rng, cfg.d_s, h), requires_grad=True)
    params["proj_seller_b"] = Tensor(np.zeros(h, dtype=np.float32), requires_grad=True)
    params["proj_product_w"] = Tensor(glorot(rng, cfg.d_p, h), requires_grad=True)
    params["proj_product_b"] = Tensor(np.zeros(h, dtype=np.float32), requires_grad=True)
    for layer in range(cfg.gnn_layers):
        for r in range(N_RELATIONS):
            params[f"gnn{layer}_rel{r}_w"] = Tensor(glorot(rng, h, h), requires_grad=True)
        params[f"gnn{layer}_self_w"] = Tensor(glorot(rng, h, h), requires_grad=True)
        params[f"gnn{layer}_self_b"] = Tensor(np.zeros(h, dtype=np.float32), requires_grad=True)
    params["edge0_w"] = Tensor(glorot(rng, 3 * cfg.d_o, cfg.edge_hidden), requires_grad=True)
    params["edge0_b"] = Tensor(np.zeros(cfg.edge_hidden, dtype=np.float32), requires_grad=True)
    params["edge1_w"] = Tensor(glorot(rng, cfg.edge_hidden, cfg.edge_hidden), requires_grad=True)
    params["edge1_b"] = Tensor(np.zeros(cfg.edge_hidden, dtype=np.float32), requires_grad=True)
    params["cls0_w"] = Tensor(
        glorot(rng, 2 * h + cfg.edge_hidden, cfg.cls_hidden), requires_grad=True
    )
    params["cls0_b"] = Tensor(np.zeros(cfg.cls_hidden, dtype=np.float32), requires_grad=True)
    head_w = glorot(rng, cfg.cls_hidden, cfg.n_classes)
    head_b = np.zeros(cfg.n_classes, dtype=np.float32)
    if head_class is not None:
        head_w = head_w[:, head_class:head_class + 1].copy()
        head_b = head_b[head_class:head_class + 1].copy()
    params["cls1_w"] = Tensor(head_w, requires_grad=True)
    params["cls1_b"] = Tensor(head_b, requires_grad=True)
    return params


def cast_params(params: dict, dtype) -> dict:
    """Copy of a parameter dict in another float dtype (for f64 checks/scoring)."""
    return {
        name: Tensor(p.data.astype(dtype), requires_grad=p.requires_grad)
        for name, p in params.items()
    }


# ---------------------------------------------------------------------------
# module 1: node embedder


def project_node_features(
    seller_x: np.ndarray, product_x: np.ndarray, params: dict, act: str = "relu"
) -> tuple:
    """Per-type input projections into the shared hidden space."""
    h_s = activation(
        affine(Tensor(seller_x), params["proj_seller_w"], params["proj_seller_b"]), act
    )
    h_p = activation(
        affine(Tensor(product_x), params["proj_product_w"], params["proj_product_b"]), act
    )
    return h_s, h_p


def rgcn_layer(
    rel_adj: list,
    h: Tensor,
    rel_ws: list,
    self_w: Tensor,
    self_b: Tensor,
    act: str = "relu",
) -> Tensor:
    """One relational graph convolution.

    Per node: the self path ``h @ self_w + bias`` plus, for every relation
    with at least one incident edge, the neighbor-mean of ``h`` times that
    relation's weight.  ``rel_adj`` entries are row-mean-normalized
    adjacency matrices, so relations a node does not participate in
    contribute nothing to it.
    """
    terms = [affine(h, self_w, self_b)]
    for adj, w in zip(rel_adj, rel_ws):
        if adj.nnz == 0:
            continue
        terms.append(const_matmul(adj, matmul(h, w)))
    return activation(add_n(terms), act)


def node_embedder_forward(
    g: HeteroGraph,
    ego: EgoNetwork,
    params: dict,
    cfg: EdgeGnnConfig,
    rng: Optional[np.random.Generator] = None,
) -> tuple:
    """Seller and product embeddings for the ego's batch endpoints."""
    if ego.hops < cfg.gnn_layers:
        raise ValueError(
            f"ego network of depth {ego.hops} is too shallow for {cfg.gnn_layers} layers"
        )
    dtype = params["proj_seller_w"].dtype
    seller_x = g.seller_features[ego.seller_globals].astype(dtype, copy=False)
    product_x = g.product_features[ego.product_globals].astype(dtype, copy=False)
    h_s, h_p = project_node_features(seller_x, product_x, params)
    h = stack_rows([h_s, h_p])
    for layer in range(cfg.gnn_layers):
        h = rgcn_layer(
            ego.rel_adj,
            h,
            [params[f"gnn{layer}_rel{r}_w"] for r in range(N_RELATIONS)],
            params[f"gnn{layer}_self_w"],
            params[f"gnn{layer}_self_b"],
        )
        if cfg.dropout > 0.0 and rng is not None:
            h = dropout(h, cfg.dropout, rng)
    emb_s = take_rows(h, ego.batch_seller_local)
    emb_p = take_rows(h, ego.batch_product_local)
    return emb_s, emb_p


# ---------------------------------------------------------------------------
# module 2: edge embedder


def sibling_offer_summaries(
    g: HeteroGraph, offer_ids: np.ndarray, offer_features: Optional[np.ndarray] = None
) -> tuple:
    """Mean feature rows of same-seller and same-product sibling offers.

    The target offer is excluded from both means; an offer with no sibling
    on one side gets a zero vector there.  Computed with grouped sums over
    the full offer table, so cost is linear in the number of offers.
    """
    feats = g.offer_features if offer_features is None else offer_features
    feats64 = feats.astype(np.float64, copy=False)
    offer_ids = np.asarray(offer_ids, dtype=np.int64)

    out = []
    for owner, count in (
        (g.offer_seller, g.n_sellers),
        (g.offer_product, g.n_products),
    ):
        sums = np.zeros((count, feats.shape[1]), dtype=np.float64)
        np.add.at(sums, owner, feats64)
        sizes = np.bincount(owner, minlength=count)
        own = owner[offer_ids]
        k = sizes[own]
        mean = np.zeros((offer_ids.shape[0], feats.shape[1]), dtype=np.float64)
        has = k > 1
        mean[has] = (sums[own[has]] - feats64[offer_ids[has]]) / (k[has] - 1)[:, None]
        out.append(mean.astype(feats.dtype, copy=False))
    return out[0], out[1]


def summarize_neighbor_offers(g: HeteroGraph, offer_idx: int) -> tuple:
    """Sibling means for a single offer (row pair of the batched form)."""
    o_s, o_p = sibling_offer_summaries(g, np.array([offer_idx]))
    return o_s[0], o_p[0]


def edge_embedder_forward(
    o_o: np.ndarray, o_s: np.ndarray, o_p: np.ndarray, params: dict
) -> Tensor:
    """Two-layer MLP over the offer features joined with both sibling means."""
    dtype = params["edge0_w"].dtype
    x = Tensor(
        np.concatenate(
            [
                np.asarray(o_o, dtype=dtype),
                np.asarray(o_p, dtype=dtype),
                np.asarray(o_s, dtype=dtype),
            ],
            axis=1,
        )
    )
    h = activation(affine(x, params["edge0_w"], params["edge0_b"]), "relu")
    return activation(affine(h, params["edge1_w"], params["edge1_b"]), "relu")


# ---------------------------------------------------------------------------
# module 3: classifier


def classifier_forward(emb_s: Tensor, emb_p: Tensor, emb_o: Tensor, params: dict) -> Tensor:
    x = concat_cols([emb_s, emb_p, emb_o])
    h = activation(affine(x, params["cls0_w"], params["cls0_b"]), "relu")
    return activation(affine(h, params["cls1_w"], params["cls1_b"]), "sigmoid")


# ---------------------------------------------------------------------------
# full model


def edge_gnn_forward(
    g: HeteroGraph,
    batch,
    params: dict,
    cfg: EdgeGnnConfig,
    ego: Optional[EgoNetwork] = None,
    rng: Optional[np.random.Generator] = None,
) -> Tensor:
    """Per-class probabilities for a batch of offers.

    ``batch`` is an :class:`OfferBatch` or a plain index array.  The ego
    network is extracted at depth ``cfg.gnn_layers`` unless one is passed
    in.  ``rng`` enables dropout (training only).
    """
    if not isinstance(batch, OfferBatch):
        batch = OfferBatch(np.asarray(batch, dtype=np.int64))
    if ego is None:
        ego = extract_ego_network(g, batch, hops=cfg.gnn_layers)
    emb_s, emb_p = node_embedder_forward(g, ego, params, cfg, rng=rng)
    o_s, o_p = sibling_offer_summaries(g, batch.offers)
    o_o = g.offer_features[batch.offers]
    emb_o = edge_embedder_forward(o_o, o_s, o_p, params)
    return classifier_forward(emb_s, emb_p, emb_o, params)
