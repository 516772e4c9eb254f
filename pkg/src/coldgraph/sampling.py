"""Mini-batch sampling: uniform offer batches and their ego networks.

An ego network is the induced subgraph on every node within ``hops``
relation-edges of some endpoint of a batch offer (endpoints are at hop
zero).  Extracting the ego network of depth L suffices to reproduce the
whole-graph output of an L-layer relational GNN at the batch endpoints:
layer l of a node only reads nodes l edges away, and all such nodes and
the edges among them are present, with their full-graph degrees intact
for every node shallower than the boundary.

Local node order is all included sellers in ascending index, then all
included products; adjacency is re-indexed into that order and row-mean
normalized per relation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .graph import N_RELATIONS, HeteroGraph, Relation

__all__ = [
    "OfferBatch",
    "EgoNetwork",
    "sample_offer_batch",
    "extract_ego_network",
    "row_mean_normalize",
]


def row_mean_normalize(mat: sp.csr_matrix) -> sp.csr_matrix:
    """Scale each nonempty row of a binary adjacency by 1/degree."""
    return _row_mean_normalize(mat.tocsr())


def _row_mean_normalize(sub: sp.csr_matrix) -> sp.csr_matrix:
    deg = np.diff(sub.indptr)
    if sub.nnz:
        data = (sub.data / np.repeat(deg, deg)).astype(np.float32)
    else:
        data = sub.data.astype(np.float32)
    return sp.csr_matrix((data, sub.indices, sub.indptr), shape=sub.shape)


@dataclass(frozen=True)
class OfferBatch:
    """Unique labeled offer indices plus the seed that produced them."""

    offers: np.ndarray
    seed: Optional[int] = None

    def __post_init__(self):
        offers = np.asarray(self.offers, dtype=np.int64)
        if offers.ndim != 1:
            raise ValueError("a batch is a flat index array")
        if len(np.unique(offers)) != offers.shape[0]:
            raise ValueError("batch offers must be unique")
        object.__setattr__(self, "offers", offers)

    def __len__(self):
        return self.offers.shape[0]


def sample_offer_batch(g: HeteroGraph, batch_size: int, rng_seed: int) -> OfferBatch:
    """Uniform sample of labeled offers without replacement.

    Returns fewer than ``batch_size`` offers only when the graph has fewer
    labeled offers than that.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be positive")
    if g.labels is None or g.n_offers == 0:
        raise ValueError("graph has no labeled offers")
    rng = np.random.default_rng(rng_seed)
    take = min(batch_size, g.n_offers)
    idx = np.sort(rng.choice(g.n_offers, size=take, replace=False))
    return OfferBatch(idx, seed=rng_seed)


@dataclass
class EgoNetwork:
    """Locally re-indexed neighborhood closure of a batch.

    ``rel_adj[r]`` is the induced adjacency of relation ``r`` with each row
    scaled by the inverse of its neighbor count (empty rows stay empty), in
    local node order: sellers first, then products.
    """

    hops: int
    batch: OfferBatch
    seller_globals: np.ndarray
    product_globals: np.ndarray
    hop: np.ndarray
    rel_adj: list = field(repr=False)
    batch_seller_local: np.ndarray = field(repr=False)
    batch_product_local: np.ndarray = field(repr=False)

    @property
    def n_local(self) -> int:
        return self.seller_globals.shape[0] + self.product_globals.shape[0]

    @property
    def n_local_sellers(self) -> int:
        return self.seller_globals.shape[0]

    def local_of_seller(self, idx) -> np.ndarray:
        return _lookup(self.seller_globals, idx, "seller")

    def local_of_product(self, idx) -> np.ndarray:
        return _lookup(self.product_globals, idx, "product") + self.n_local_sellers


def _lookup(sorted_globals: np.ndarray, idx, what: str) -> np.ndarray:
    idx = np.asarray(idx)
    pos = np.searchsorted(sorted_globals, idx)
    safe = np.minimum(pos, max(sorted_globals.shape[0] - 1, 0))
    if sorted_globals.shape[0] == 0 or np.any(sorted_globals[safe] != idx):
        raise KeyError(f"{what} {idx} not in ego network")
    return pos


def extract_ego_network(
    g: HeteroGraph,
    batch: OfferBatch,
    hops: int,
    fanout_cap: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
) -> EgoNetwork:
    """Breadth-first closure of the batch endpoints over all nine relations.

    ``fanout_cap``, when set, bounds how many neighbors a frontier node may
    add per relation per expansion (sampled; pathological hubs otherwise
    pull in entire graphs).  Capping trades the sufficiency guarantee for
    bounded ego size, so it is off by default.
    """
    if hops < 1:
        raise ValueError("hops must be at least 1")
    if len(batch) == 0:
        raise ValueError("empty batch")
    if batch.offers.max() >= g.n_offers:
        raise ValueError("batch references unknown offers")
    if fanout_cap is not None and rng is None:
        rng = np.random.default_rng(0)

    n_s = g.n_sellers
    n = g.n_nodes
    mats = [g.unified_csr(r) for r in Relation]

    hop = np.full(n, -1, dtype=np.int32)
    batch_sellers = g.offer_seller[batch.offers]
    batch_products = g.offer_product[batch.offers] + n_s
    frontier = np.unique(np.concatenate([batch_sellers, batch_products]))
    hop[frontier] = 0
    for depth in range(1, hops + 1):
        if frontier.size == 0:
            break
        found = []
        for mat in mats:
            indptr, indices = mat.indptr, mat.indices
            starts, ends = indptr[frontier], indptr[frontier + 1]
            if fanout_cap is None:
                for a, b in zip(starts, ends):
                    if b > a:
                        found.append(indices[a:b])
            else:
                for a, b in zip(starts, ends):
                    if b - a <= fanout_cap:
                        if b > a:
                            found.append(indices[a:b])
                    else:
                        found.append(rng.choice(indices[a:b], size=fanout_cap, replace=False))
        if not found:
            break
        cand = np.unique(np.concatenate(found))
        fresh = cand[hop[cand] < 0]
        hop[fresh] = depth
        frontier = fresh

    included = np.flatnonzero(hop >= 0)
    seller_globals = included[included < n_s]
    product_globals = included[included >= n_s] - n_s

    local_of = np.full(n, -1, dtype=np.int64)
    local_of[included] = np.arange(included.shape[0])

    rel_adj = [_row_mean_normalize(mat[included][:, included].tocsr()) for mat in mats]

    return EgoNetwork(
        hops=hops,
        batch=batch,
        seller_globals=seller_globals,
        product_globals=product_globals,
        hop=hop[included],
        rel_adj=rel_adj,
        batch_seller_local=local_of[batch_sellers],
        batch_product_local=local_of[batch_products],
    )
