"""Multi-modal entity encoder: graph, attribute and image encoders plus fusion.

Both KGs share every layer except the entity-embedding tables, so an entity of
either side is mapped into one joint space. Attribute ids are treated as a
vocabulary shared by the two KGs (the projection is sized to the larger one).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .kgdata import KnowledgeGraph

MODALS = ("graph", "attr", "image")
SIDES = ("source", "target")


@dataclass
class ModalEmbeddings:
    """Per-modal sub-embeddings and the fused joint embedding of one batch."""

    graph: torch.Tensor
    attr: torch.Tensor
    image: torch.Tensor
    joint: torch.Tensor

    def subs(self) -> dict[str, torch.Tensor]:
        return {"graph": self.graph, "attr": self.attr, "image": self.image}

    def select(self, ids) -> ModalEmbeddings:
        ids = torch.as_tensor(np.array(ids, dtype=np.int64), device=self.joint.device)
        return ModalEmbeddings(self.graph[ids], self.attr[ids], self.image[ids], self.joint[ids])

    def detach(self) -> ModalEmbeddings:
        return ModalEmbeddings(*(t.detach() for t in (self.graph, self.attr, self.image, self.joint)))


def _sparse_rows(indptr: np.ndarray, indices: np.ndarray, n_cols: int, values: np.ndarray,
                 dtype: torch.dtype) -> torch.Tensor:
    n_rows = len(indptr) - 1
    rows = np.repeat(np.arange(n_rows), np.diff(indptr))
    idx = torch.as_tensor(np.stack([rows, indices]), dtype=torch.long)
    return torch.sparse_coo_tensor(idx, torch.as_tensor(values, dtype=dtype), (n_rows, n_cols),
                                   check_invariants=False).coalesce()


def mean_adjacency(kg: KnowledgeGraph, dtype: torch.dtype = torch.float32) -> torch.Tensor:
    """Row-normalized ``A + I`` as a sparse tensor (mean over self and neighbours)."""
    indptr, indices = kg.neighbors
    n = kg.entity_count
    deg = np.diff(indptr)
    # splice a self loop into each row
    rows = np.concatenate([np.repeat(np.arange(n), deg), np.arange(n)])
    cols = np.concatenate([indices, np.arange(n)])
    vals = 1.0 / (deg + 1.0)
    idx = torch.as_tensor(np.stack([rows, cols]), dtype=torch.long)
    return torch.sparse_coo_tensor(idx, torch.as_tensor(vals[rows], dtype=dtype), (n, n),
                                   check_invariants=False).coalesce()


def attribute_matrix(kg: KnowledgeGraph, width: int, dtype: torch.dtype = torch.float32) -> torch.Tensor:
    """Sparse multi-hot ``[entity_count, width]`` bag-of-attributes matrix."""
    indptr, indices = kg.attribute_sets
    return _sparse_rows(indptr, indices, width, np.ones(len(indices)), dtype)


class EEAEncoder(nn.Module):
    """The entity-alignment encoder ``M``.

    Args:
        source, target: the two KGs; their sizes fix the entity tables.
        dim: sub-embedding width of every modal.
        joint_dim: width of the fused joint embedding.
        gnn_layers: number of mean-aggregation layers of the graph encoder.
        dropout: dropout rate applied to sub-embeddings in training mode.
    """

    def __init__(self, source: KnowledgeGraph, target: KnowledgeGraph, dim: int = 300,
                 joint_dim: int = 300, gnn_layers: int = 2, dropout: float = 0.0):
        super().__init__()
        if source.image_dim != target.image_dim:
            raise ValueError("source and target image features must share a width")
        self.dim = dim
        self.joint_dim = joint_dim
        self.attr_width = max(source.attribute_count, target.attribute_count, 1)
        self.entity = nn.ParameterDict({
            "source": nn.Parameter(torch.empty(source.entity_count, dim)),
            "target": nn.Parameter(torch.empty(target.entity_count, dim)),
        })
        self.gnn = nn.ModuleList(nn.Linear(dim, dim) for _ in range(gnn_layers))
        self.attr_proj = nn.Linear(self.attr_width, dim)
        self.image_proj = nn.Linear(source.image_dim, dim)
        self.fusion = nn.Linear(len(MODALS) * dim, joint_dim)
        self.dropout = nn.Dropout(dropout)
        self.kgs = {"source": source, "target": target}
        self._cache: dict[tuple, tuple[KnowledgeGraph, torch.Tensor]] = {}
        self.reset_parameters()

    def reset_parameters(self) -> None:
        for table in self.entity.values():
            nn.init.xavier_uniform_(table)
        for layer in [*self.gnn, self.attr_proj, self.image_proj, self.fusion]:
            nn.init.xavier_uniform_(layer.weight)
            nn.init.zeros_(layer.bias)

    def _cached(self, kind: str, kg: KnowledgeGraph, build) -> torch.Tensor:
        dtype = self.fusion.weight.dtype
        key = (kind, id(kg), dtype)
        hit = self._cache.get(key)
        if hit is None or hit[0] is not kg:
            hit = (kg, build(kg, dtype))
            self._cache[key] = hit
        return hit[1]

    def _kg(self, side: str, kg: KnowledgeGraph | None) -> KnowledgeGraph:
        if side not in self.kgs:
            raise ValueError(f"side must be one of {SIDES}, got {side!r}")
        kg = kg or self.kgs[side]
        if kg.entity_count != self.entity[side].shape[0]:
            raise ValueError("knowledge graph does not match the entity table size")
        return kg

    def graph_embeddings(self, side: str, kg: KnowledgeGraph | None = None) -> torch.Tensor:
        kg = self._kg(side, kg)
        adj = self._cached("adj", kg, mean_adjacency)
        h = self.entity[side]
        for layer in self.gnn:
            h = torch.tanh(layer(torch.sparse.mm(adj, h)))
        return h

    def encode_all(self, side: str, kg: KnowledgeGraph | None = None) -> ModalEmbeddings:
        """Embeddings of every entity of ``side``.

        ``kg`` substitutes the features used (same entity count), e.g. the
        unpurged target KG when scoring synthesis.
        """
        kg = self._kg(side, kg)
        dtype = self.fusion.weight.dtype
        graph = self.graph_embeddings(side, kg)
        attrs = self._cached("attr", kg, lambda g, dt: attribute_matrix(g, self.attr_width, dt))
        attr = torch.sparse.mm(attrs, self.attr_proj.weight.t()) + self.attr_proj.bias
        feats = self._cached("image", kg, lambda g, dt: torch.tensor(g.image_features, dtype=dt))
        image = self.image_proj(feats)
        graph, attr, image = (self.dropout(t) for t in (graph, attr, image))
        return ModalEmbeddings(graph, attr, image, self.fuse(graph, attr, image))

    def encode(self, side: str, ids, kg: KnowledgeGraph | None = None) -> ModalEmbeddings:
        ids = np.asarray(ids, dtype=np.int64)
        n = self.entity[side].shape[0] if side in self.entity else 0
        if ids.size and (ids.min() < 0 or ids.max() >= n):
            raise IndexError(f"entity id out of range for {side} KG of {n} entities")
        return self.encode_all(side, kg).select(ids)

    def fuse(self, graph: torch.Tensor, attr: torch.Tensor, image: torch.Tensor) -> torch.Tensor:
        """Affine map of the concatenated sub-embeddings; row-wise, no mixing."""
        shapes = {tuple(t.shape) for t in (graph, attr, image)}
        if len(shapes) != 1 or graph.dim() != 2 or graph.shape[1] != self.dim:
            raise ValueError(f"sub-embeddings must all be [batch, {self.dim}], got {sorted(shapes)}")
        return self.fusion(torch.cat([graph, attr, image], dim=1))

    def fuse_subs(self, subs: dict[str, torch.Tensor]) -> torch.Tensor:
        return self.fuse(subs["graph"], subs["attr"], subs["image"])
