"""Decoders from reconstructed sub-embeddings back to concrete features."""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .encoder import MODALS, SIDES
from .kgdata import KnowledgeGraph
from .kernels import multi_hot
from .mvae import mlp_stack

PROBABILISTIC = ("graph", "attr")


def feature_width(kg: KnowledgeGraph, modal: str, attr_width: int | None = None) -> int:
    if modal == "graph":
        return kg.entity_count
    if modal == "attr":
        return attr_width if attr_width is not None else kg.attribute_count
    if modal == "image":
        return kg.image_dim
    raise ValueError(f"unknown modal {modal!r}")


def concrete_features(kg: KnowledgeGraph, ids, modal: str, width: int | None = None) -> np.ndarray:
    """Ground-truth features of ``ids``: multi-hot neighbours/attributes or image rows."""
    ids = np.asarray(ids, dtype=np.int64)
    if modal == "graph":
        indptr, indices = kg.neighbors
        return multi_hot(indptr, indices, ids, width or kg.entity_count)
    if modal == "attr":
        indptr, indices = kg.attribute_sets
        return multi_hot(indptr, indices, ids, width or kg.attribute_count)
    if modal == "image":
        return kg.image_features[ids]
    raise ValueError(f"unknown modal {modal!r}")


class FeatureDecoder(nn.Module):
    """Hidden ``Linear -> LayerNorm -> ReLU`` layers (tanh on the last) and an output layer."""

    def __init__(self, dim: int, width: int, hidden: Sequence[int] = (300, 1000),
                 probabilistic: bool = True):
        super().__init__()
        self.width = width
        self.probabilistic = probabilistic
        self.hidden = mlp_stack((dim, *hidden), last_activation=nn.Tanh)
        self.out = nn.Linear(hidden[-1] if hidden else dim, width)

    def logits(self, x: torch.Tensor) -> torch.Tensor:
        return self.out(self.hidden(x))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        y = self.logits(x)
        return torch.sigmoid(y) if self.probabilistic else y


@dataclass
class ConcreteFeaturePrediction:
    graph: torch.Tensor
    attr: torch.Tensor
    image: torch.Tensor

    def __getitem__(self, modal: str) -> torch.Tensor:
        return getattr(self, modal)


class ConcreteDecoders(nn.Module):
    """One decoder per (output KG, modal); widths follow the output KG's vocabularies."""

    def __init__(self, kgs: dict[str, KnowledgeGraph], dim: int,
                 hidden: Sequence[int] = (300, 1000), attr_width: int | None = None):
        super().__init__()
        self.widths = {
            side: {m: feature_width(kgs[side], m, attr_width) for m in MODALS} for side in SIDES
        }
        self.decoders = nn.ModuleDict({
            side: nn.ModuleDict({
                m: FeatureDecoder(dim, self.widths[side][m], hidden, m in PROBABILISTIC)
                for m in MODALS
            })
            for side in SIDES
        })

    def decode_modal(self, sub: torch.Tensor, modal: str, side: str,
                     width: int | None = None) -> torch.Tensor:
        """Probabilities (graph/attr) or regressed image features for KG ``side``."""
        expected = self.widths[side][modal]
        if width is not None and width != expected:
            raise ValueError(f"{side} {modal} decoder emits {expected} columns, not {width}")
        return self.decoders[side][modal](sub)

    def decode(self, subs: dict[str, torch.Tensor], side: str) -> ConcreteFeaturePrediction:
        return ConcreteFeaturePrediction(**{m: self.decode_modal(subs[m], m, side) for m in MODALS})


def discretize_prediction(prediction, modal: str, threshold: float = 0.5, top_k: int | None = None,
                          image_table: np.ndarray | None = None) -> list:
    """Turn decoder output into readable feature sets.

    For graph/attr modals returns, per row, the ids whose probability is at
    least ``threshold`` (or the ``top_k`` most probable ids, best first, when
    ``top_k`` is given). For the image modal returns, per row, the index of the
    nearest row of ``image_table`` by cosine distance.
    """
    pred = prediction.detach().cpu().numpy() if isinstance(prediction, torch.Tensor) else np.asarray(prediction)
    pred = np.atleast_2d(pred)
    if modal in PROBABILISTIC:
        if top_k is not None:
            order = np.argsort(-pred, axis=1, kind="stable")[:, :top_k]
            return [row.tolist() for row in order]
        return [np.flatnonzero(row >= threshold).tolist() for row in pred]
    if modal == "image":
        if image_table is None:
            raise ValueError("image discretization needs the table of existing image features")
        table = np.asarray(image_table, dtype=np.float64)
        a = pred / np.maximum(np.linalg.norm(pred, axis=1, keepdims=True), 1e-12)
        b = table / np.maximum(np.linalg.norm(table, axis=1, keepdims=True), 1e-12)
        return np.argmax(a @ b.T, axis=1).tolist()
    raise ValueError(f"unknown modal {modal!r}")
