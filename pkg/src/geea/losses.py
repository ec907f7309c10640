"""Training objectives: prediction matching, distribution matching, prior and
post reconstruction, and their weighted total."""

from __future__ import annotations

import json
from collections.abc import Callable, Mapping
from dataclasses import dataclass, field

import torch
import torch.nn.functional as F

from .mvae import ALL_FLOWS, FlowTag

BCE_FLOOR = 1e-7


class MissingLossTerm(KeyError):
    pass


@dataclass
class LossWeights:
    """Flow weights scale each flow's reconstruction terms; term weights scale
    the (distribution match, prior, post) blocks. Prediction matching is unweighted."""

    flow_weights: dict[FlowTag, float] = field(default_factory=lambda: {
        FlowTag.XX: 1.0, FlowTag.YY: 1.0, FlowTag.XY: 5.0, FlowTag.YX: 5.0})
    distribution_match: float = 0.5
    prior: float = 1.0
    post: float = 1.0

    def __post_init__(self):
        self.flow_weights = {FlowTag(k): float(v) for k, v in self.flow_weights.items()}
        values = [*self.flow_weights.values(), self.distribution_match, self.prior, self.post]
        if any(v < 0 for v in values):
            raise ValueError("loss weights must be non-negative")

    def to_dict(self) -> dict:
        return {
            "flow_weights": [self.flow_weights.get(f, 0.0) for f in ALL_FLOWS],
            "term_weights": [self.distribution_match, self.prior, self.post],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> LossWeights:
        flows = d.get("flow_weights", [1.0, 1.0, 5.0, 5.0])
        if not isinstance(flows, Mapping):
            flows = dict(zip(ALL_FLOWS, flows))
        dm, prior, post = d.get("term_weights", [0.5, 1.0, 1.0])
        return cls(flows, dm, prior, post)


@dataclass
class LossBreakdown:
    """Loss parts of one step. ``total`` is filled by :func:`total_loss`."""

    prediction_match: torch.Tensor | float = 0.0
    distribution_match: dict[str, torch.Tensor | float] = field(default_factory=dict)
    prior_reconstruction: dict[tuple[FlowTag, str], torch.Tensor | float] = field(default_factory=dict)
    post_reconstruction: dict[FlowTag, torch.Tensor | float] = field(default_factory=dict)
    total: torch.Tensor | float | None = None

    def as_floats(self) -> dict:
        def f(v):
            return float(v.detach()) if isinstance(v, torch.Tensor) else float(v)

        return {
            "l_ns": f(self.prediction_match),
            "l_dm": sum(f(v) for v in self.distribution_match.values()),
            "l_dm_by_modal": {m: f(v) for m, v in self.distribution_match.items()},
            "l_prior_by_flow_modal": {f"{fl.value}/{m}": f(v)
                                      for (fl, m), v in self.prior_reconstruction.items()},
            "l_post_by_flow": {fl.value: f(v) for fl, v in self.post_reconstruction.items()},
            "total": None if self.total is None else f(self.total),
        }

    def to_json(self, step: int) -> str:
        return json.dumps({"step": step, **self.as_floats()}, sort_keys=True)


def cosine_matrix(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    return F.normalize(a, dim=1) @ F.normalize(b, dim=1).t()


def _one_direction(scores: torch.Tensor, negatives: bool) -> torch.Tensor:
    n = scores.shape[0]
    pos = -F.logsigmoid(scores.diagonal())
    if not negatives:
        return pos.mean()
    off = ~torch.eye(n, dtype=torch.bool, device=scores.device)
    # -log(1 - sigmoid(s)) == -logsigmoid(-s)
    neg = (-F.logsigmoid(-scores) * off).sum(dim=1) / (n - 1)
    return (pos + neg).mean()


def loss_prediction_match(source_joint: torch.Tensor, target_joint: torch.Tensor,
                          temperature: float = 0.1, negatives: bool = True,
                          symmetric: bool = True) -> torch.Tensor:
    """Binary cross-entropy over cosine scores of aligned rows.

    Row ``i`` of both inputs is a seed pair: its score ``cos / temperature``
    is pushed to label 1 and every in-batch ``j != i`` to label 0, negatives
    being averaged over ``batch - 1``. The per-anchor losses are averaged;
    with ``symmetric`` the y->x direction is added.
    """
    if source_joint.shape != target_joint.shape:
        raise ValueError("source and target joint embeddings must have the same shape")
    if negatives and source_joint.shape[0] < 2:
        raise ValueError("in-batch negatives need a batch of at least two pairs")
    scores = cosine_matrix(source_joint, target_joint) / temperature
    loss = _one_direction(scores, negatives)
    if symmetric:
        loss = loss + _one_direction(scores.t(), negatives)
    return loss


def kl_to_standard_normal(mu: torch.Tensor, sigma: torch.Tensor) -> torch.Tensor:
    """Mean over samples and dimensions of ``KL(N(mu, sigma^2) || N(0, 1))``."""
    if (sigma <= 0).any():
        raise ValueError("sigma must be strictly positive")
    # log(1/sigma) + (sigma^2 + mu^2) / 2 - 1/2
    return (-torch.log(sigma) + 0.5 * (sigma ** 2 + mu ** 2) - 0.5).mean()


def loss_distribution_match(self_latents: Mapping[FlowTag, tuple[torch.Tensor, torch.Tensor]]
                            ) -> torch.Tensor:
    """KL of the x->x and y->y latent Gaussians to the standard normal, summed.

    Mutual-flow latents are rejected: they come from the small seed set and
    are deliberately left unconstrained.
    """
    total = 0.0
    for flow, (mu, sigma) in self_latents.items():
        if FlowTag(flow).mutual:
            raise ValueError("distribution matching only applies to the self flows")
        total = total + kl_to_standard_normal(mu, sigma)
    return total


def loss_prior_reconstruction(prediction: torch.Tensor, target: torch.Tensor, modal: str) -> torch.Tensor:
    """Mean BCE against multi-hot labels (graph/attr) or MSE against image features."""
    target = torch.as_tensor(target, dtype=prediction.dtype, device=prediction.device)
    if prediction.shape != target.shape:
        raise ValueError(f"prediction {tuple(prediction.shape)} != target {tuple(target.shape)}")
    if modal == "image":
        return F.mse_loss(prediction, target)
    if modal not in ("graph", "attr"):
        raise ValueError(f"unknown modal {modal!r}")
    p = prediction.clamp(BCE_FLOOR, 1.0 - BCE_FLOOR)
    return -(target * torch.log(p) + (1.0 - target) * torch.log1p(-p)).mean()


def loss_post_reconstruction(reconstructed_subs: Mapping[str, torch.Tensor],
                             fuse: Callable[..., torch.Tensor],
                             true_joint: torch.Tensor) -> torch.Tensor:
    """MSE between the re-fused reconstruction and a detached true joint embedding."""
    joint = fuse(reconstructed_subs["graph"], reconstructed_subs["attr"], reconstructed_subs["image"])
    if joint.shape != true_joint.shape:
        raise ValueError(f"reconstructed joint {tuple(joint.shape)} != true {tuple(true_joint.shape)}")
    return F.mse_loss(joint, true_joint.detach())


def total_loss(parts: LossBreakdown, weights: LossWeights,
               flows=ALL_FLOWS, modals=None, require_complete: bool = False):
    """Weighted sum of the loss parts.

    ``sum_f w_f * (w_prior * sum_m prior[f, m] + w_post * post[f])
    + w_dm * sum_m dm[m] + prediction_match``.

    With ``require_complete`` every (flow, modal) prior term and every flow's
    post term must be present.
    """
    if require_complete:
        for flow in flows:
            if flow not in parts.post_reconstruction:
                raise MissingLossTerm(f"post reconstruction for {flow.value}")
            for m in modals or ():
                if (flow, m) not in parts.prior_reconstruction:
                    raise MissingLossTerm(f"prior reconstruction for {flow.value}/{m}")
    total = parts.prediction_match
    for (flow, _), value in parts.prior_reconstruction.items():
        total = total + weights.flow_weights.get(flow, 0.0) * weights.prior * value
    for flow, value in parts.post_reconstruction.items():
        total = total + weights.flow_weights.get(flow, 0.0) * weights.post * value
    for value in parts.distribution_match.values():
        total = total + weights.distribution_match * value
    parts.total = total
    return total
