"""Mutual variational autoencoder: one VAE cell per modal shared by four flows."""

from __future__ import annotations

import enum
from collections.abc import Iterable, Sequence
from dataclasses import dataclass

import torch
from torch import nn

from .encoder import MODALS


class FlowContractError(ValueError):
    """A mutual flow was requested on a batch that is not drawn from S."""


class FlowTag(str, enum.Enum):
    XX = "x->x"
    YY = "y->y"
    XY = "x->y"
    YX = "y->x"

    @property
    def mutual(self) -> bool:
        return self in (FlowTag.XY, FlowTag.YX)

    @property
    def input_side(self) -> str:
        return "source" if self in (FlowTag.XX, FlowTag.XY) else "target"

    @property
    def output_side(self) -> str:
        return "source" if self in (FlowTag.XX, FlowTag.YX) else "target"


SELF_FLOWS = (FlowTag.XX, FlowTag.YY)
MUTUAL_FLOWS = (FlowTag.XY, FlowTag.YX)
ALL_FLOWS = SELF_FLOWS + MUTUAL_FLOWS


@dataclass
class VaeOutput:
    reconstruction: torch.Tensor
    z: torch.Tensor
    mu: torch.Tensor
    sigma: torch.Tensor
    eps: torch.Tensor


def mlp_stack(sizes: Sequence[int], last_activation: type[nn.Module] = nn.ReLU) -> nn.Sequential:
    """Hidden layers of ``Linear -> LayerNorm -> activation``.

    Every layer uses ReLU except the last, which uses ``last_activation``.
    """
    layers: list[nn.Module] = []
    for i, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        act = last_activation if i == len(sizes) - 2 else nn.ReLU
        layers += [nn.Linear(n_in, n_out), nn.LayerNorm(n_out), act()]
    return nn.Sequential(*layers)


class VAECell(nn.Module):
    """Vanilla VAE on one modal's sub-embedding.

    The sigma head predicts a log-variance, so ``sigma = exp(0.5 * head(h))``
    is always positive.
    """

    def __init__(self, dim: int, hidden: Sequence[int] = (300, 300), latent: int = 300):
        super().__init__()
        hidden = tuple(hidden)
        self.dim, self.latent = dim, latent
        self.encoder = mlp_stack((dim, *hidden))
        h_out = hidden[-1] if hidden else dim
        self.mu_head = nn.Linear(h_out, latent)
        self.logvar_head = nn.Linear(h_out, latent)
        self.decoder = mlp_stack((latent, *reversed(hidden)))
        self.out = nn.Linear(hidden[0] if hidden else latent, dim)

    def decode(self, z: torch.Tensor) -> torch.Tensor:
        return self.out(self.decoder(z))

    def forward(self, x: torch.Tensor, eps: torch.Tensor | None = None,
                generator: torch.Generator | None = None) -> VaeOutput:
        if not torch.isfinite(x).all():
            raise ValueError("VAE input contains non-finite values")
        if x.dim() != 2 or x.shape[1] != self.dim:
            raise ValueError(f"VAE input must be [batch, {self.dim}], got {tuple(x.shape)}")
        h = self.encoder(x)
        mu = self.mu_head(h)
        sigma = torch.exp(0.5 * self.logvar_head(h))
        if eps is None:
            eps = torch.randn(mu.shape, generator=generator, dtype=mu.dtype, device=mu.device)
        z = mu + sigma * eps
        return VaeOutput(self.decode(z), z, mu, sigma, eps)


@dataclass
class FlowBatch:
    """Sub-embeddings entering the M-VAE.

    ``supervised`` marks batches drawn from the seed alignment S, row ``i`` of
    ``source`` being aligned with row ``i`` of ``target``; only those batches
    may run the mutual flows.
    """

    source: dict[str, torch.Tensor] | None
    target: dict[str, torch.Tensor] | None
    supervised: bool = False

    def side(self, name: str) -> dict[str, torch.Tensor]:
        subs = self.source if name == "source" else self.target
        if subs is None:
            raise ValueError(f"batch has no {name} sub-embeddings")
        return subs


class MutualVAE(nn.Module):
    """Per-modal VAE cells; one parameter set serves x->x, y->y, x->y and y->x."""

    def __init__(self, dim: int, hidden: Sequence[int] = (300, 300), latent: int = 300,
                 modals: Iterable[str] = MODALS):
        super().__init__()
        self.latent = latent
        self.cells = nn.ModuleDict({m: VAECell(dim, hidden, latent) for m in modals})

    def vae_forward(self, x: torch.Tensor, modal: str, generator: torch.Generator | None = None,
                    deterministic: bool = False, eps: torch.Tensor | None = None) -> VaeOutput:
        """Run one modal's cell; ``deterministic`` uses ``eps = 0`` (z = mu)."""
        if deterministic and eps is None:
            eps = torch.zeros(x.shape[0], self.latent, dtype=x.dtype, device=x.device)
        return self.cells[modal](x, eps=eps, generator=generator)

    def run_flows(self, batch: FlowBatch, flows: Iterable[FlowTag],
                  generator: torch.Generator | None = None,
                  deterministic: bool = False) -> dict[FlowTag, dict[str, VaeOutput]]:
        flows = [FlowTag(f) for f in flows]
        if not batch.supervised and any(f.mutual for f in flows):
            raise FlowContractError("mutual flows need a batch of aligned pairs from S")
        out: dict[FlowTag, dict[str, VaeOutput]] = {}
        for flow in flows:
            subs = batch.side(flow.input_side)
            out[flow] = {m: self.vae_forward(subs[m], m, generator, deterministic)
                         for m in self.cells}
        return out

    def sample_unconditional(self, count: int, generator: torch.Generator | None = None
                             ) -> dict[str, torch.Tensor]:
        """Decode ``z ~ N(0, I)`` with every modal's decoder."""
        if count < 1:
            raise ValueError("count must be >= 1")
        dtype = next(self.parameters()).dtype
        out = {}
        for m, cell in self.cells.items():
            z = torch.randn(count, self.latent, generator=generator, dtype=dtype)
            out[m] = cell.decode(z)
        return out
