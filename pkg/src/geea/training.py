"""Joint training of the encoder, the mutual VAE and the feature decoders.

Each step takes one supervised batch of seed pairs (mutual flows, prediction
matching) and one unsupervised batch of source and target entities (self
flows, distribution matching) and minimizes the weighted sum of every loss
with a single optimizer step.
"""

from __future__ import annotations

import copy
import json
import logging
import math
import os
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import TextIO

import numpy as np
import torch
from torch import nn

from .checkpoint import load_params, save_params
from .decoders import ConcreteDecoders, concrete_features
from .encoder import MODALS, EEAEncoder, ModalEmbeddings
from .evalmetrics import evaluate_alignment
from .kgdata import AlignmentDataset
from .losses import (
    LossBreakdown,
    LossWeights,
    loss_distribution_match,
    loss_post_reconstruction,
    loss_prediction_match,
    loss_prior_reconstruction,
    total_loss,
)
from .mvae import MUTUAL_FLOWS, SELF_FLOWS, FlowBatch, FlowTag, MutualVAE

logger = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainConfig:
    epochs: int = 200
    batch_size: int = 2500
    unsup_batch_size: int = 2800
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    dropout: float = 0.5
    weights: LossWeights = field(default_factory=LossWeights)
    dim: int = 300
    joint_dim: int = 300
    gnn_layers: int = 2
    vae_hidden: tuple[int, ...] = (300, 300)
    latent: int = 300
    decoder_hidden: tuple[int, ...] = (300, 1000)
    temperature: float = 0.1
    grad_clip: float | None = 5.0
    patience: int = 20
    seed: int = 0
    use_prediction: bool = True
    use_distribution: bool = True
    use_prior: bool = True
    use_post: bool = True

    def __post_init__(self):
        if isinstance(self.weights, dict):
            self.weights = LossWeights.from_dict(self.weights)
        self.vae_hidden = tuple(self.vae_hidden)
        self.decoder_hidden = tuple(self.decoder_hidden)
        if self.batch_size < 2 or self.unsup_batch_size < 2:
            raise ValueError("batch sizes must be >= 2")
        if self.learning_rate < 0:
            raise ValueError("learning rate must be non-negative")
        if self.optimizer.lower() != "adam":
            raise ValueError(f"unsupported optimizer {self.optimizer!r}")

    def replace(self, **changes) -> TrainConfig:
        return replace(self, **changes)

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["weights"] = self.weights.to_dict()
        d["vae_hidden"] = list(self.vae_hidden)
        d["decoder_hidden"] = list(self.decoder_hidden)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> TrainConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known - {"name"}
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**{k: v for k, v in d.items() if k in known})

    @classmethod
    def load(cls, path: str | os.PathLike) -> TrainConfig:
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def save(self, path: str | os.PathLike) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


class GEEAModel(nn.Module):
    def __init__(self, dataset: AlignmentDataset, config: TrainConfig):
        super().__init__()
        self.encoder = EEAEncoder(dataset.source, dataset.target, config.dim, config.joint_dim,
                                  config.gnn_layers, config.dropout)
        self.mvae = MutualVAE(config.dim, config.vae_hidden, config.latent)
        self.decoders = ConcreteDecoders(self.encoder.kgs, config.dim, config.decoder_hidden)
        for module in [*self.mvae.modules(), *self.decoders.modules()]:
            if isinstance(module, nn.Linear):
                nn.init.xavier_uniform_(module.weight)
                nn.init.zeros_(module.bias)


def init_model(dataset: AlignmentDataset, config: TrainConfig) -> GEEAModel:
    torch.manual_seed(config.seed)
    return GEEAModel(dataset, config)


@dataclass
class TrainState:
    model: GEEAModel
    optimizer: torch.optim.Optimizer
    generator: torch.Generator
    epoch: int = 0
    step: int = 0
    best_valid_mrr: float = -math.inf
    best_epoch: int = 0
    best_params: dict[str, torch.Tensor] | None = None
    history: list[dict] = field(default_factory=list)


def init_state(dataset: AlignmentDataset, config: TrainConfig) -> TrainState:
    model = init_model(dataset, config)
    optimizer = torch.optim.Adam(model.parameters(), lr=config.learning_rate)
    generator = torch.Generator().manual_seed(config.seed)
    return TrainState(model, optimizer, generator)


def trainable_targets(dataset: AlignmentDataset) -> np.ndarray:
    """Target entities visible during training (dangling counterparts excluded)."""
    ids = np.ones(dataset.target.entity_count, dtype=bool)
    ids[dataset.dangling_pairs[:, 1]] = False
    return np.flatnonzero(ids)


def _chunks(ids: np.ndarray, size: int, rng: np.random.Generator) -> list[np.ndarray]:
    if len(ids) == 0:
        return []
    perm = ids[rng.permutation(len(ids))]
    return np.array_split(perm, math.ceil(len(ids) / size))


def _reconstruction_terms(model: GEEAModel, dataset: AlignmentDataset, config: TrainConfig,
                          flows: dict[FlowTag, dict], truth: dict[str, ModalEmbeddings],
                          ids: dict[str, np.ndarray], parts: LossBreakdown) -> None:
    kgs = {"source": dataset.source, "target": dataset.target}
    for flow, outputs in flows.items():
        side = flow.output_side
        recon = {m: outputs[m].reconstruction for m in MODALS}
        if config.use_prior:
            for m in MODALS:
                pred = model.decoders.decode_modal(recon[m], m, side)
                labels = concrete_features(kgs[side], ids[side], m, pred.shape[1])
                parts.prior_reconstruction[(flow, m)] = loss_prior_reconstruction(pred, labels, m)
        if config.use_post:
            parts.post_reconstruction[flow] = loss_post_reconstruction(
                recon, model.encoder.fuse, truth[side].joint)


def compute_losses(model: GEEAModel, dataset: AlignmentDataset, config: TrainConfig,
                   sup_pairs: np.ndarray, unsup_x: np.ndarray, unsup_y: np.ndarray,
                   generator: torch.Generator | None = None,
                   deterministic: bool = False) -> LossBreakdown:
    """Loss breakdown (with total) of one supervised and one unsupervised batch."""
    src_all = model.encoder.encode_all("source")
    tgt_all = model.encoder.encode_all("target")
    parts = LossBreakdown()
    needs_vae = config.use_prior or config.use_post

    if len(sup_pairs):
        xs, ys = src_all.select(sup_pairs[:, 0]), tgt_all.select(sup_pairs[:, 1])
        if config.use_prediction and len(sup_pairs) >= 2:
            parts.prediction_match = loss_prediction_match(xs.joint, ys.joint, config.temperature)
        if needs_vae:
            flows = model.mvae.run_flows(FlowBatch(xs.subs(), ys.subs(), supervised=True),
                                         MUTUAL_FLOWS, generator, deterministic)
            _reconstruction_terms(model, dataset, config, flows, {"source": xs, "target": ys},
                                  {"source": sup_pairs[:, 0], "target": sup_pairs[:, 1]}, parts)

    if len(unsup_x) and len(unsup_y) and (needs_vae or config.use_distribution):
        xu, yu = src_all.select(unsup_x), tgt_all.select(unsup_y)
        flows = model.mvae.run_flows(FlowBatch(xu.subs(), yu.subs()), SELF_FLOWS,
                                     generator, deterministic)
        if config.use_distribution:
            for m in MODALS:
                parts.distribution_match[m] = loss_distribution_match(
                    {f: (flows[f][m].mu, flows[f][m].sigma) for f in SELF_FLOWS})
        if needs_vae:
            _reconstruction_terms(model, dataset, config, flows, {"source": xu, "target": yu},
                                  {"source": unsup_x, "target": unsup_y}, parts)

    total_loss(parts, config.weights)
    return parts


def _check_finite(parts: LossBreakdown, epoch: int, step: int) -> None:
    if not torch.isfinite(torch.as_tensor(parts.total)).all():
        raise TrainingDiverged(
            f"non-finite loss at epoch {epoch} step {step}: {json.dumps(parts.as_floats())}")


def train_epoch(state: TrainState, dataset: AlignmentDataset, config: TrainConfig,
                rng: np.random.Generator, loss_log: TextIO | None = None
                ) -> tuple[TrainState, dict]:
    """One pass over S and over every source/target entity; returns mean losses."""
    model = state.model
    model.train()
    sup = dataset.seed_alignments
    sup_batches = _chunks(np.arange(len(sup)), config.batch_size, rng)
    x_batches = _chunks(np.arange(dataset.source.entity_count), config.unsup_batch_size, rng)
    y_batches = _chunks(trainable_targets(dataset), config.unsup_batch_size, rng)
    n_steps = max(len(sup_batches), len(x_batches), len(y_batches), 1)
    empty = np.zeros(0, dtype=np.int64)

    sums: dict[str, float] = {}
    for i in range(n_steps):
        sup_idx = sup_batches[i % len(sup_batches)] if sup_batches else empty
        ux = x_batches[i % len(x_batches)] if x_batches else empty
        uy = y_batches[i % len(y_batches)] if y_batches else empty
        parts = compute_losses(model, dataset, config, sup[sup_idx], ux, uy, state.generator)
        _check_finite(parts, state.epoch, i)
        state.optimizer.zero_grad(set_to_none=True)
        if isinstance(parts.total, torch.Tensor) and parts.total.requires_grad:
            parts.total.backward()
            if config.grad_clip:
                nn.utils.clip_grad_norm_(model.parameters(), config.grad_clip)
            state.optimizer.step()
        state.step += 1
        if loss_log is not None:
            loss_log.write(parts.to_json(state.step) + "\n")
        flat = parts.as_floats()
        for key in ("l_ns", "l_dm", "total"):
            sums[key] = sums.get(key, 0.0) + flat[key]
        sums["l_prior"] = sums.get("l_prior", 0.0) + sum(flat["l_prior_by_flow_modal"].values())
        sums["l_post"] = sums.get("l_post", 0.0) + sum(flat["l_post_by_flow"].values())
    state.epoch += 1
    metrics = {k: v / n_steps for k, v in sums.items()}
    metrics["epoch"] = state.epoch
    metrics["steps"] = n_steps
    return state, metrics


@torch.no_grad()
def evaluation_losses(model: GEEAModel, dataset: AlignmentDataset, config: TrainConfig) -> LossBreakdown:
    """Deterministic loss breakdown: eval mode, ``eps = 0``, all of S and every entity."""
    was_training = model.training
    model.eval()
    try:
        return compute_losses(model, dataset, config, dataset.seed_alignments,
                              np.arange(dataset.source.entity_count), trainable_targets(dataset),
                              deterministic=True)
    finally:
        model.train(was_training)


@torch.no_grad()
def embed_all(model: GEEAModel, target_kg=None) -> tuple[torch.Tensor, torch.Tensor]:
    """Joint embeddings of every source and target entity, in eval mode."""
    was_training = model.training
    model.eval()
    try:
        src = model.encoder.encode_all("source").joint
        tgt = model.encoder.encode_all("target", target_kg).joint
    finally:
        model.train(was_training)
    return src, tgt


def alignment_report(model: GEEAModel, pairs: np.ndarray):
    src, tgt = embed_all(model)
    return evaluate_alignment(src, tgt, pairs)


def fit(dataset: AlignmentDataset, config: TrainConfig, loss_log: TextIO | None = None,
        progress: Callable[[str], None] | None = None,
        on_epoch: Callable[[TrainState, dict], None] | None = None) -> TrainState:
    """Train until validation MRR stops improving for ``patience`` epochs.

    The returned state holds the best-validation parameters. With an empty
    validation split the model trains for ``epochs`` epochs and keeps the
    final parameters.
    """
    state = init_state(dataset, config)
    rng = np.random.default_rng(config.seed)
    has_valid = len(dataset.valid_alignments) > 0
    if not has_valid:
        logger.warning("empty validation split; training for a fixed %d epochs", config.epochs)
    bad_epochs = 0
    for _ in range(config.epochs):
        state, metrics = train_epoch(state, dataset, config, rng, loss_log)
        if has_valid:
            mrr = alignment_report(state.model, dataset.valid_alignments).mrr
            metrics["valid_mrr"] = mrr
            if mrr > state.best_valid_mrr:
                state.best_valid_mrr, state.best_epoch = mrr, state.epoch
                state.best_params = copy.deepcopy(state.model.state_dict())
                bad_epochs = 0
            else:
                bad_epochs += 1
        state.history.append(metrics)
        if on_epoch:
            on_epoch(state, metrics)
        if progress:
            progress(json.dumps({k: round(v, 6) if isinstance(v, float) else v
                                 for k, v in metrics.items()}))
        if has_valid and bad_epochs > config.patience:
            break
    if state.best_params is not None:
        state.model.load_state_dict(state.best_params)
    return state


# ------------------------------------------------------------------ checkpoint

PARAMS_FILE = "params.zip"
CONFIG_FILE = "config.json"
META_FILE = "meta.json"


def save_checkpoint(state: TrainState, config: TrainConfig, directory: str | os.PathLike,
                    data_dir: str | os.PathLike | None = None) -> Path:
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    save_params(out / PARAMS_FILE, state.model.state_dict())
    config.save(out / CONFIG_FILE)
    meta = {
        "epoch": state.epoch,
        "best_epoch": state.best_epoch,
        "best_valid_mrr": None if math.isinf(state.best_valid_mrr) else state.best_valid_mrr,
        "data": str(Path(data_dir).resolve()) if data_dir else None,
    }
    with open(out / META_FILE, "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return out


def load_checkpoint(directory: str | os.PathLike, dataset: AlignmentDataset
                    ) -> tuple[GEEAModel, TrainConfig, dict]:
    root = Path(directory)
    config = TrainConfig.load(root / CONFIG_FILE)
    meta = json.loads((root / META_FILE).read_text(encoding="utf-8"))
    model = GEEAModel(dataset, config)
    params = load_params(root / PARAMS_FILE)
    model.load_state_dict(params)
    model.eval()
    return model, config, meta


def default_config_names() -> Sequence[str]:
    return sorted(p.stem for p in (Path(__file__).parent / "configs").glob("*.json"))


def load_named_config(name: str) -> TrainConfig:
    path = Path(__file__).parent / "configs" / f"{name}.json"
    if not path.exists():
        raise FileNotFoundError(f"no bundled config {name!r}; choose from {default_config_names()}")
    return TrainConfig.load(path)


