"""Alignment ranking metrics and entity-synthesis quality metrics."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from collections.abc import Iterable, Sequence
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.linalg
import torch

from .decoders import concrete_features
from .encoder import MODALS
from .kernels import true_ranks
from .losses import loss_prior_reconstruction
from .mvae import FlowBatch, FlowTag

logger = logging.getLogger(__name__)

DEFAULT_KS = (1, 10)


@dataclass
class AlignmentReport:
    """Hits@k and MRR; ``directions`` holds the x->y and y->x halves when averaged."""

    hits_at: dict[int, float]
    mrr: float
    ranks: list[int] = field(default_factory=list)
    directions: dict[str, AlignmentReport] = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {"hits_at": {str(k): v for k, v in self.hits_at.items()}, "mrr": self.mrr}
        if self.directions:
            out["directions"] = {k: v.to_dict() for k, v in self.directions.items()}
        else:
            out["ranks"] = list(self.ranks)
        return out

    def table(self) -> str:
        rows = [("direction", *[f"Hits@{k}" for k in self.hits_at], "MRR")]
        for name, rep in [*self.directions.items(), ("average", self)]:
            rows.append((name, *[f"{v:.4f}" for v in rep.hits_at.values()], f"{rep.mrr:.4f}"))
        widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
        return "\n".join("  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in rows)


def report_from_ranks(ranks: Sequence[int], ks: Iterable[int] = DEFAULT_KS) -> AlignmentReport:
    ranks = np.asarray(ranks, dtype=np.int64)
    if ranks.size == 0:
        raise ValueError("no ranks to summarize")
    if ranks.min() < 1:
        raise ValueError("ranks are 1-based")
    hits = {int(k): float(np.mean(ranks <= k)) for k in sorted(ks)}
    return AlignmentReport(hits, float(np.mean(1.0 / ranks)), ranks.tolist())


def cosine_scores(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    a = a / np.maximum(np.linalg.norm(a, axis=1, keepdims=True), 1e-12)
    b = b / np.maximum(np.linalg.norm(b, axis=1, keepdims=True), 1e-12)
    return a @ b.T


def _to_numpy(x) -> np.ndarray:
    if isinstance(x, torch.Tensor):
        return x.detach().cpu().double().numpy()
    return np.asarray(x, dtype=np.float64)


def directional_ranks(query: np.ndarray, candidates: np.ndarray, truth: np.ndarray) -> np.ndarray:
    """Rank of ``candidates[truth[i]]`` for query ``i`` by cosine similarity.

    Ties are broken by ascending candidate position.
    """
    return true_ranks(cosine_scores(query, candidates), truth)


def evaluate_alignment(source_joint, target_joint, pairs, ks: Iterable[int] = DEFAULT_KS
                       ) -> AlignmentReport:
    """Hits@k and MRR of ``pairs`` in both directions, averaged.

    Candidates are the counterpart entities of ``pairs`` (the standard
    protocol); in each direction a query is ranked against all of them.
    """
    src, tgt = _to_numpy(source_joint), _to_numpy(target_joint)
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    if len(pairs) == 0:
        raise ValueError("no pairs to evaluate")
    if pairs[:, 0].max() >= len(src) or pairs[:, 1].max() >= len(tgt) or pairs.min() < 0:
        raise IndexError("pair references an entity without an embedding")
    truth = np.arange(len(pairs))
    xs, ys = src[pairs[:, 0]], tgt[pairs[:, 1]]
    forward = report_from_ranks(directional_ranks(xs, ys, truth), ks)
    backward = report_from_ranks(directional_ranks(ys, xs, truth), ks)
    hits = {k: (forward.hits_at[k] + backward.hits_at[k]) / 2 for k in forward.hits_at}
    return AlignmentReport(hits, (forward.mrr + backward.mrr) / 2, forward.ranks + backward.ranks,
                           {"x->y": forward, "y->x": backward})


# ------------------------------------------------------------------------- FID

def gaussian_fit(samples) -> tuple[np.ndarray, np.ndarray]:
    x = _to_numpy(samples)
    if len(x) < 2:
        raise ValueError("need at least two samples for a covariance")
    return x.mean(axis=0), np.atleast_2d(np.cov(x, rowvar=False))


def frechet_distance(mu1, cov1, mu2, cov2) -> float:
    """``|mu1 - mu2|^2 + Tr(C1 + C2 - 2 (C1 C2)^(1/2))``.

    Returns ``inf`` when the matrix square root fails; results within 1e-6
    of zero are clamped to 0.
    """
    mu1, mu2 = np.atleast_1d(mu1).astype(np.float64), np.atleast_1d(mu2).astype(np.float64)
    c1 = np.atleast_2d(cov1).astype(np.float64)
    c2 = np.atleast_2d(cov2).astype(np.float64)
    c1, c2 = (c1 + c1.T) / 2, (c2 + c2.T) / 2
    try:
        covmean = scipy.linalg.sqrtm(c1 @ c2)
    except (ValueError, np.linalg.LinAlgError):
        return math.inf
    if not np.isfinite(covmean).all():
        return math.inf
    if np.iscomplexobj(covmean):
        if np.abs(covmean.imag).max() > 1e-3 * max(1.0, np.abs(covmean.real).max()):
            return math.inf
        covmean = covmean.real
    diff = mu1 - mu2
    value = float(diff @ diff + np.trace(c1) + np.trace(c2) - 2.0 * np.trace(covmean))
    if value < 1e-6:
        if value < -1e-6 * max(1.0, float(np.trace(c1) + np.trace(c2))):
            logger.warning("Frechet distance %.3g below zero; clamped", value)
        return 0.0
    return value


def fid_from_samples(generated, real) -> float:
    return frechet_distance(*gaussian_fit(generated), *gaussian_fit(real))


# ------------------------------------------------------------------- synthesis

@dataclass
class SynthesisReport:
    """PRE and RE are reported x100, i.e. in units of 1e-2."""

    pre: float
    re: float
    fid: float
    pre_by_modal: dict[str, float] = field(default_factory=dict)
    divergent: bool = False

    def to_dict(self) -> dict:
        d = asdict(self)
        d["fid"] = "inf" if math.isinf(self.fid) else self.fid
        return d


@torch.no_grad()
def evaluate_synthesis(model, dataset, fid_samples: int | None = None,
                       seed: int = 0) -> SynthesisReport:
    """Score conditional and unconditional synthesis of dangling counterparts.

    Each dangling pair runs the x->y flow with ``eps = 0``; PRE averages the
    per-modal prior-reconstruction loss against the held-out target features
    and RE is the MSE between the re-fused reconstruction and the encoder's
    joint embedding of the true (unpurged) target. FID compares ``fid_samples``
    unconditional samples (default: one per target entity) with the real
    target joint embeddings.
    """
    pairs = dataset.dangling_pairs
    if len(pairs) == 0:
        raise ValueError("dataset has no dangling pairs")
    was_training = model.training
    model.eval()
    try:
        reference = dataset.reference_target
        src = model.encoder.encode("source", pairs[:, 0])
        true_all = model.encoder.encode_all("target", reference)
        true_joint = true_all.joint[torch.as_tensor(pairs[:, 1].copy())]
        flows = model.mvae.run_flows(FlowBatch(src.subs(), None, supervised=True), [FlowTag.XY],
                                     deterministic=True)[FlowTag.XY]
        recon = {m: out.reconstruction for m, out in flows.items()}
        pre_by_modal = {}
        for m in MODALS:
            pred = model.decoders.decode_modal(recon[m], m, "target")
            labels = concrete_features(reference, pairs[:, 1], m, pred.shape[1])
            pre_by_modal[m] = 100.0 * float(loss_prior_reconstruction(pred, labels, m))
        pre = float(np.mean(list(pre_by_modal.values())))
        joint = model.encoder.fuse_subs(recon)
        re = 100.0 * float(torch.mean((joint - true_joint) ** 2))

        gen = torch.Generator().manual_seed(seed)
        n = fid_samples or reference.entity_count
        sampled = model.encoder.fuse_subs(model.mvae.sample_unconditional(n, gen))
        fid = fid_from_samples(sampled, true_all.joint)
    finally:
        model.train(was_training)
    divergent = not all(math.isfinite(v) for v in (pre, re, fid))
    return SynthesisReport(pre, re, fid, pre_by_modal, divergent)


# ----------------------------------------------------------------------- sweep

def subsample_seeds(dataset, ratio: float, seed: int = 0):
    """Keep ``round(ratio * |S|)`` seed pairs (at least two); the rest are dropped."""
    from dataclasses import replace

    if not 0.0 < ratio <= 1.0:
        raise ValueError(f"ratio must be in (0, 1], got {ratio}")
    s = dataset.seed_alignments
    if ratio == 1.0:
        return dataset
    keep = max(2, int(round(ratio * len(s))))
    idx = np.sort(np.random.default_rng(seed).permutation(len(s))[:keep])
    return replace(dataset, seed_alignments=s[idx])


def sweep_training_ratio(dataset, ratios: Sequence[float], config, seeds: Sequence[int] = (0,),
                         progress=None) -> list[dict]:
    """Train and evaluate at each ratio of seed alignments; one row per (ratio, seed, metric)."""
    from .training import fit, embed_all

    rows = []
    for ratio in ratios:
        for seed in seeds:
            cfg = config.replace(seed=seed)
            sub = subsample_seeds(dataset, ratio, seed)
            state = fit(sub, cfg)
            src, tgt = embed_all(state.model)
            report = evaluate_alignment(src, tgt, dataset.test_alignments)
            metrics = {**{f"hits@{k}": v for k, v in report.hits_at.items()}, "mrr": report.mrr}
            for name, value in metrics.items():
                rows.append({"ratio": ratio, "seed": seed, "metric": name, "value": value})
            if progress:
                progress(f"ratio={ratio} seed={seed} mrr={report.mrr:.4f}")
    return rows


def rows_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=["ratio", "seed", "metric", "value"], lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()


def dumps(report) -> str:
    return json.dumps(report.to_dict(), indent=2, sort_keys=True)
