import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings, strategies as st

from geea.losses import (
    LossBreakdown,
    LossWeights,
    MissingLossTerm,
    kl_to_standard_normal,
    loss_distribution_match,
    loss_post_reconstruction,
    loss_prediction_match,
    loss_prior_reconstruction,
    total_loss,
)
from geea.mvae import ALL_FLOWS, FlowTag

D = torch.float64


def _sig(s):
    return 1.0 / (1.0 + math.exp(-s))


def _cos(a, b):
    return sum(x * y for x, y in zip(a, b)) / (math.sqrt(sum(x * x for x in a)) * math.sqrt(sum(y * y for y in b)))


def _scalar_prediction_loss(xs, ys, tau):
    n = len(xs)

    def direction(q, c):
        total = 0.0
        for i in range(n):
            term = -math.log(_sig(_cos(q[i], c[i]) / tau))
            neg = sum(-math.log(1 - _sig(_cos(q[i], c[j]) / tau)) for j in range(n) if j != i)
            total += term + neg / (n - 1)
        return total / n

    return direction(xs, ys) + direction(ys, xs)


def test_prediction_loss_matches_scalar_oracle(rng):
    xs, ys = rng.standard_normal((4, 3)), rng.standard_normal((4, 3))
    got = loss_prediction_match(torch.tensor(xs), torch.tensor(ys), temperature=0.5)
    assert got.item() == pytest.approx(_scalar_prediction_loss(xs.tolist(), ys.tolist(), 0.5), rel=1e-12)


def test_prediction_loss_prefers_aligned_pair():
    e = torch.eye(2, dtype=D)
    aligned = loss_prediction_match(e, e, temperature=1.0)
    swapped = loss_prediction_match(e, e[[1, 0]], temperature=1.0)
    assert aligned < swapped


def test_prediction_loss_single_pair_without_negatives():
    x, y = torch.tensor([[1.0, 2.0]], dtype=D), torch.tensor([[2.0, 1.0]], dtype=D)
    s = 0.8 / 0.1
    got = loss_prediction_match(x, y, 0.1, negatives=False, symmetric=False)
    assert got.item() == pytest.approx(-math.log(_sig(s)), rel=1e-12)
    with pytest.raises(ValueError):
        loss_prediction_match(x, y)


def test_kl_closed_form_examples():
    assert kl_to_standard_normal(torch.zeros(3, 2, dtype=D), torch.ones(3, 2, dtype=D)).item() == 0.0
    one = kl_to_standard_normal(torch.ones(1, 1, dtype=D), torch.ones(1, 1, dtype=D))
    assert one.item() == pytest.approx(0.5, abs=1e-15)
    with pytest.raises(ValueError):
        kl_to_standard_normal(torch.zeros(1, 1), torch.zeros(1, 1))


def test_kl_matches_monte_carlo(rng):
    for _ in range(5):
        mu, sigma = rng.normal(0, 1), rng.uniform(0.3, 2.0)
        eps = rng.standard_normal(50000)
        z = mu + sigma * np.concatenate([eps, -eps])  # antithetic pairs
        log_q = -0.5 * ((z - mu) / sigma) ** 2 - math.log(sigma)
        log_p = -0.5 * z ** 2
        mc = float(np.mean(log_q - log_p))
        got = kl_to_standard_normal(torch.tensor([[mu]]), torch.tensor([[sigma]])).item()
        assert abs(got - mc) <= 0.02 * max(abs(got), 0.05)


def test_distribution_match_sums_self_flows():
    mu, sigma = torch.ones(2, 1, dtype=D), torch.ones(2, 1, dtype=D)
    both = loss_distribution_match({FlowTag.XX: (mu, sigma), FlowTag.YY: (0 * mu, sigma)})
    assert both.item() == pytest.approx(0.5)
    with pytest.raises(ValueError):
        loss_distribution_match({FlowTag.XY: (mu, sigma)})


def test_bce_examples():
    label = torch.tensor([[1.0, 0.0, 1.0]], dtype=D)
    assert loss_prior_reconstruction(label.clone(), label, "graph").item() < 2e-7
    half = torch.full((2, 5), 0.5, dtype=D)
    assert loss_prior_reconstruction(half, torch.zeros(2, 5), "attr").item() == pytest.approx(math.log(2))


def test_bce_matches_scalar_oracle():
    pred = [[0.2, 0.9, 0.4], [0.7, 0.1, 0.5], [0.3, 0.6, 0.8]]
    label = [[0, 1, 0], [1, 0, 1], [0, 1, 1]]
    expected = -sum(y * math.log(p) + (1 - y) * math.log(1 - p)
                    for pr, lr in zip(pred, label) for p, y in zip(pr, lr)) / 9
    got = loss_prior_reconstruction(torch.tensor(pred, dtype=D), np.array(label), "graph")
    assert got.item() == pytest.approx(expected, rel=1e-12)


def test_image_uses_mse():
    pred = torch.tensor([[1.0, 2.0]], dtype=D)
    assert loss_prior_reconstruction(pred, torch.zeros(1, 2), "image").item() == pytest.approx(2.5)
    with pytest.raises(ValueError):
        loss_prior_reconstruction(pred, torch.zeros(1, 3), "image")
    with pytest.raises(ValueError):
        loss_prior_reconstruction(pred, torch.zeros(1, 2), "sound")


def _identity_fuse(g, a, i):
    return g + a + i


def test_post_loss_examples():
    subs = {m: torch.ones(2, 3, dtype=D) for m in ("graph", "attr", "image")}
    assert loss_post_reconstruction(subs, _identity_fuse, torch.full((2, 3), 3.0, dtype=D)).item() == 0
    zero = torch.zeros(2, 3, dtype=D)
    base = loss_post_reconstruction(subs, _identity_fuse, zero)
    double = loss_post_reconstruction({m: 2 * v for m, v in subs.items()}, _identity_fuse, zero)
    assert double.item() == pytest.approx(4 * base.item())


def test_post_loss_blocks_true_joint_gradient():
    w = torch.randn(3, 3, dtype=D, requires_grad=True)
    true_joint = torch.randn(2, 3, dtype=D) @ w
    recon = {m: torch.randn(2, 3, dtype=D, requires_grad=True) for m in ("graph", "attr", "image")}
    loss_post_reconstruction(recon, _identity_fuse, true_joint).backward()
    assert w.grad is None
    assert all(v.grad is not None for v in recon.values())


def test_loss_gradients_match_finite_differences(rng, fd_error):
    x = torch.tensor(rng.standard_normal((5, 4)), requires_grad=True)
    y = torch.tensor(rng.standard_normal((5, 4)))
    assert fd_error(lambda: loss_prediction_match(x, y, 0.1), x) < 1e-4
    mu = torch.tensor(rng.standard_normal((5, 3)), requires_grad=True)
    sigma = torch.tensor(rng.uniform(0.5, 1.5, (5, 3)))
    assert fd_error(lambda: kl_to_standard_normal(mu, sigma), mu) < 1e-4
    logits = torch.tensor(rng.standard_normal((5, 6)), requires_grad=True)
    labels = (rng.random((5, 6)) < 0.3).astype(float)
    assert fd_error(lambda: loss_prior_reconstruction(torch.sigmoid(logits), labels, "graph"),
                    logits) < 1e-4


def test_total_of_zero_parts_is_zero():
    parts = LossBreakdown(
        0.0, {"graph": 0.0}, {(f, "graph"): 0.0 for f in ALL_FLOWS}, {f: 0.0 for f in ALL_FLOWS})
    assert total_loss(parts, LossWeights()) == 0.0


def test_total_weights_each_part():
    w = LossWeights()
    cases = [
        (LossBreakdown(prior_reconstruction={(FlowTag.XY, "attr"): 2.0}), 5.0 * 1.0 * 2.0),
        (LossBreakdown(post_reconstruction={FlowTag.XX: 2.0}), 1.0 * 1.0 * 2.0),
        (LossBreakdown(distribution_match={"image": 2.0}), 0.5 * 2.0),
        (LossBreakdown(prediction_match=2.0), 2.0),
    ]
    for parts, expected in cases:
        assert total_loss(parts, w) == pytest.approx(expected)


@settings(max_examples=40, deadline=None)
@given(values=st.lists(st.floats(0, 10), min_size=13, max_size=13),
       flow_w=st.lists(st.floats(0, 5), min_size=4, max_size=4),
       term_w=st.lists(st.floats(0, 5), min_size=3, max_size=3))
def test_total_matches_independent_sum(values, flow_w, term_w):
    weights = LossWeights.from_dict({"flow_weights": flow_w, "term_weights": term_w})
    it = iter(values)
    parts = LossBreakdown(
        prediction_match=next(it),
        distribution_match={m: next(it) for m in ("graph", "attr")},
        prior_reconstruction={(f, m): next(it) for f in ALL_FLOWS[:3] for m in ("graph", "image")},
        post_reconstruction={f: next(it) for f in ALL_FLOWS[1:]},
    )
    fw = dict(zip(ALL_FLOWS, flow_w))
    expected = parts.prediction_match
    expected += sum(term_w[0] * v for v in parts.distribution_match.values())
    expected += sum(fw[f] * term_w[1] * v for (f, _), v in parts.prior_reconstruction.items())
    expected += sum(fw[f] * term_w[2] * v for f, v in parts.post_reconstruction.items())
    assert total_loss(parts, weights) == pytest.approx(expected, rel=1e-12, abs=1e-12)


def test_missing_term_detected():
    with pytest.raises(MissingLossTerm):
        total_loss(LossBreakdown(), LossWeights(), modals=("graph",), require_complete=True)


def test_weights_round_trip_and_validation():
    w = LossWeights()
    assert LossWeights.from_dict(w.to_dict()).to_dict() == w.to_dict()
    assert w.to_dict() == {"flow_weights": [1.0, 1.0, 5.0, 5.0], "term_weights": [0.5, 1.0, 1.0]}
    with pytest.raises(ValueError):
        LossWeights(distribution_match=-1.0)
