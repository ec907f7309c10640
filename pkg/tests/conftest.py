import numpy as np
import pytest
import torch

from geea.kgdata import SyntheticConfig, generate_synthetic_pair
from geea.training import TrainConfig

torch.set_num_threads(1)


def tiny_config(**changes) -> TrainConfig:
    """A model small enough for per-test training runs."""
    base = TrainConfig(epochs=3, batch_size=8, unsup_batch_size=16, learning_rate=1e-3,
                       dropout=0.0, dim=8, joint_dim=8, gnn_layers=1, vae_hidden=(8,),
                       latent=4, decoder_hidden=(8, 8), patience=5, seed=0)
    return base.replace(**changes)


@pytest.fixture
def small_pair():
    return generate_synthetic_pair(SyntheticConfig(entities=30, relations=4, attributes=5, d_img=3),
                                   seed=1)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def finite_difference_error(loss_fn, param: torch.Tensor, coords: int = 6, step: float = 1e-5,
                            seed: int = 0) -> float:
    """Largest relative error between autograd and central differences.

    ``loss_fn`` maps no arguments to a scalar and must read ``param`` (a
    float64 leaf) on every call. A few random coordinates are probed.
    """
    param.grad = None
    loss_fn().backward()
    analytic = param.grad.detach().clone().reshape(-1)
    flat = param.data.view(-1)
    picks = np.random.default_rng(seed).choice(flat.numel(), size=min(coords, flat.numel()),
                                               replace=False)
    worst = 0.0
    with torch.no_grad():
        for i in picks.tolist():
            old = flat[i].item()
            flat[i] = old + step
            up = loss_fn().item()
            flat[i] = old - step
            down = loss_fn().item()
            flat[i] = old
            numeric = (up - down) / (2 * step)
            scale = max(abs(numeric), abs(analytic[i].item()), 1e-6)
            worst = max(worst, abs(numeric - analytic[i].item()) / scale)
    return worst


@pytest.fixture
def fd_error():
    return finite_difference_error


# one line per acceptance criterion, filled by test_acceptance.py
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
