import io
import json
import logging

import numpy as np
import pytest
import torch

from geea.kgdata import AlignmentDataset, generate_synthetic_pair
from geea.mvae import FlowTag
from geea.training import (
    TrainConfig,
    compute_losses,
    default_config_names,
    evaluation_losses,
    fit,
    init_state,
    load_checkpoint,
    load_named_config,
    save_checkpoint,
    train_epoch,
)

from conftest import tiny_config


def test_config_round_trip(tmp_path):
    cfg = tiny_config(seed=3)
    cfg.save(tmp_path / "c.json")
    back = TrainConfig.load(tmp_path / "c.json")
    assert back.to_dict() == cfg.to_dict()
    with pytest.raises(ValueError, match="unknown"):
        TrainConfig.from_dict({"epochz": 1})
    with pytest.raises(ValueError):
        TrainConfig(batch_size=1)
    with pytest.raises(ValueError):
        TrainConfig(optimizer="sgd")


def test_bundled_configs_load():
    names = default_config_names()
    assert {"synthetic", "dbp15k_zh_en", "fb15k_db15k"} <= set(names)
    for name in names:
        cfg = load_named_config(name)
        assert cfg.weights.to_dict()["flow_weights"] == [1.0, 1.0, 5.0, 5.0]
    assert load_named_config("dbp15k_ja_en").batch_size == 2500
    with pytest.raises(FileNotFoundError):
        load_named_config("nope")


def test_losses_cover_every_flow_and_modal(small_pair):
    cfg = tiny_config()
    state = init_state(small_pair, cfg)
    parts = evaluation_losses(state.model, small_pair, cfg)
    assert set(parts.post_reconstruction) == set(FlowTag)
    assert len(parts.prior_reconstruction) == 12
    assert set(parts.distribution_match) == {"graph", "attr", "image"}
    assert float(parts.prediction_match) > 0


def test_ablation_switches_remove_terms(small_pair):
    cfg = tiny_config(use_prediction=False, use_post=False)
    state = init_state(small_pair, cfg)
    parts = evaluation_losses(state.model, small_pair, cfg)
    assert parts.prediction_match == 0.0 and not parts.post_reconstruction
    assert parts.prior_reconstruction


def test_single_step_updates_every_component(small_pair):
    cfg = tiny_config()
    state = init_state(small_pair, cfg)
    before = {k: v.clone() for k, v in state.model.state_dict().items()}
    parts = compute_losses(state.model, small_pair, cfg, small_pair.seed_alignments[:4],
                           np.arange(8), np.arange(8), state.generator)
    parts.total.backward()
    state.optimizer.step()
    after = state.model.state_dict()
    for prefix in ("encoder.fusion", "mvae.cells.graph", "decoders.decoders.target.graph"):
        changed = [k for k in after if k.startswith(prefix) and not torch.equal(after[k], before[k])]
        assert changed, prefix


def test_zero_learning_rate_repeats_losses(small_pair):
    cfg = tiny_config(learning_rate=0.0)
    state = init_state(small_pair, cfg)
    before = {k: v.clone() for k, v in state.model.state_dict().items()}
    first = evaluation_losses(state.model, small_pair, cfg).as_floats()
    rng = np.random.default_rng(0)
    for _ in range(2):
        train_epoch(state, small_pair, cfg, rng)
    assert evaluation_losses(state.model, small_pair, cfg).as_floats() == first
    for k, v in state.model.state_dict().items():
        assert torch.equal(v, before[k])


def test_same_seed_same_trajectory(small_pair):
    logs = []
    for _ in range(2):
        buf = io.StringIO()
        fit(small_pair, tiny_config(epochs=2), loss_log=buf)
        logs.append(buf.getvalue())
    assert logs[0] == logs[1]
    assert len(logs[0].splitlines()) > 0
    record = json.loads(logs[0].splitlines()[0])
    assert {"step", "l_ns", "l_dm", "l_prior_by_flow_modal", "l_post_by_flow", "total"} <= set(record)


def test_patience_zero_stops_at_first_non_improving_epoch(small_pair):
    state = fit(small_pair, tiny_config(epochs=30, patience=0))
    mrrs = [h["valid_mrr"] for h in state.history]
    best = -1.0
    for i, m in enumerate(mrrs):
        if m <= best:
            assert i == len(mrrs) - 1
            break
        best = m
    else:
        assert len(mrrs) == 30


def test_best_checkpoint_is_kept(small_pair):
    state = fit(small_pair, tiny_config(epochs=8, patience=100))
    mrrs = [h["valid_mrr"] for h in state.history]
    assert state.best_valid_mrr == max(mrrs) >= mrrs[-1]
    assert state.history[state.best_epoch - 1]["valid_mrr"] == state.best_valid_mrr
    from geea.training import alignment_report
    assert alignment_report(state.model, small_pair.valid_alignments).mrr == state.best_valid_mrr


def test_empty_validation_warns_and_runs_all_epochs(small_pair, caplog):
    ds = AlignmentDataset(small_pair.source, small_pair.target, small_pair.seed_alignments,
                          small_pair.test_alignments)
    with caplog.at_level(logging.WARNING, logger="geea.training"):
        state = fit(ds, tiny_config(epochs=3, patience=0))
    assert state.epoch == 3
    assert "empty validation split" in caplog.text


def test_checkpoint_round_trip(tmp_path, small_pair):
    cfg = tiny_config(epochs=1)
    state = fit(small_pair, cfg)
    save_checkpoint(state, cfg, tmp_path / "ck", "somewhere")
    model, cfg2, meta = load_checkpoint(tmp_path / "ck", small_pair)
    assert cfg2.to_dict() == cfg.to_dict()
    assert meta["epoch"] == 1
    for k, v in state.model.state_dict().items():
        assert torch.equal(model.state_dict()[k], v)


def test_training_lowers_total_loss_on_synthetic_pair():
    ds = generate_synthetic_pair(seed=0)
    cfg = load_named_config("synthetic")
    state = init_state(ds, cfg)
    rng = np.random.default_rng(cfg.seed)
    totals = [train_epoch(state, ds, cfg, rng)[1]["total"] for _ in range(50)]
    assert totals[-1] < totals[0]
