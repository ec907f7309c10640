import numpy as np
import pytest
import torch

from geea.decoders import ConcreteDecoders, FeatureDecoder, concrete_features, discretize_prediction


def test_probabilities_in_unit_interval():
    torch.manual_seed(0)
    dec = FeatureDecoder(4, 9, (8, 8))
    p = dec(torch.randn(5, 4) * 10)
    assert p.shape == (5, 9)
    assert ((p > 0) & (p < 1)).all()


def test_image_decoder_is_linear_output():
    torch.manual_seed(0)
    dec = FeatureDecoder(4, 3, (8,), probabilistic=False)
    x = torch.randn(2, 4)
    torch.testing.assert_close(dec(x), dec.logits(x))


def test_zero_output_layer_gives_sigmoid_bias():
    dec = FeatureDecoder(4, 3, (8,))
    with torch.no_grad():
        dec.out.weight.zero_()
        dec.out.bias.copy_(torch.tensor([-1.0, 0.0, 2.0]))
    p = dec(torch.randn(6, 4))
    torch.testing.assert_close(p, torch.sigmoid(torch.tensor([-1.0, 0.0, 2.0])).expand(6, 3))


def test_single_logit_moves_single_probability():
    dec = FeatureDecoder(4, 5, (8,))
    x = torch.randn(1, 4)
    base = dec(x)
    with torch.no_grad():
        dec.out.bias[2] += 1.0
    moved = dec(x)
    assert moved[0, 2] > base[0, 2]
    others = [0, 1, 3, 4]
    assert torch.equal(moved[0, others], base[0, others])


def test_widths_follow_target_kg(small_pair):
    decs = ConcreteDecoders({"source": small_pair.source, "target": small_pair.target}, 4, (8,))
    pred = decs.decode({m: torch.randn(2, 4) for m in ("graph", "attr", "image")}, "target")
    assert pred.graph.shape == (2, small_pair.target.entity_count)
    assert pred.attr.shape == (2, small_pair.target.attribute_count)
    assert pred["image"].shape == (2, small_pair.target.image_dim)
    with pytest.raises(ValueError):
        decs.decode_modal(torch.randn(2, 4), "graph", "target", width=3)


def test_concrete_features_match_triples(small_pair):
    kg = small_pair.source
    labels = concrete_features(kg, [0, 1], "graph")
    for row, e in zip(labels, (0, 1)):
        t = kg.triples
        expected = set(t[t[:, 0] == e, 2].tolist()) | set(t[t[:, 2] == e, 0].tolist())
        expected.discard(e)
        assert set(np.flatnonzero(row).tolist()) == expected


def test_threshold_discretization():
    assert discretize_prediction(np.array([[0.9, 0.1, 0.8]]), "graph") == [[0, 2]]


def test_top_k_discretization():
    probs = np.array([[0.1, 0.7, 0.3, 0.9, 0.2, 0.5, 0.6, 0.05]])
    assert discretize_prediction(probs, "attr", top_k=6) == [[3, 1, 6, 5, 2, 4]]


def test_image_nearest_row():
    table = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    assert discretize_prediction(table[[2, 0]], "image", image_table=table) == [2, 0]
    with pytest.raises(ValueError):
        discretize_prediction(table, "image")
