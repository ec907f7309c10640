import numpy as np
import pytest
import torch

from geea.encoder import EEAEncoder, mean_adjacency
from geea.kgdata import KnowledgeGraph


def _encoder(pair, dtype=torch.float32, **kw):
    torch.manual_seed(0)
    enc = EEAEncoder(pair.source, pair.target, dim=6, joint_dim=5, gnn_layers=2, **kw)
    return enc.to(dtype)


def test_deterministic(small_pair):
    enc = _encoder(small_pair)
    a, b = enc.encode("source", [0, 3, 5]), enc.encode("source", [0, 3, 5])
    torch.testing.assert_close(a.joint, b.joint, rtol=0, atol=0)


def test_shapes_and_sides(small_pair):
    enc = _encoder(small_pair)
    out = enc.encode("target", [1, 2])
    assert out.joint.shape == (2, 5)
    assert all(t.shape == (2, 6) for t in out.subs().values())
    with pytest.raises(IndexError):
        enc.encode("source", [small_pair.source.entity_count])
    with pytest.raises(ValueError):
        enc.encode_all("middle")


def test_zero_fusion_gives_bias(small_pair):
    enc = _encoder(small_pair)
    with torch.no_grad():
        enc.fusion.weight.zero_()
        enc.fusion.bias.copy_(torch.arange(5.0))
    joint = enc.encode_all("source").joint
    torch.testing.assert_close(joint, torch.arange(5.0).expand_as(joint))


def test_fuse_matches_encode(small_pair):
    enc = _encoder(small_pair)
    out = enc.encode("source", [4, 1, 7])
    assert torch.equal(enc.fuse(out.graph, out.attr, out.image), out.joint)


def test_fuse_is_rowwise(small_pair, rng):
    enc = _encoder(small_pair)
    subs = [torch.randn(7, 6) for _ in range(3)]
    perm = torch.as_tensor(rng.permutation(7))
    torch.testing.assert_close(enc.fuse(*[s[perm] for s in subs]), enc.fuse(*subs)[perm])
    with pytest.raises(ValueError):
        enc.fuse(subs[0], subs[1], subs[2][:, :3])


def test_fusion_gradient_matches_finite_differences(small_pair, fd_error):
    enc = _encoder(small_pair, torch.float64)
    ids = [0, 2, 9, 11]
    target = torch.randn(4, 5, dtype=torch.float64, generator=torch.Generator().manual_seed(1))

    def loss():
        return ((enc.encode("source", ids).joint - target) ** 2).sum()

    for param in (enc.fusion.weight, enc.gnn[0].weight, enc.entity["source"], enc.attr_proj.weight):
        assert fd_error(loss, param) < 1e-4


def test_adjacency_rows_are_means():
    kg = KnowledgeGraph(4, 1, 0, [(0, 0, 1), (1, 0, 2), (2, 0, 1)], [], np.zeros((4, 1)), [True] * 4)
    adj = mean_adjacency(kg, torch.float64).to_dense()
    torch.testing.assert_close(adj.sum(dim=1), torch.ones(4, dtype=torch.float64))
    expected = torch.tensor([[.5, .5, 0, 0], [1 / 3, 1 / 3, 1 / 3, 0], [0, .5, .5, 0], [0, 0, 0, 1]],
                            dtype=torch.float64)
    torch.testing.assert_close(adj, expected)


def test_graph_embedding_is_local(small_pair):
    # an entity's one-layer graph embedding depends only on itself and its neighbours
    torch.manual_seed(0)
    enc = EEAEncoder(small_pair.source, small_pair.target, dim=6, joint_dim=5, gnn_layers=1)
    indptr, indices = small_pair.source.neighbors
    e = 0
    near = {e, *indices[indptr[e]:indptr[e + 1]].tolist()}
    far = next(i for i in range(small_pair.source.entity_count) if i not in near)
    before = enc.graph_embeddings("source")[e].detach().clone()
    with torch.no_grad():
        enc.entity["source"][far] += 10.0
    torch.testing.assert_close(enc.graph_embeddings("source")[e], before)


def test_dropout_only_in_training(small_pair):
    enc = _encoder(small_pair, dropout=0.5)
    enc.eval()
    a, b = enc.encode_all("source").joint, enc.encode_all("source").joint
    assert torch.equal(a, b)
    enc.train()
    torch.manual_seed(3)
    c = enc.encode_all("source").joint
    assert not torch.equal(a, c)


def test_post_loss_reaches_vae_through_fuse(small_pair):
    from geea.losses import loss_post_reconstruction
    from geea.mvae import MutualVAE

    enc = _encoder(small_pair)
    vae = MutualVAE(6, (8,), 4)
    x = enc.encode("source", [0, 1, 2])
    recon = {m: vae.vae_forward(s, m, deterministic=True).reconstruction for m, s in x.subs().items()}
    loss_post_reconstruction(recon, enc.fuse, x.joint).backward()
    assert any(p.grad is not None and p.grad.abs().sum() > 0 for p in vae.parameters())
