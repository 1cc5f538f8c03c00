import numpy as np
import pytest
import torch

from fplplus.core import ShapeError
from fplplus.core.types import Volume3D
from fplplus.dualnorm import (
    DualBatchNorm,
    DualDomainSegNet,
    MCDropout,
    SegNetConfig,
    mc_dropout_predict,
    predict_proba,
    segnet_forward,
)
from fplplus.dualnorm.checkpoint import IncompatibleCheckpointError, load_segnet, manifest_for, save_segnet
from fplplus.dualnorm.trainer import PatchStream, TrainConfig, run_training
from fplplus.jointtrain import init_segmentor_from_generator

from oracles import ema_closed_form

TINY = SegNetConfig(base_width=4, levels=3, flat_levels=1)


def test_batch_stats_are_biased_and_routed():
    bn = DualBatchNorm(2, momentum=0.5).double()
    x = torch.randn(4, 2, 3, 3, dtype=torch.float64)
    bn.train()
    y = bn(x, "source")
    mean = x.mean(dim=(0, 2, 3))
    var = x.var(dim=(0, 2, 3), unbiased=False)
    ref = (x - mean.view(1, -1, 1, 1)) / torch.sqrt(var.view(1, -1, 1, 1) + bn.eps)
    torch.testing.assert_close(y, ref)
    torch.testing.assert_close(bn.mean_s, 0.5 * mean)
    torch.testing.assert_close(bn.var_s, 0.5 + 0.5 * var)
    assert torch.equal(bn.mean_t, torch.zeros(2)) and torch.equal(bn.var_t, torch.ones(2))


def test_ema_matches_closed_form():
    alpha, mu = 0.1, 3.0
    bn = DualBatchNorm(1, momentum=alpha).double().train()
    x = torch.tensor([mu - 1, mu + 1], dtype=torch.float64).view(2, 1, 1)
    for k in range(1, 101):
        bn(x, "target")
        assert abs(bn.mean_t.item() - ema_closed_form(mu, alpha, k)) < 1e-6


def test_constant_batch_outputs_beta():
    bn = DualBatchNorm(3).train()
    with torch.no_grad():
        bn.beta_s.copy_(torch.tensor([0.5, -1.0, 2.0]))
        bn.gamma_s.copy_(torch.tensor([3.0, 4.0, 5.0]))
    y = bn(torch.full((2, 3, 4, 4), 7.0), "source")
    torch.testing.assert_close(y, bn.beta_s.view(1, -1, 1, 1).expand_as(y))


def test_training_mode_rejects_single_sample_batches():
    bn = DualBatchNorm(2).train()
    with pytest.raises(ValueError, match="at least 2"):
        bn(torch.randn(1, 2, 4), "source")
    bn.eval()
    bn(torch.randn(1, 2, 4), "source")


def test_mc_dropout_flag():
    d = MCDropout(0.5).eval()
    x = torch.ones(1000)
    assert torch.equal(d(x), x)
    d.sampling = True
    assert (d(x) == 0).any()


def _snapshot(net, group):
    state = net.state_dict()
    return {k: state[k].clone() for k, g in manifest_for(net)["groups"].items() if g == group or g == group.replace("bn", "stats")}


@pytest.mark.parametrize("trained, frozen", [("source", "bn_t"), ("target", "bn_s")])
def test_domain_branches_are_isolated(trained, frozen):
    torch.manual_seed(0)
    net = DualDomainSegNet(TINY)
    before = _snapshot(net, frozen)
    stream = PatchStream([np.random.default_rng(0).normal(size=(8, 8, 8))], [np.zeros((8, 8, 8), np.uint8)], trained)

    def step(rng):
        x, y, _ = stream.batch(rng, 2, (8, 8, 8))
        return {"l": net(x, trained).square().mean()}

    run_training(net, TrainConfig(epochs=2, lr=1e-2), step, 3, "test")
    after = _snapshot(net, frozen)
    assert before.keys() == after.keys() and len(before) > 0
    for k in before:
        assert torch.equal(before[k], after[k]), k


def test_network_shapes_and_divisibility():
    net = DualDomainSegNet(TINY).eval()
    out = net(torch.zeros(1, 1, 8, 12, 16), "target")
    assert out.shape == (1, 2, 8, 12, 16)
    with pytest.raises(ShapeError, match="axis y"):
        net(torch.zeros(1, 1, 8, 6, 8), "target")


def test_flat_kernels_in_shallow_levels():
    net = DualDomainSegNet(SegNetConfig())
    assert net.encoders[0].conv1.kernel_size == (1, 3, 3)
    assert net.encoders[1].conv1.kernel_size == (1, 3, 3)
    assert net.encoders[2].conv1.kernel_size == (3, 3, 3)
    drops = [name for name, m in net.named_modules() if isinstance(m, MCDropout)]
    assert len(drops) == 4


def test_predict_proba_handles_odd_sizes():
    net = DualDomainSegNet(TINY)
    p = predict_proba(net, Volume3D(np.zeros((5, 7, 9))), "source")
    assert p.shape == (2, 5, 7, 9)
    np.testing.assert_allclose(p.sum(axis=0), 1, atol=1e-5)
    with pytest.raises(ShapeError):
        segnet_forward(net, np.zeros((5, 8, 8)), "source")


def test_mc_dropout_predict_is_seeded_and_keeps_bn_frozen():
    torch.manual_seed(1)
    net = DualDomainSegNet(TINY)
    x = np.random.default_rng(0).normal(size=(8, 8, 8)).astype(np.float32)
    stats = {k: v.clone() for k, v in net.state_dict().items()}
    a = mc_dropout_predict(net, x, "target", K=3, seed=5)
    b = mc_dropout_predict(net, x, "target", K=3, seed=5)
    assert all(np.array_equal(u, v) for u, v in zip(a, b))
    assert not np.array_equal(a[0], a[1])
    assert all(torch.equal(stats[k], v) for k, v in net.state_dict().items())
    with pytest.raises(ValueError):
        mc_dropout_predict(net, x, "target", K=1)


def test_sliding_windows_cover_and_match_single_window():
    torch.manual_seed(3)
    net = DualDomainSegNet(TINY)
    x = np.random.default_rng(1).normal(size=(8, 8, 8)).astype(np.float32)
    # one window covering the whole volume is the plain forward pass
    np.testing.assert_allclose(predict_proba(net, x, "target", (8, 8, 8)), predict_proba(net, x, "target"), atol=1e-6)
    big = np.random.default_rng(2).normal(size=(12, 16, 16)).astype(np.float32)
    p = predict_proba(net, big, "source", (8, 8, 8))
    assert p.shape == (2, 12, 16, 16)
    np.testing.assert_allclose(p.sum(axis=0), 1, atol=1e-6)
    a = mc_dropout_predict(net, big, "target", K=2, seed=3, patch_dims=(8, 8, 8))
    b = mc_dropout_predict(net, big, "target", K=2, seed=3, patch_dims=(8, 8, 8))
    assert all(np.array_equal(u, v) for u, v in zip(a, b)) and a[0].shape == (2, 12, 16, 16)


def test_checkpoint_roundtrip_and_init(tmp_path):
    torch.manual_seed(2)
    net = DualDomainSegNet(TINY)
    with torch.no_grad():
        net.encoders[0].bn1.mean_t.add_(0.25)
    save_segnet(net, tmp_path / "G")
    loaded = load_segnet(tmp_path / "G.json")
    for k, v in net.state_dict().items():
        assert torch.equal(v, loaded.state_dict()[k])
    S = init_segmentor_from_generator(tmp_path / "G.json", TINY)
    assert torch.equal(S.encoders[0].bn1.mean_t, net.encoders[0].bn1.mean_t)
    with pytest.raises(IncompatibleCheckpointError):
        init_segmentor_from_generator(tmp_path / "G.json", SegNetConfig(base_width=4, levels=3, num_classes=3))
