"""Scoring network: forward values, exact gradients, checkpoints."""

import math

import numpy as np
import pytest

from clipsim import scoring
from clipsim.errors import InvalidArgumentError, ManifestError
from clipsim.scoring import ScoringNet, softplus

# log(1 + exp(-50)) from a 50-digit arbitrary-precision evaluation
SOFTPLUS_NEG50 = 1.9287498479639177830171568127236538806729141113851e-22


def small_net(seed=0, in_dim=16, hidden=8, dropout_p=0.5, jitter_biases=False):
    net = ScoringNet(in_dim=in_dim, hidden=hidden, dropout_p=dropout_p,
                     rng=np.random.default_rng(seed))
    if jitter_biases:
        # zero-initialized biases leave dead rows sitting exactly on ReLU
        # kinks, where finite differences disagree with any subgradient
        rng = np.random.default_rng(seed + 1000)
        for k in ("b1", "b2", "beta1", "beta2", "b3"):
            net.params[k] = net.params[k] + rng.uniform(0.05, 0.3, net.params[k].shape)
    return net


def loss_value(net, x, u, seed=None):
    if net.mode == "train":
        alphas, _ = net.forward(x, rng=np.random.default_rng(seed), update_running=False)
    else:
        alphas, _ = net.forward(x)
    return float(np.sum(alphas * u))


def max_rel_err(net, x, u, seed=None, h=1e-5, denom_floor=1e-8):
    """Finite-difference check of every parameter entry and input entry.

    denom_floor guards entries whose true gradient is so small that the
    central difference is dominated by cancellation noise.
    """
    if net.mode == "train":
        alphas, tape = net.forward(x, rng=np.random.default_rng(seed), update_running=False)
    else:
        alphas, tape = net.forward(x)
    grads, dx = net.backward(tape, u)
    for blk in tape.blocks:
        assert np.abs(blk["z"]).min() > 50 * h, "fixture too close to a ReLU kink"

    worst = 0.0
    for name, tensor in net.params.items():
        flat = tensor.reshape(-1)
        gflat = grads[name].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = loss_value(net, x, u, seed)
            flat[i] = orig - h
            down = loss_value(net, x, u, seed)
            flat[i] = orig
            fd = (up - down) / (2 * h)
            denom = max(denom_floor, abs(fd) + abs(gflat[i]))
            worst = max(worst, abs(fd - gflat[i]) / denom)
    xflat = x.reshape(-1)
    dxflat = dx.reshape(-1)
    for i in range(xflat.size):
        orig = xflat[i]
        xflat[i] = orig + h
        up = loss_value(net, x, u, seed)
        xflat[i] = orig - h
        down = loss_value(net, x, u, seed)
        xflat[i] = orig
        fd = (up - down) / (2 * h)
        denom = max(denom_floor, abs(fd) + abs(dxflat[i]))
        worst = max(worst, abs(fd - dxflat[i]) / denom)
    return worst


class TestSoftplus:
    def test_zero_is_ln2(self):
        assert abs(softplus(0.0) - math.log(2)) < 1e-15

    def test_large_positive_saturates(self):
        assert abs(softplus(50.0) - 50.0) < 1e-9

    def test_large_negative(self):
        val = float(softplus(-50.0))
        assert abs(val - SOFTPLUS_NEG50) < 1e-6 * SOFTPLUS_NEG50

    def test_always_positive(self):
        xs = np.array([-1e4, -800.0, -50.0, 0.0, 3.0, 1e4])
        assert np.all(softplus(xs) > 0)

    def test_no_overflow(self):
        assert np.isfinite(softplus(1e6))


class TestForward:
    def test_constant_net_gives_ln2(self):
        net = small_net().eval()
        for k in net.params:
            net.params[k] = np.zeros_like(net.params[k])
        net.params["g1"] = np.ones_like(net.params["g1"])
        net.params["g2"] = np.ones_like(net.params["g2"])
        x = np.random.default_rng(1).normal(size=(5, 16))
        alphas, _ = net.forward(x)
        assert np.allclose(alphas, math.log(2), atol=1e-12)

    def test_eval_deterministic(self):
        net = small_net(seed=2).eval()
        x = np.random.default_rng(3).normal(size=(4, 16))
        a1, _ = net.forward(x)
        a2, _ = net.forward(x)
        assert np.array_equal(a1, a2)

    def test_scores_positive_finite(self):
        rng = np.random.default_rng(4)
        for trial in range(10):
            net = small_net(seed=trial).eval()
            x = rng.normal(size=(100, 16))
            alphas, _ = net.forward(x)
            assert np.all(alphas > 0)
            assert np.all(np.isfinite(alphas))

    def test_train_needs_batch_of_two(self):
        net = small_net().train()
        with pytest.raises(InvalidArgumentError):
            net.forward(np.zeros((1, 16)), rng=np.random.default_rng(0))

    def test_train_needs_rng(self):
        net = small_net().train()
        with pytest.raises(InvalidArgumentError):
            net.forward(np.zeros((4, 16)))

    def test_wrong_input_dim(self):
        net = small_net().eval()
        with pytest.raises(InvalidArgumentError):
            net.forward(np.zeros((4, 7)))

    def test_batchnorm_standardizes(self):
        # large activation scales keep batch variance far above the eps
        # guard in both blocks, so var(xhat) = v/(v+eps) is 1 within 1e-6
        net = small_net(seed=5, dropout_p=0.0).train()
        net.params["g1"] = 100.0 * np.ones_like(net.params["g1"])
        x = np.random.default_rng(6).normal(scale=100.0, size=(64, 16))
        _, tape = net.forward(x, rng=np.random.default_rng(7), update_running=False)
        for blk in tape.blocks:
            xhat = blk["xhat"]
            live = xhat.var(axis=0) > 0
            assert np.all(np.abs(xhat.mean(axis=0)) < 1e-6)
            assert np.all(np.abs(xhat.var(axis=0)[live] - 1.0) < 1e-6)

    def test_running_stats_updated(self):
        net = small_net(seed=8, dropout_p=0.0).train()
        x = np.random.default_rng(9).normal(size=(32, 16))
        rm_before = net.running["rm1"].copy()
        _, tape = net.forward(x, rng=np.random.default_rng(10))
        z = tape.blocks[0]["z"]
        d = np.maximum(z, 0.0)
        expected = 0.9 * rm_before + 0.1 * d.mean(axis=0)
        assert np.allclose(net.running["rm1"], expected, atol=1e-12)

    def test_update_running_flag(self):
        net = small_net(seed=11).train()
        x = np.random.default_rng(12).normal(size=(8, 16))
        before = {k: v.copy() for k, v in net.running.items()}
        net.forward(x, rng=np.random.default_rng(13), update_running=False)
        for k in before:
            assert np.array_equal(net.running[k], before[k])


class TestBackward:
    def test_zero_upstream_zero_grads(self):
        net = small_net(seed=14).eval()
        x = np.random.default_rng(15).normal(size=(6, 16))
        _, tape = net.forward(x)
        grads, dx = net.backward(tape, np.zeros(6))
        for g in grads.values():
            assert np.all(g == 0)
        assert np.all(dx == 0)

    def test_gradcheck_eval_mode(self):
        net = small_net(seed=16, jitter_biases=True).eval()
        rng = np.random.default_rng(17)
        x = rng.normal(size=(5, 16))
        u = rng.normal(size=5)
        assert max_rel_err(net, x, u) < 1e-4

    def test_gradcheck_train_mode(self):
        net = small_net(seed=18, jitter_biases=True).train()
        rng = np.random.default_rng(19)
        x = rng.normal(size=(6, 16))
        u = rng.normal(size=6)
        assert max_rel_err(net, x, u, seed=20, denom_floor=1e-6) < 1e-4

    def test_gradcheck_train_mode_no_dropout(self):
        net = small_net(seed=21, dropout_p=0.0, jitter_biases=True).train()
        rng = np.random.default_rng(22)
        x = rng.normal(size=(4, 16))
        u = rng.normal(size=4)
        assert max_rel_err(net, x, u, seed=23, denom_floor=1e-6) < 1e-4

    def test_dropped_unit_grads_zero(self):
        # a hidden unit masked out in every batch row cannot affect the loss
        net = small_net(seed=24).train()
        x = np.random.default_rng(25).normal(size=(3, 16))
        for seed in range(100):
            _, tape = net.forward(x, rng=np.random.default_rng(seed), update_running=False)
            fully_dropped = np.where(~tape.blocks[0]["mask"].any(axis=0))[0]
            if len(fully_dropped):
                break
        assert len(fully_dropped) > 0
        grads, _ = net.backward(tape, np.ones(3))
        for j in fully_dropped:
            assert np.all(grads["w1"][:, j] == 0)
            assert grads["b1"][j] == 0

    def test_shape_mismatch_rejected(self):
        net = small_net(seed=26).eval()
        x = np.random.default_rng(27).normal(size=(4, 16))
        _, tape = net.forward(x)
        with pytest.raises(InvalidArgumentError):
            net.backward(tape, np.ones(5))


class TestCheckpoint:
    def test_round_trip_preserves_eval(self, tmp_path):
        net = small_net(seed=28)
        # f32 storage: quantize in-memory params first so reload is exact
        for k in net.params:
            net.params[k] = net.params[k].astype(np.float32).astype(np.float64)
        path = tmp_path / "net.csn"
        net.save(path)
        back = ScoringNet.load(path)
        for k in net.params:
            assert np.array_equal(back.params[k], net.params[k])
        x = np.random.default_rng(29).normal(size=(4, 16))
        a1, _ = net.eval().forward(x)
        a2, _ = back.eval().forward(x)
        assert np.array_equal(a1, a2)

    def test_save_is_deterministic(self, tmp_path):
        net = small_net(seed=30)
        p1, p2 = tmp_path / "a.csn", tmp_path / "b.csn"
        net.save(p1)
        net.save(p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_wrong_kind_rejected(self, tmp_path):
        from clipsim import checkpoint

        path = tmp_path / "x.csn"
        checkpoint.write_tensors(path, {"w": np.ones(3)}, {"kind": "other"})
        with pytest.raises(ManifestError):
            ScoringNet.load(path)

    def test_running_stats_survive(self, tmp_path):
        net = small_net(seed=31).train()
        x = np.random.default_rng(32).normal(size=(16, 16))
        net.forward(x, rng=np.random.default_rng(33))
        path = tmp_path / "rs.csn"
        net.save(path)
        back = ScoringNet.load(path)
        for k in net.running:
            assert np.allclose(back.running[k], net.running[k], rtol=1e-6)
