import numpy as np
import pytest

from ltcalib import net
from ltcalib.data import Sampler, gen_gaussian_blobs
from ltcalib.net import Backbone, BackboneConfig, BatchNorm, Linear, bn_shift_stats
from ltcalib.tensor import Tensor, log_softmax

from conftest import assert_grads_close, central_diff


class TestBatchNorm:
    def test_constant_batch_outputs_shift(self):
        bn = BatchNorm(3)
        bn.shift.values = np.array([1.0, -2.0, 0.5])
        out = bn(Tensor(np.tile([4.0, 5.0, 6.0], (8, 1))))
        assert np.allclose(out.values, np.tile(bn.shift.values, (8, 1)), atol=1e-6)

    def test_train_mode_normalizes(self, rng):
        bn = BatchNorm(4)
        h = rng.standard_normal((64, 4)) * 3.0 + 5.0
        out = bn(Tensor(h)).values
        assert np.allclose(out.mean(axis=0), 0.0, atol=1e-10)
        # biased batch variance, corrected for eps
        assert np.allclose(out.var(axis=0) * (h.var(axis=0) + bn.eps) / h.var(axis=0),
                           1.0, atol=1e-10)

    def test_small_batch_rejected_in_training_modes(self):
        bn = BatchNorm(2)
        with pytest.raises(ValueError):
            bn(Tensor(np.ones((1, 2))))

    def test_eval_uses_running_stats_without_updates(self, rng):
        bn = BatchNorm(2)
        bn.running_mean = np.array([1.0, 2.0])
        bn.running_var = np.array([4.0, 9.0])
        bn.mode = net.EVAL
        h = rng.standard_normal((5, 2))
        out = bn(Tensor(h)).values
        expect = (h - bn.running_mean) / np.sqrt(bn.running_var + bn.eps)
        assert np.allclose(out, expect, atol=1e-12)
        assert np.array_equal(bn.running_mean, [1.0, 2.0])

    def test_ema_update_rule(self, rng):
        bn = BatchNorm(2, momentum=0.25)
        h = rng.standard_normal((32, 2))
        mu_b = h.mean(axis=0)
        var_b = h.var(axis=0)
        bn(Tensor(h))
        assert np.allclose(bn.running_mean, 0.25 * mu_b, atol=1e-12)
        assert np.allclose(bn.running_var, 0.75 * 1.0 + 0.25 * var_b, atol=1e-12)

    def test_ema_converges_geometrically_under_stationary_batches(self, rng):
        bn = BatchNorm(1, momentum=0.2)
        h = rng.standard_normal((16, 1)) + 3.0
        mu_b = h.mean()
        errs = []
        for _ in range(30):
            bn(Tensor(h))
            errs.append(abs(bn.running_mean[0] - mu_b))
        ratios = [b / a for a, b in zip(errs, errs[1:]) if a > 1e-14]
        assert np.allclose(ratios, 0.8, atol=1e-8)

    def test_shift_mode_freezes_affine_and_tracks_stats(self, rng):
        bn = BatchNorm(2)
        bn.scale.values = np.array([2.0, 3.0])
        bn.shift.values = np.array([-1.0, 1.0])
        scale_bytes = bn.scale.values.tobytes()
        shift_bytes = bn.shift.values.tobytes()
        bn.mode = net.SHIFT
        for _ in range(20):
            out = bn(Tensor(rng.standard_normal((16, 2)) + 5.0))
            assert not out.requires_grad
        assert bn.scale.values.tobytes() == scale_bytes
        assert bn.shift.values.tobytes() == shift_bytes
        assert abs(bn.running_mean[0] - 5.0) < 1.0

    def test_train_mode_gradients_match_finite_differences(self, rng):
        bn = BatchNorm(3)
        h = Tensor(rng.standard_normal((6, 3)), requires_grad=True)
        out = bn(h)
        loss = (out * out).sum()
        loss.backward()

        def numeric():
            bn_local = BatchNorm(3)
            out = bn_local(Tensor(h.values))
            return (out.values ** 2).sum()

        num = central_diff(numeric, [h.values])
        assert_grads_close([h.grad], num)


class TestBnShiftOracle:
    def test_shifted_mean_reaches_class_balanced_population_mean(self):
        # counts 900/100 with class means 0 and 1 in channel 0:
        # instance-balanced mean ~0.1, class-balanced mean 0.5
        ds = _skewed_two_class_dataset()
        bn = BatchNorm(2, momentum=0.1)
        inst = Sampler("instance", ds, seed=5)
        bn.mode = net.SHIFT
        for _ in range(500):
            x, _ = inst.next_batch(64)
            bn(Tensor(x))
        assert abs(bn.running_mean[0] - 0.1) < 0.05

        cls = Sampler("class", ds, seed=6)
        for _ in range(500):
            x, _ = cls.next_batch(64)
            bn(Tensor(x))
        assert abs(bn.running_mean[0] - 0.5) < 0.05

    def test_balanced_dataset_shift_is_a_noop_in_distribution(self):
        ds = gen_gaussian_blobs([200, 200], dim=2, spread=0.3, seed=8)
        cfg = BackboneConfig(in_dim=2, hidden=[4], seed=1)
        bb = Backbone(cfg)
        inst = Sampler("instance", ds, seed=3)
        for _ in range(300):
            bb.forward(inst.next_batch(64)[0], net.TRAIN)
        mu_inst = bb.norms[0].running_mean.copy()
        cls = Sampler("class", ds, seed=4)
        bn_shift_stats(bb, cls, steps=300, batch=64)
        assert np.allclose(bb.norms[0].running_mean, mu_inst, atol=0.05)

    def test_zero_steps_leaves_state_unchanged(self):
        ds = gen_gaussian_blobs([50, 50], dim=2, spread=0.3, seed=8)
        bb = Backbone(BackboneConfig(in_dim=2, hidden=[4], seed=1))
        before = bb.norms[0].running_mean.tobytes()
        bn_shift_stats(bb, Sampler("class", ds, seed=1), steps=0, batch=16)
        assert bb.norms[0].running_mean.tobytes() == before


def _skewed_two_class_dataset():
    from ltcalib.data import LongTailedDataset

    rng = np.random.default_rng(77)
    n0, n1 = 900, 100
    feats = np.concatenate([
        np.column_stack([rng.normal(0.0, 0.05, n0), rng.normal(0.0, 0.05, n0)]),
        np.column_stack([rng.normal(1.0, 0.05, n1), rng.normal(0.0, 0.05, n1)]),
    ])
    labels = np.concatenate([np.zeros(n0, dtype=int), np.ones(n1, dtype=int)])
    return LongTailedDataset(features=feats, labels=labels,
                             class_counts=np.array([n0, n1]), splits=["many", "many"])


class TestBackbone:
    def test_identity_when_no_hidden_layers(self, rng):
        bb = Backbone(BackboneConfig(in_dim=3, hidden=[]))
        x = rng.standard_normal((4, 3))
        assert np.array_equal(bb.forward(x, net.EVAL).values, x)

    def test_eval_mode_is_pure(self, rng):
        bb = Backbone(BackboneConfig(in_dim=3, hidden=[5, 4], seed=2))
        x = rng.standard_normal((4, 3))
        a = bb.forward(x, net.EVAL).values
        b = bb.forward(x, net.EVAL).values
        assert a.tobytes() == b.tobytes()

    def test_width_mismatch_rejected(self, rng):
        bb = Backbone(BackboneConfig(in_dim=3, hidden=[5]))
        with pytest.raises(ValueError):
            bb.forward(rng.standard_normal((4, 2)), net.EVAL)

    def test_backbone_gradients_match_finite_differences(self, rng):
        cfg = BackboneConfig(in_dim=2, hidden=[4], seed=3)
        bb = Backbone(cfg)
        w = Tensor(rng.standard_normal((4, 3)) * 0.4, requires_grad=True)
        x = rng.standard_normal((6, 2)) * 0.7
        q = np.full((6, 3), 1.0 / 3.0)
        params = bb.parameters() + [w]
        state = [p.values.copy() for p in params]
        run_stats = (bb.norms[0].running_mean.copy(), bb.norms[0].running_var.copy())

        def forward_scalar():
            bb.norms[0].running_mean, bb.norms[0].running_var = run_stats[0].copy(), run_stats[1].copy()
            feats = bb.forward(x, net.TRAIN)
            return -(Tensor(q) * log_softmax(feats @ w)).sum()

        loss = forward_scalar()
        loss.backward()
        analytic = [p.grad for p in params]
        num = central_diff(lambda: forward_scalar().values.item(), [p.values for p in params])
        for p, v in zip(params, state):
            assert p.values.tobytes() == v.tobytes()
        assert_grads_close(analytic, num)


class TestCheckpoint:
    def test_round_trip_bit_exact(self, tmp_path, rng):
        arrays = {
            "w": rng.standard_normal((3, 4)),
            "b": rng.standard_normal(4),
            "scalar": np.array([3.14159]),
        }
        net.save_checkpoint(tmp_path / "ckpt", arrays, {"note": "x"})
        back, meta = net.load_checkpoint(tmp_path / "ckpt")
        assert meta == {"note": "x"}
        for k in arrays:
            assert back[k].tobytes() == arrays[k].tobytes()
            assert back[k].shape == arrays[k].shape
