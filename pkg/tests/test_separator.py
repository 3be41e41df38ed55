"""Separator architecture, fusion semantics, and loss behavior."""

import numpy as np
import pytest

from avsep import ndgrad as ng
from avsep.errors import ConfigurationError, DimensionError
from avsep.separator import (
    FusionMode,
    SeparatorConfig,
    SeparatorModel,
    align_loss,
    sep_loss,
    total_loss,
)

from conftest import finite_diff_grad


def make_model(mode, seed=0, **kw):
    return SeparatorModel(SeparatorConfig(fusion=mode, init_seed=seed, **kw))


def rand_input(rng, n=2):
    return np.abs(rng.normal(size=(n, 1, 64, 64))), rng.normal(size=(n, 32))


class TestEncode:
    def test_bottleneck_spatial_dims(self, rng):
        m = make_model(FusionMode.LATE)
        x, _ = rand_input(rng)
        bott, skips = m.encode(ng.Tensor(x))
        assert bott.shape == (2, 128, 4, 4)
        assert [s.shape[1] for s in skips] == [16, 32, 64]

    def test_zero_input_finite(self):
        m = make_model(FusionMode.HIERARCHICAL)
        out = m.forward(ng.Tensor(np.zeros((1, 1, 64, 64))), ng.Tensor(np.zeros((1, 32))))
        assert np.isfinite(out.mask.data).all()

    def test_wrong_grid_rejected(self, rng):
        m = make_model(FusionMode.LATE)
        with pytest.raises(ConfigurationError):
            m.encode(ng.Tensor(rng.normal(size=(1, 1, 32, 32))))

    def test_gradient_reaches_first_conv(self, rng):
        # spot-check the full encoder path against finite differences on a
        # single weight slice (full-tensor checks live in the ndgrad suite)
        m = make_model(FusionMode.LATE, frames=16, bins=16, base_channels=4, d_a=8)
        x = np.abs(np.random.default_rng(0).normal(size=(2, 1, 16, 16)))

        def loss_value():
            out = m.forward(ng.Tensor(x), ng.Tensor(np.zeros((2, 32))))
            return float(out.mask.data.sum())

        w = m.params["enc0.w"]
        with ng.Tape() as tape:
            out = m.forward(ng.Tensor(x), ng.Tensor(np.zeros((2, 32))))
            total = ng.mean_all(out.mask)
        tape.backward(total)
        g = w.grad.copy()
        h = 1e-5
        idx = (0, 0, 1, 1)
        orig = w.data[idx]
        w.data[idx] = orig + h
        up = loss_value()
        w.data[idx] = orig - h
        down = loss_value()
        w.data[idx] = orig
        fd = (up - down) / (2 * h) / out.mask.data.size
        assert g[idx] == pytest.approx(fd, rel=1e-3, abs=1e-9)


class TestFusionSemantics:
    def test_middle_tiles_raw_embedding(self, rng):
        m = make_model(FusionMode.MIDDLE)
        x, e = rand_input(rng)
        bott, _ = m.encode(ng.Tensor(x))
        fused = m.fuse_middle(bott, ng.Tensor(e))
        assert fused.shape == (2, 128 + 32, 4, 4)  # C_b + d_v, no projection
        tiled = fused.data[:, 128:]
        for i in range(4):
            for j in range(4):
                assert np.array_equal(tiled[:, :, i, j], e)

    def test_hierarchical_projects_before_tiling(self, rng):
        m = make_model(FusionMode.HIERARCHICAL)
        x, e = rand_input(rng)
        bott, _ = m.encode(ng.Tensor(x))
        fused = m.fuse_middle(bott, ng.Tensor(e))
        assert fused.shape == (2, 128 + 16, 4, 4)  # C_b + c_mid
        expected = e @ m.params["proj2.w"].data + m.params["proj2.b"].data
        assert np.allclose(fused.data[:, 128:, 2, 1], expected)

    def test_late_zero_projection_gives_half_mask(self, rng):
        m = make_model(FusionMode.LATE)
        m.params["proj1.w"].data = np.zeros_like(m.params["proj1.w"].data)
        m.params["proj1.b"].data = np.zeros_like(m.params["proj1.b"].data)
        m.params["late.bias"].data = np.zeros(1)
        x, e = rand_input(rng)
        out = m.forward(ng.Tensor(x), ng.Tensor(e))
        assert np.allclose(out.mask.data, 0.5)

    def test_late_mask_not_linear_in_embedding(self, rng):
        m = make_model(FusionMode.LATE)
        x, e = rand_input(rng)
        m1 = m.forward(ng.Tensor(x), ng.Tensor(e)).mask.data
        m2 = m.forward(ng.Tensor(x), ng.Tensor(2 * e)).mask.data
        assert not np.allclose(m2, 2 * m1)

    def test_mask_shape_matches_input(self, rng):
        for mode in FusionMode:
            m = make_model(mode)
            x, e = rand_input(rng)
            out = m.forward(ng.Tensor(x), ng.Tensor(e))
            assert out.mask.shape == (2, 1, 64, 64)


class TestForwardContract:
    @pytest.mark.parametrize("mode", list(FusionMode))
    def test_masks_bounded(self, rng, mode):
        m = make_model(mode)
        x, e = rand_input(rng, n=3)
        out = m.forward(ng.Tensor(x), ng.Tensor(e))
        assert out.mask.data.min() > 0.0
        assert out.mask.data.max() < 1.0
        masked = out.mask.data[:, 0] * x[:, 0]
        assert np.all(masked <= x[:, 0] + 1e-15)

    def test_pooled_dimension(self, rng):
        m = make_model(FusionMode.HIERARCHICAL)
        x, e = rand_input(rng)
        assert m.forward(ng.Tensor(x), ng.Tensor(e)).pooled.shape == (2, 32)

    def test_deterministic(self, rng):
        m = make_model(FusionMode.MIDDLE)
        x, e = rand_input(rng)
        a = m.forward(ng.Tensor(x), ng.Tensor(e)).mask.data
        b = m.forward(ng.Tensor(x), ng.Tensor(e)).mask.data
        assert np.array_equal(a, b)

    def test_continuous_in_embedding(self, rng):
        m = make_model(FusionMode.HIERARCHICAL)
        x, e = rand_input(rng)
        base = m.forward(ng.Tensor(x), ng.Tensor(e)).mask.data
        delta = rng.normal(size=e.shape)
        delta *= 1e-6 / np.linalg.norm(delta)
        bumped = m.forward(ng.Tensor(x), ng.Tensor(e + delta)).mask.data
        assert np.abs(bumped - base).max() <= 1e-2  # finite Lipschitz bound

    def test_forward_multi_matches_forward(self, rng):
        m = make_model(FusionMode.HIERARCHICAL)
        x, e1 = rand_input(rng)
        e2 = rng.normal(size=e1.shape)
        masks, bott, pooled = m.forward_multi(
            ng.Tensor(x), [ng.Tensor(e1), ng.Tensor(e2)]
        )
        single1 = m.forward(ng.Tensor(x), ng.Tensor(e1))
        assert np.allclose(masks[0].data, single1.mask.data)
        assert np.allclose(pooled.data, single1.pooled.data)

    def test_batch_mismatch_rejected(self, rng):
        m = make_model(FusionMode.LATE)
        x, _ = rand_input(rng)
        with pytest.raises(DimensionError):
            m.forward(ng.Tensor(x), ng.Tensor(rng.normal(size=(5, 32))))


class TestParameterCounts:
    @staticmethod
    def _conv(c_out, c_in):
        return c_out * c_in * 16

    def _encoder(self):
        chans = [16, 32, 64, 128]
        total, c_in = 0, 1
        for c in chans:
            total += self._conv(c, c_in) + 2 * c
            c_in = c
        return total

    def _decoder(self, bottleneck_in):
        # tconv weights are [in, out, 4, 4]; skips widen the next input
        skips = [64, 32, 16]
        outs = [64, 32, 16, 16]
        total, d_in = 0, bottleneck_in
        for i, c in enumerate(outs):
            total += d_in * c * 16 + 2 * c
            if i < 3:
                d_in = c + skips[i]
        return total

    def test_counts_match_arithmetic(self):
        align = 128 * 32 + 32
        expected = {
            FusionMode.MIDDLE: self._encoder() + self._decoder(128 + 32)
            + (16 + 1) + align,
            FusionMode.LATE: self._encoder() + self._decoder(128)
            + (32 * 16 + 16) + 1 + align,
            FusionMode.HIERARCHICAL: self._encoder() + self._decoder(128 + 16)
            + (32 * 16 + 16) + 1 + (32 * 16 + 16) + align,
        }
        for mode, count in expected.items():
            assert make_model(mode).param_count() == count, mode

    def test_summary_totals(self):
        m = make_model(FusionMode.HIERARCHICAL)
        assert sum(m.summary().values()) == m.param_count()


class TestLosses:
    def test_sep_loss_zero_on_perfect(self, rng):
        x = [ng.Tensor(np.abs(rng.normal(size=(2, 1, 8, 8)))) for _ in range(2)]
        assert sep_loss(x, [ng.Tensor(t.data.copy()) for t in x]).item() == 0.0

    def test_sep_loss_constant_offset(self, rng):
        t = [ng.Tensor(np.abs(rng.normal(size=(2, 1, 8, 8)))) for _ in range(2)]
        p = [ng.Tensor(ti.data + 1.0) for ti in t]
        assert sep_loss(p, t).item() == pytest.approx(2.0)  # n sources with mean 1

    def test_sep_loss_gradient(self, rng):
        p = rng.normal(size=(2, 1, 4, 4))
        t = rng.normal(size=(2, 1, 4, 4))
        pt = ng.Tensor(p, requires_grad=True)
        with ng.Tape() as tape:
            loss = sep_loss([pt], [ng.Tensor(t)])
        tape.backward(loss)
        fd = finite_diff_grad(lambda pa, ta: np.abs(pa - ta).mean(), [p, t], 0)
        assert np.abs(pt.grad - fd).max() < 1e-6

    def test_length_mismatch(self, rng):
        with pytest.raises(DimensionError):
            sep_loss([ng.Tensor(np.ones((1, 1, 2, 2)))], [])

    def test_align_loss_bounds(self, rng):
        z = rng.normal(size=(4, 8))
        z /= np.linalg.norm(z, axis=1, keepdims=True)
        same = align_loss(ng.Tensor(z), ng.Tensor(z.copy()))
        assert same.item() == pytest.approx(0.0, abs=1e-12)
        anti = align_loss(ng.Tensor(z), ng.Tensor(-z))
        assert anti.item() == pytest.approx(2.0, abs=1e-12)

    def test_align_loss_reaches_encoder(self, rng):
        m = make_model(FusionMode.HIERARCHICAL)
        x, e = rand_input(rng)
        z = rng.normal(size=(2, 32))
        z /= np.linalg.norm(z, axis=1, keepdims=True)
        with ng.Tape() as tape:
            out = m.forward(ng.Tensor(x), ng.Tensor(e))
            loss = align_loss(out.pooled, ng.Tensor(z))
        tape.backward(loss)
        g = m.params["enc0.w"].grad
        assert g is not None and np.abs(g).max() > 0

    def test_total_loss_composition(self, rng):
        s = ng.Tensor(np.asarray(1.0))
        a = ng.Tensor(np.asarray(0.5))
        assert total_loss(s, a, 0.0).item() == 1.0
        assert total_loss(s, a, 1.0).item() == 1.5

    def test_total_loss_gradient_linearity(self, rng):
        # grad(total) == grad(sep) + lam * grad(align) through a shared graph
        lam = 0.3
        x = rng.normal(size=(3, 4))

        def grad_of(build):
            xt = ng.Tensor(x, requires_grad=True)
            with ng.Tape() as tape:
                loss = build(xt)
            tape.backward(loss)
            return xt.grad

        g_total = grad_of(
            lambda xt: total_loss(
                ng.mean_all(ng.mul(xt, xt)), ng.mean_all(ng.sigmoid(xt)), lam
            )
        )
        g_sep = grad_of(lambda xt: ng.mean_all(ng.mul(xt, xt)))
        g_align = grad_of(lambda xt: ng.mean_all(ng.sigmoid(xt)))
        assert np.allclose(g_total, g_sep + lam * g_align, atol=1e-12)

    def test_negative_lambda_rejected(self):
        with pytest.raises(ConfigurationError):
            total_loss(ng.Tensor(np.asarray(1.0)), ng.Tensor(np.asarray(1.0)), -0.1)


class TestCheckpointRoundTrip:
    def test_state_restores_exactly(self, rng, tmp_path):
        m1 = make_model(FusionMode.HIERARCHICAL, seed=1)
        x, e = rand_input(rng)
        ref = m1.forward(ng.Tensor(x), ng.Tensor(e)).mask.data
        path = tmp_path / "model.ckpt"
        ng.save_checkpoint(path, m1.state())
        m2 = make_model(FusionMode.HIERARCHICAL, seed=9)
        m2.load_state(ng.load_checkpoint(path))
        assert np.array_equal(m2.forward(ng.Tensor(x), ng.Tensor(e)).mask.data, ref)

    def test_shape_mismatch_rejected(self, tmp_path):
        m1 = make_model(FusionMode.MIDDLE)
        path = tmp_path / "model.ckpt"
        ng.save_checkpoint(path, m1.state())
        m2 = make_model(FusionMode.LATE)
        with pytest.raises(ConfigurationError):
            m2.load_state(ng.load_checkpoint(path))
