"""Coordinate-attention fusion.

Pooling is checked against row/column averaging done in the test; the
attention identities (0.25x under zero init, strict contraction, rank-1
row/column factorization) follow from sigmoid bounds and the
multiplicative form of the gate.
"""

import numpy as np
import pytest

from tamperloc import ops
from tamperloc.fusion import CoordinateAttentionFusion, FusionStack
from tamperloc.module import init_parameters
from tamperloc.tensor import Tensor


class TestPooling:
    def test_constant_input(self):
        caf = CoordinateAttentionFusion(4)
        z = Tensor(np.full((1, 8, 3, 5), 0.7))
        zh, zw = caf.pool(z)
        assert zh.shape == (1, 8, 3, 1) and zw.shape == (1, 8, 1, 5)
        assert np.allclose(zh.data, 0.7) and np.allclose(zw.data, 0.7)

    def test_column_index_ramp(self):
        h, w = 3, 5
        z = np.broadcast_to(np.arange(w, dtype=np.float64), (1, 2, h, w))
        caf = CoordinateAttentionFusion(1)
        zh, zw = caf.pool(Tensor(np.ascontiguousarray(z)))
        assert np.allclose(zh.data, (w - 1) / 2)  # every row averages 0..4
        assert np.allclose(zw.data[0, 0, 0], np.arange(w))

    def test_averaging_commutes(self, rng):
        z = Tensor(rng.normal(0, 1, (2, 4, 6, 7)))
        caf = CoordinateAttentionFusion(2)
        zh, zw = caf.pool(z)
        assert abs(zh.data.mean() - z.data.mean()) < 1e-12
        assert abs(zw.data.mean() - z.data.mean()) < 1e-12


class TestAttend:
    def test_joint_encoding_length_and_range(self, rng):
        # composing the module's own encode layers on the pooled joint
        # profile: spatial length is H+W and sigmoid keeps it in (0,1)
        caf = CoordinateAttentionFusion(4)
        init_parameters(caf, seed=0)
        caf.eval()
        z = Tensor(rng.normal(0, 1, (2, 8, 5, 7)))
        zh, zw = caf.pool(z)
        joint = ops.concat([zw.transpose(0, 1, 3, 2), zh], axis=2)
        t = ops.sigmoid(caf.encode_bn(caf.encode(joint)))
        assert t.shape == (2, caf.mid, 12, 1)
        assert np.all(t.data > 0) and np.all(t.data < 1)

    def test_gate_shapes_and_range(self, rng):
        caf = CoordinateAttentionFusion(4)
        init_parameters(caf, seed=1)
        caf.eval()
        z = Tensor(rng.normal(0, 1, (2, 8, 5, 7)))
        mh, mw = caf.attend(z)
        assert mh.shape == (2, 8, 5, 1)
        assert mw.shape == (2, 8, 1, 7)
        for m in (mh, mw):
            assert np.all(m.data > 0) and np.all(m.data < 1)


class TestFusion:
    def test_zero_init_gives_exact_quarter(self, rng):
        # zero-init decode convs leave both gates at sigmoid(0) = 0.5;
        # two exact halvings give bitwise 0.25 * concat
        caf = CoordinateAttentionFusion(4)
        caf.eval()
        a = Tensor(rng.normal(0, 1, (2, 4, 5, 5)))
        b = Tensor(rng.normal(0, 1, (2, 4, 5, 5)))
        out = caf(a, b)
        expected = 0.25 * np.concatenate([a.data, b.data], axis=1)
        assert np.array_equal(out.data, expected)

    def test_strict_contraction(self, rng):
        caf = CoordinateAttentionFusion(4)
        init_parameters(caf, seed=2)
        caf.eval()
        a = Tensor(rng.normal(0, 1, (1, 4, 6, 6)))
        b = Tensor(rng.normal(0, 1, (1, 4, 6, 6)))
        out = caf(a, b).data
        z = np.concatenate([a.data, b.data], axis=1)
        nz = z != 0
        assert np.all(np.abs(out[nz]) < np.abs(z[nz]))
        assert np.all(np.sign(out[nz]) == np.sign(z[nz]))

    def test_rank_one_separability(self, rng):
        # the gate applied at (i, j) factors into a row term and a
        # column term, so out/z recovers mh[i] * mw[j]
        caf = CoordinateAttentionFusion(2)
        init_parameters(caf, seed=3)
        caf.eval()
        a = Tensor(rng.normal(0, 1, (1, 2, 4, 5)) + 3.0)  # keep z away from 0
        b = Tensor(rng.normal(0, 1, (1, 2, 4, 5)) + 3.0)
        z = ops.concat([a, b], axis=1)
        mh, mw = caf.attend(z)
        out = caf(a, b).data
        ratio = out / z.data
        expected = mh.data * mw.data  # broadcasts to [1,4,4,5]
        assert np.allclose(ratio, expected, rtol=1e-12)

    def test_rejects_mismatched_inputs(self, rng):
        caf = CoordinateAttentionFusion(4)
        with pytest.raises(ValueError, match="must match"):
            caf(Tensor(rng.random((1, 4, 5, 5))), Tensor(rng.random((1, 4, 6, 5))))
        with pytest.raises(ValueError, match="built for"):
            caf(Tensor(rng.random((1, 2, 5, 5))), Tensor(rng.random((1, 2, 5, 5))))


class TestFusionStack:
    def make_pyramids(self, rng, dims=(2, 4), sizes=(8, 4)):
        rgb = [Tensor(rng.normal(0, 1, (1, d, s, s))) for d, s in zip(dims, sizes)]
        noise = [Tensor(rng.normal(0, 1, (1, d, s, s))) for d, s in zip(dims, sizes)]
        return rgb, noise

    def test_fused_channel_counts(self, rng):
        stack = FusionStack((2, 4), enabled=True)
        init_parameters(stack, seed=4)
        stack.eval()
        rgb, noise = self.make_pyramids(rng)
        fused = stack(rgb, noise)
        assert [f.shape for f in fused] == [(1, 4, 8, 8), (1, 8, 4, 4)]

    def test_per_scale_independence(self, rng):
        stack = FusionStack((2, 4), enabled=True)
        init_parameters(stack, seed=5)
        stack.eval()
        rgb, noise = self.make_pyramids(rng)
        base = [f.data.copy() for f in stack(rgb, noise)]

        rgb2 = list(rgb)
        rgb2[1] = Tensor(rgb[1].data + 0.5)  # perturb scale 2 only
        after = stack(rgb2, noise)
        assert np.array_equal(after[0].data, base[0])
        assert not np.array_equal(after[1].data, base[1])

    def test_disabled_stack_is_plain_concat(self, rng):
        stack = FusionStack((2, 4), enabled=False)
        rgb, noise = self.make_pyramids(rng)
        fused = stack(rgb, noise)
        for f, a, b in zip(fused, rgb, noise):
            assert np.array_equal(
                f.data, np.concatenate([a.data, b.data], axis=1)
            )
