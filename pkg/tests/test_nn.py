import numpy as np
import pytest

from buddy import nn
from helpers import gradcheck

RNG = np.random.default_rng


class TestBackward:
    def test_square(self):
        x = nn.parameter(np.array(3.0))
        y = nn.square(x)
        y.backward()
        assert x.grad == pytest.approx(6.0)

    def test_product(self):
        x = nn.parameter(np.array(2.0))
        y = nn.parameter(np.array(5.0))
        nn.mul(x, y).backward()
        assert x.grad == pytest.approx(5.0)
        assert y.grad == pytest.approx(2.0)

    def test_non_scalar_loss_rejected(self):
        x = nn.parameter(np.ones(3))
        with pytest.raises(nn.NnError, match="scalar"):
            nn.mul(x, 2.0).backward()

    def test_repeated_backward_accumulates(self):
        x = nn.parameter(np.array(3.0))
        y = nn.square(x)
        y.backward()
        y.grad = np.ones(())
        y.backward()
        assert x.grad == pytest.approx(12.0)

    def test_mlp_matches_finite_differences(self):
        rng = RNG(0)
        mlp = nn.Mlp([4, 8, 8, 2], "elu", rng)
        x = rng.normal(size=(5, 4))
        target = rng.normal(size=(5, 2))
        gradcheck(
            lambda: nn.tmean(nn.square(nn.add(mlp(nn.constant(x)), nn.constant(-target)))),
            mlp.params,
        )


class TestOpGradients:
    """Every differentiable op against central differences."""

    def test_elementwise_ops(self):
        rng = RNG(1)
        cases = {
            "add": lambda a, b: nn.add(a, b),
            "mul": lambda a, b: nn.mul(a, b),
            "sub": lambda a, b: a - b,
            "div": lambda a, b: a / b,
        }
        for name, op in cases.items():
            a = nn.parameter(rng.normal(size=(3, 4)))
            b = nn.parameter(rng.normal(size=(3, 4)) + 3.0)
            gradcheck(lambda: nn.tsum(op(a, b)), [a, b])

    def test_bias_broadcast(self):
        rng = RNG(2)
        a = nn.parameter(rng.normal(size=(5, 3)))
        b = nn.parameter(rng.normal(size=(3,)))
        gradcheck(lambda: nn.tsum(nn.square(nn.add(a, b))), [a, b])

    def test_unary_ops(self):
        rng = RNG(3)
        for op in (nn.tanh, nn.relu, nn.elu, nn.exp, nn.square):
            x = nn.parameter(rng.normal(size=(4, 3)) + 0.1)
            gradcheck(lambda: nn.tsum(op(x)), [x])
        x = nn.parameter(np.abs(rng.normal(size=(4, 3))) + 0.5)
        gradcheck(lambda: nn.tsum(nn.log(x)), [x])

    def test_matmul_and_transpose(self):
        rng = RNG(4)
        a = nn.parameter(rng.normal(size=(3, 4)))
        b = nn.parameter(rng.normal(size=(4, 2)))
        gradcheck(lambda: nn.tsum(nn.square(nn.matmul(a, b))), [a, b])
        gradcheck(lambda: nn.tsum(nn.square(nn.matmul(nn.transpose(b), nn.transpose(a)))), [a, b])

    def test_reductions_and_shapes(self):
        rng = RNG(5)
        x = nn.parameter(rng.normal(size=(4, 6)))
        gradcheck(lambda: nn.tmean(x), [x])
        gradcheck(lambda: nn.tsum(nn.square(nn.tmean(x, axis=0))), [x])
        gradcheck(lambda: nn.tsum(nn.square(nn.reshape(x, (8, 3)))), [x])
        gradcheck(lambda: nn.tsum(nn.square(nn.slice_cols(x, 1, 4))), [x])
        gradcheck(lambda: nn.tsum(nn.square(nn.repeat_rows(x, 3))), [x])
        y = nn.parameter(rng.normal(size=(4, 2)))
        gradcheck(lambda: nn.tsum(nn.square(nn.concat_cols([x, y]))), [x, y])

    def test_rowwise_dot_and_weighted_sum(self):
        rng = RNG(6)
        a = nn.parameter(rng.normal(size=(5, 3)))
        b = nn.parameter(rng.normal(size=(5, 3)))
        gradcheck(lambda: nn.tsum(nn.square(nn.rowwise_dot(a, b))), [a, b])
        w = nn.parameter(rng.normal(size=(4, 7)))
        values = rng.normal(size=(4, 7, 6))
        gradcheck(lambda: nn.tsum(nn.square(nn.weighted_value_sum(w, values))), [w])

    def test_softmax_rows(self):
        rng = RNG(7)
        x = nn.parameter(rng.normal(size=(3, 5)))
        t = rng.normal(size=(3, 5))
        gradcheck(
            lambda: nn.tsum(nn.square(nn.add(nn.softmax_rows(x), nn.constant(-t)))), [x]
        )


class TestGumbelSoftmax:
    def test_noise_free_low_temperature_is_argmax(self):
        logits = nn.constant(np.array([1.0, 3.0, 2.0]))
        out = nn.gumbel_softmax(logits, temperature=1e-4, hard=False, noise=False)
        np.testing.assert_allclose(out.data, [0, 1, 0], atol=1e-12)

    def test_hard_is_one_hot(self):
        rng = RNG(8)
        logits = nn.constant(rng.normal(size=(6, 9)))
        out = nn.gumbel_softmax(logits, temperature=1.0, hard=True, rng=rng)
        assert np.allclose(out.data.sum(axis=1), 1.0)
        assert ((out.data == 1.0).sum(axis=1) == 1).all()
        assert ((out.data != 0).sum(axis=1) == 1).all()

    def test_selection_frequencies_match_softmax(self):
        rng = RNG(9)
        logits_row = np.array([0.5, -0.3, 1.2, 0.0, -1.0])
        draws = 100_000
        logits = nn.constant(np.tile(logits_row, (draws, 1)))
        out = nn.gumbel_softmax(logits, temperature=1.0, hard=True, rng=rng)
        freq = out.data.mean(axis=0)
        expected = np.exp(logits_row) / np.exp(logits_row).sum()
        assert np.abs(freq - expected).max() < 0.01

    def test_straight_through_jacobian_matches_soft(self):
        """Hard-mode d(output)/d(logits) equals the soft sample's Jacobian."""
        rng = RNG(10)
        base = rng.normal(size=5)
        noise = nn.gumbel_noise(RNG(11), (5,))

        def jac(hard):
            rows = []
            for i in range(5):
                x = nn.parameter(base.copy())
                shifted = nn.add(x, nn.constant(noise))
                out = nn.gumbel_softmax(shifted, temperature=0.7, hard=hard, noise=False)
                nn.tsum(nn.mul(out, nn.constant(np.eye(5)[i]))).backward()
                rows.append(x.grad.copy())
            return np.stack(rows)

        np.testing.assert_allclose(jac(True), jac(False), atol=1e-12)

    def test_non_finite_logits_rejected(self):
        with pytest.raises(nn.NnError, match="non-finite"):
            nn.gumbel_softmax(nn.constant(np.array([np.nan, 1.0])), 1.0, False, noise=False)


class TestCrossAttention:
    def test_single_key_gets_full_weight(self):
        rng = RNG(12)
        att = nn.CrossAttention(query_dim=4, key_dim=6, heads=2, rng=rng)
        outs, weights = att(nn.constant(rng.normal(size=4)), nn.constant(rng.normal(size=(1, 6))),
                            rng.normal(size=(1, 6)), hard=False, rng=rng)
        for w in weights:
            np.testing.assert_allclose(w.data, [1.0], atol=1e-15)

    def test_hard_output_is_one_raw_value(self):
        rng = RNG(13)
        att = nn.CrossAttention(query_dim=4, key_dim=6, heads=3, rng=rng)
        values = rng.normal(size=(5, 6))
        outs, weights = att(nn.constant(rng.normal(size=4)), nn.constant(rng.normal(size=(5, 6))),
                            values, hard=True, rng=rng)
        for out, w in zip(outs, weights):
            chosen = int(np.argmax(w.data))
            np.testing.assert_allclose(out.data, values[chosen], atol=1e-15)

    def test_weighted_sum_matches_oracle(self):
        rng = RNG(14)
        att = nn.CrossAttention(query_dim=3, key_dim=6, heads=2, width=8, rng=rng)
        q = rng.normal(size=3)
        keys = rng.normal(size=(5, 6))
        values = rng.normal(size=(5, 6))
        outs, weights = att(nn.constant(q), nn.constant(keys), values, hard=False,
                            noise=False, temperature=1.0)
        for h, (out, w) in enumerate(zip(outs, weights)):
            scores = (keys @ att.w_k[h].data) @ (q @ att.w_q[h].data) / np.sqrt(att.width)
            e = np.exp(scores - scores.max())
            soft = e / e.sum()
            np.testing.assert_allclose(w.data, soft, atol=1e-12)
            np.testing.assert_allclose(out.data, soft @ values, atol=1e-12)

    def test_empty_keys_rejected(self):
        rng = RNG(15)
        att = nn.CrossAttention(query_dim=3, key_dim=6, heads=1, rng=rng)
        with pytest.raises(nn.NnError, match="non-empty"):
            att(nn.constant(np.zeros(3)), nn.constant(np.zeros((0, 6))), np.zeros((0, 6)),
                hard=False, rng=rng)


class TestAdam:
    def test_zero_gradient_keeps_params(self):
        p = [np.array([1.0, -2.0])]
        new, state = nn.adam_step(p, [np.zeros(2)], None, lr=0.1)
        np.testing.assert_array_equal(new[0], p[0])

    def test_constant_gradient_step_approaches_lr_sign(self):
        p = [np.array([0.0])]
        g = [np.array([0.37])]
        state = None
        prev = p[0].copy()
        for _ in range(500):
            p, state = nn.adam_step(p, g, state, lr=0.01)
        step = prev - p[0]
        # After bias correction settles, each step has magnitude ~lr.
        last = p[0].copy()
        p, state = nn.adam_step(p, g, state, lr=0.01)
        np.testing.assert_allclose(last - p[0], 0.01 * np.sign(g[0]), rtol=1e-3)

    def test_ten_step_trace_matches_oracle(self):
        rng = RNG(16)
        lr, b1, b2, eps = 1e-2, 0.9, 0.999, 1e-8
        p = rng.normal(size=(3,))
        grads = [rng.normal(size=(3,)) for _ in range(10)]
        # Independent re-implementation.
        m = np.zeros(3)
        v = np.zeros(3)
        ref = p.copy()
        for t, g in enumerate(grads, start=1):
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            ref = ref - lr * (m / (1 - b1**t)) / (np.sqrt(v / (1 - b2**t)) + eps)
        params, state = [p.copy()], None
        for g in grads:
            params, state = nn.adam_step(params, [g], state, lr, b1, b2, eps)
        np.testing.assert_allclose(params[0], ref, atol=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(nn.NnError, match="shape"):
            nn.adam_step([np.zeros(2)], [np.zeros(3)], None)


class TestCheckpoint:
    def test_roundtrip_bit_exact(self, tmp_path):
        rng = RNG(17)
        arrays = {"w": rng.normal(size=(3, 4)), "b": rng.normal(size=(4,))}
        path = tmp_path / "ckpt.json"
        nn.save_checkpoint(path, arrays, {"rng_state": "x", "step": 7})
        loaded, meta = nn.load_checkpoint(path)
        for k in arrays:
            np.testing.assert_array_equal(loaded[k], arrays[k])
        assert meta["step"] == 7

    def test_wrong_format_rejected(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{}")
        with pytest.raises(nn.NnError, match="not a checkpoint"):
            nn.load_checkpoint(path)


class TestDeterminism:
    def test_same_seed_same_init(self):
        a = nn.Mlp([3, 5, 2], "tanh", RNG(42))
        b = nn.Mlp([3, 5, 2], "tanh", RNG(42))
        for pa, pb in zip(a.params, b.params):
            np.testing.assert_array_equal(pa.data, pb.data)

    def test_forward_np_matches_graph_forward(self):
        rng = RNG(18)
        mlp = nn.Mlp([4, 7, 3], "elu", rng)
        x = rng.normal(size=(6, 4))
        np.testing.assert_allclose(mlp.forward_np(x), mlp(nn.constant(x)).data, atol=1e-15)
