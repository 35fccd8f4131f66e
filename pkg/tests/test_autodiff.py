import numpy as np
import pytest

from thepose.autodiff import Tape, Tensor, gradient_check
from thepose.errors import Error


def rand(shape, seed, lo=0.1):
    # keep magnitudes away from relu/l1 kinks
    rng = np.random.default_rng(seed)
    x = rng.uniform(lo, 1.0, size=shape)
    return x * rng.choice([-1.0, 1.0], size=shape)


class TestForwardValues:
    def test_relu(self):
        t = Tape()
        out = t.relu(t.leaf([[-1.0, 2.0]]))
        np.testing.assert_array_equal(out.data, [[0.0, 2.0]])

    def test_max_over_groups_hand_example(self):
        t = Tape()
        x = t.leaf([[1.0], [5.0], [3.0]])
        out = t.max_over_groups(x, [[1, 2]])
        assert out.data[0, 0] == 5.0

    def test_concat_widths(self):
        t = Tape()
        out = t.concat([t.leaf(np.zeros((4, 3))), t.leaf(np.ones((4, 5)))])
        assert out.shape == (4, 8)

    def test_mean_over_groups(self):
        t = Tape()
        x = t.leaf([[2.0], [4.0], [9.0]])
        out = t.mean_over_groups(x, [[0, 1], [1, 2]])
        np.testing.assert_allclose(out.data, [[3.0], [6.5]])

    def test_softmax_pool_uniform_for_equal_scores(self):
        t = Tape()
        feats = t.leaf([[1.0, 2.0], [3.0, 4.0]])
        out = t.softmax_pool(t.leaf([[0.5], [0.5]]), feats)
        np.testing.assert_allclose(out.data, [[2.0, 3.0]])

    def test_gather_and_slice(self):
        t = Tape()
        x = t.leaf(np.arange(12.0).reshape(4, 3))
        g = t.gather_rows(x, [2, 0, 0])
        np.testing.assert_array_equal(g.data[1], x.data[0])
        s = t.slice_cols(x, 1, 3)
        assert s.shape == (4, 2)

    def test_tensor_must_be_2d(self):
        with pytest.raises(Error) as e:
            Tensor(np.zeros(3))
        assert e.value.kind == "shape"

    def test_shape_errors(self):
        t = Tape()
        with pytest.raises(Error) as e:
            t.add(t.leaf(np.zeros((2, 2))), t.leaf(np.zeros((2, 3))))
        assert e.value.kind == "shape"
        with pytest.raises(Error) as e:
            t.gather_rows(t.leaf(np.zeros((2, 2))), [5])
        assert e.value.kind == "index"


class TestBackwardValues:
    def test_mse_scalar_gradient(self):
        # loss = mean((x-0)^2) with x=[3] -> d/dx = 2*3/1 = 6
        t = Tape()
        x = t.leaf([[3.0]], requires_grad=True)
        loss = t.mse(x, t.leaf([[0.0]]))
        t.backward(loss)
        np.testing.assert_allclose(x.grad, [[6.0]])

    def test_constant_loss_zero_gradients(self):
        t = Tape()
        x = t.leaf(rand((3, 2), 0), requires_grad=True)
        y = t.relu(x)  # on tape but unused by the loss
        loss = t.mse(t.leaf([[1.0]]), t.leaf([[0.0]]))
        t.backward(loss)
        assert x.grad is not None and np.all(x.grad == 0.0)
        assert y is not None

    def test_non_scalar_loss_rejected(self):
        t = Tape()
        x = t.leaf(np.ones((2, 2)), requires_grad=True)
        with pytest.raises(Error) as e:
            t.backward(t.relu(x))
        assert e.value.kind == "non-scalar-loss"

    def test_backward_deterministic(self):
        def run():
            t = Tape()
            x = t.leaf(rand((5, 4), 3), requires_grad=True)
            h = t.relu(t.linear(x, t.leaf(rand((4, 3), 4)), t.leaf(rand((1, 3), 5))))
            loss = t.mse(h, t.leaf(np.zeros((5, 3))))
            t.backward(loss)
            return x.grad

        a, b = run(), run()
        assert a.tobytes() == b.tobytes()


class TestGradientChecks:
    """Every primitive against central differences, rel. error < 1e-4 (f64)."""

    def test_identity_is_exact(self):
        err = gradient_check(lambda t, x: t.mse(x, t.leaf(np.zeros((2, 2)))),
                             np.full((2, 2), 0.5))
        assert err < 1e-9

    def test_linear_layer(self):
        W = rand((4, 3), 1)
        b = rand((1, 3), 2)

        def build(t, x):
            return t.mse(t.linear(x, t.leaf(W), t.leaf(b)), t.leaf(np.zeros((5, 3))))

        assert gradient_check(build, rand((5, 4), 3)) < 1e-6

    def test_linear_wrt_weights(self):
        x = rand((5, 4), 4)

        def build(t, w):
            return t.mse(t.linear(t.leaf(x), w, t.leaf(np.zeros((1, 3)))),
                         t.leaf(np.ones((5, 3))))

        assert gradient_check(build, rand((4, 3), 5)) < 1e-6

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_relu_away_from_kink(self, seed):
        def build(t, x):
            return t.mse(t.relu(x), t.leaf(np.zeros((3, 3))))

        assert gradient_check(build, rand((3, 3), seed, lo=0.1)) < 1e-6

    def test_concat_slice_add_sub_scale(self):
        def build(t, x):
            a = t.slice_cols(x, 0, 2)
            b = t.slice_cols(x, 2, 4)
            c = t.concat([t.add(a, b), t.sub(a, b), t.scale(a, -1.7)])
            return t.mse(c, t.leaf(np.zeros((3, 6))))

        assert gradient_check(build, rand((3, 4), 7)) < 1e-6

    def test_gather_rows(self):
        idx = [2, 0, 1, 0, 2]

        def build(t, x):
            return t.mse(t.gather_rows(x, idx), t.leaf(np.zeros((5, 3))))

        assert gradient_check(build, rand((3, 3), 8)) < 1e-6

    def test_neighbor_max_sum_wrt_a(self):
        nbr = np.array([[1, 2], [2, 0], [0, 1], [1, 0]])
        b = rand((4, 3), 9)

        def build(t, a):
            return t.mse(t.neighbor_max_sum(a, t.leaf(b), nbr),
                         t.leaf(np.zeros((4, 3))))

        assert gradient_check(build, rand((4, 3), 19)) < 1e-6

    def test_neighbor_max_sum_wrt_b(self):
        nbr = np.array([[1, 2], [2, 0], [0, 1], [1, 0]])
        a = rand((4, 3), 29)

        def build(t, b):
            return t.mse(t.neighbor_max_sum(t.leaf(a), b, nbr),
                         t.leaf(np.zeros((4, 3))))

        assert gradient_check(build, rand((4, 3), 39)) < 1e-6

    def test_neighbor_max_sum_value(self):
        t = Tape()
        a = t.leaf([[0.0], [10.0]])
        b = t.leaf([[1.0], [2.0]])
        out = t.neighbor_max_sum(a, b, np.array([[0, 1], [0, 0]]))
        np.testing.assert_allclose(out.data, [[2.0], [11.0]])

    def test_max_rows(self):
        def build(t, x):
            return t.mse(t.max_rows(x), t.leaf(np.zeros((1, 3))))

        assert gradient_check(build, rand((5, 3), 49)) < 1e-6
        t = Tape()
        out = t.max_rows(t.leaf([[1.0, 5.0], [3.0, 2.0]]))
        np.testing.assert_array_equal(out.data, [[3.0, 5.0]])

    def test_max_over_groups(self):
        groups = np.array([[0, 1, 2], [2, 3, 4], [4, 0, 1]])

        def build(t, x):
            return t.mse(t.max_over_groups(x, groups), t.leaf(np.zeros((3, 3))))

        assert gradient_check(build, rand((5, 3), 10)) < 1e-6

    def test_mean_over_groups(self):
        groups = np.array([[0, 1], [2, 3], [3, 0]])

        def build(t, x):
            return t.mse(t.mean_over_groups(x, groups), t.leaf(np.zeros((3, 2))))

        assert gradient_check(build, rand((4, 2), 11)) < 1e-6

    def test_softmax_pool_wrt_scores(self):
        feats = rand((6, 3), 12)

        def build(t, s):
            return t.mse(t.softmax_pool(s, t.leaf(feats)), t.leaf(np.zeros((1, 3))))

        assert gradient_check(build, rand((6, 1), 13)) < 1e-6

    def test_softmax_pool_wrt_feats(self):
        scores = rand((6, 1), 14)

        def build(t, f):
            return t.mse(t.softmax_pool(t.leaf(scores), f), t.leaf(np.zeros((1, 3))))

        assert gradient_check(build, rand((6, 3), 15)) < 1e-6

    def test_l1(self):
        y = rand((4, 3), 16)

        def build(t, x):
            return t.l1(x, t.leaf(y))

        # shift x away from y so |.| stays smooth
        assert gradient_check(build, y + rand((4, 3), 17, lo=0.3)) < 1e-6

    def test_axis_angle(self):
        def build(t, a):
            return t.axis_angle(a, [0.0, 0.0, 1.0])

        a = np.array([[0.4, -0.7, 0.5]])
        assert gradient_check(build, a) < 1e-6

    def test_three_layer_mlp_composite(self):
        # composite MLP: gradients match finite differences (rel err < 1e-4)
        rng = np.random.default_rng(20)
        Ws = [rng.standard_normal((4, 6)), rng.standard_normal((6, 5)),
              rng.standard_normal((5, 2))]
        bs = [rng.standard_normal((1, 6)), rng.standard_normal((1, 5)),
              rng.standard_normal((1, 2))]

        def build(t, x):
            h = x
            for W, b in zip(Ws, bs):
                h = t.relu(t.linear(h, t.leaf(W), t.leaf(b)))
            return t.mse(h, t.leaf(np.zeros((3, 2))))

        assert gradient_check(build, rand((3, 4), 21)) < 1e-4

    def test_permuting_group_members_changes_nothing(self):
        x = rand((6, 4), 22)
        t1, t2 = Tape(), Tape()
        a = t1.max_over_groups(t1.leaf(x), np.array([[0, 1, 2], [3, 4, 5]]))
        b = t2.max_over_groups(t2.leaf(x), np.array([[2, 0, 1], [5, 3, 4]]))
        assert a.data.tobytes() == b.data.tobytes()
