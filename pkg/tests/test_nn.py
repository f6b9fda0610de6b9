import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cardicat import nn
from cardicat.errors import GraphError, NumericalError
from cardicat.nn import tensor as T
from conftest import numeric_grad, rel_err


def naive_matmul(a, b):
    out = np.zeros((a.shape[0], b.shape[1]))
    for i in range(a.shape[0]):
        for j in range(b.shape[1]):
            for k in range(a.shape[1]):
                out[i, j] += a[i, k] * b[k, j]
    return out


class TestDense:
    def test_zero_layer(self):
        layer = nn.DenseLayer(4, 3, None, dtype=np.float64)
        y = nn.dense_forward(layer, np.ones((2, 4)))
        np.testing.assert_array_equal(y.data, np.zeros((2, 3)))

    def test_identity(self):
        layer = nn.DenseLayer(3, 3, None, dtype=np.float64)
        layer.weight.data[...] = np.eye(3)
        x = np.random.default_rng(0).normal(size=(5, 3))
        np.testing.assert_array_equal(layer(x).data, x)

    def test_matches_naive_matmul(self):
        rng = np.random.default_rng(1)
        layer = nn.DenseLayer(3, 4, nn.Rng(2), dtype=np.float64)
        layer.bias.data[...] = rng.normal(size=4)
        x = rng.normal(size=(2, 3))
        expected = naive_matmul(x, layer.weight.data) + layer.bias.data
        np.testing.assert_allclose(layer(x).data, expected, atol=1e-12)

    def test_shape_mismatch(self):
        layer = nn.DenseLayer(3, 2, None)
        with pytest.raises(ValueError):
            layer(np.zeros((2, 4)))

    def test_init_bounds(self):
        layer = nn.DenseLayer(30, 20, nn.Rng(0))
        bound = np.sqrt(6 / 50)
        assert np.abs(layer.weight.data).max() <= bound
        assert np.all(layer.bias.data == 0)


class TestActivations:
    def test_relu(self):
        np.testing.assert_array_equal(T.relu(T.Tensor(np.array([-1.0, 2.0]))).data, [0.0, 2.0])

    def test_tanh_zero(self):
        assert T.tanh(T.Tensor(np.zeros(1))).data[0] == 0.0

    def test_softmax_uniform(self):
        p = nn.softmax(T.Tensor(np.full((1, 4), 3.7))).data
        np.testing.assert_allclose(p, 0.25, atol=1e-15)

    def test_softmax_large_logits_stable(self):
        p = nn.softmax_np(np.array([[1000.0, 0.0, -1000.0]]))
        assert np.all(np.isfinite(p))
        assert p[0, 0] == pytest.approx(1.0)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 10_000))
    def test_softmax_rows_simplex(self, rows, cols, seed):
        x = np.random.default_rng(seed).normal(scale=20, size=(rows, cols))
        p = nn.softmax_np(x)
        np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)
        assert np.all(p > 0)


def _check_op(build, *shapes, seed=0):
    """Finite-difference check of a scalar function of several input tensors."""
    rng = np.random.default_rng(seed)
    arrays = [rng.normal(size=s) for s in shapes]

    def value():
        return build(*[T.Tensor(a) for a in arrays]).item()

    leaves = [T.Tensor(a, requires_grad=True) for a in arrays]
    out = build(*leaves)
    out.backward()
    for leaf, a in zip(leaves, arrays):
        num = numeric_grad(value, a)
        assert rel_err(leaf.grad, num) < 1e-4


class TestGradients:
    def test_dead_relu_at_zero(self):
        w = nn.Parameter(np.zeros((3, 2)), "w")
        x = T.Tensor(np.random.default_rng(0).normal(size=(4, 3)))
        T.relu(x @ w).sum().backward()
        np.testing.assert_array_equal(w.grad, np.zeros((3, 2)))

    @pytest.mark.parametrize("op", ["matmul", "linear", "relu", "tanh", "exp", "square",
                                    "log_softmax", "concat", "getitem", "mean_axis"])
    def test_op_matches_finite_differences(self, op):
        if op == "matmul":
            _check_op(lambda a, b: T.square(a @ b).sum(), (3, 4), (4, 2))
        elif op == "linear":
            _check_op(lambda x, w, b: T.tanh(T.linear(x, w, b)).sum(), (3, 4), (4, 2), (2,))
        elif op == "relu":
            _check_op(lambda a: (T.relu(a) * a).sum(), (5, 3))
        elif op == "tanh":
            _check_op(lambda a: T.tanh(a).sum(), (2, 3))
        elif op == "exp":
            _check_op(lambda a: T.exp(a * 0.5).mean(), (2, 3))
        elif op == "square":
            _check_op(lambda a, b: T.square(a - b).sum(), (2, 3), (1, 3))
        elif op == "log_softmax":
            _check_op(lambda a, w: (T.log_softmax(a) * w).sum(), (4, 5), (4, 5))
        elif op == "concat":
            _check_op(lambda a, b: T.square(T.concat([a, b], axis=1)).sum(), (2, 3), (2, 1))
        elif op == "getitem":
            _check_op(lambda a: T.square(a[:, 1:3]).sum(), (3, 4))
        elif op == "mean_axis":
            _check_op(lambda a: T.square(a - a.mean(axis=0, keepdims=True)).mean(), (5, 3))

    def test_gather_rows_accumulates_repeats(self):
        table = nn.Parameter(np.arange(8.0).reshape(4, 2), "t")
        idx = np.array([1, 1, 3])
        T.gather_rows(table, idx).sum().backward()
        np.testing.assert_array_equal(table.grad, [[0, 0], [2, 2], [0, 0], [1, 1]])

    def test_mse_gradient_on_target(self):
        rng = np.random.default_rng(4)
        target = T.Tensor(rng.normal(size=(6, 3)), requires_grad=True)
        pred = rng.normal(size=(6, 3))
        T.square(target - pred).sum(axis=1).mean().backward()
        np.testing.assert_allclose(target.grad, 2 * (target.data - pred) / 6, atol=1e-14)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(1, 4), st.integers(1, 4), st.integers(1, 4), st.integers(0, 1000))
    def test_random_shapes_two_layer(self, n, d, k, seed):
        _check_op(lambda x, w1, w2: T.tanh(T.relu(x @ w1) @ w2).sum(), (n, d), (d, k), (k, 2),
                  seed=seed)

    def test_graph_cannot_be_replayed(self):
        w = nn.Parameter(np.ones((2, 2)), "w")
        loss = (T.Tensor(np.ones((1, 2))) @ w).sum()
        loss.backward()
        with pytest.raises(GraphError):
            loss.backward()

    def test_graph_rejected_after_update(self):
        w = nn.Parameter(np.ones((2, 2)), "w")
        store = nn.ParamStore([w])
        opt = nn.Adam(store)
        loss = (T.Tensor(np.ones((1, 2))) @ w).sum()
        w.grad = np.ones((2, 2))
        opt.step()
        with pytest.raises(GraphError):
            loss.backward()


class TestAdam:
    def test_first_step_moves_by_lr(self):
        p = nn.Parameter(np.zeros(5), "p")
        opt = nn.Adam(nn.ParamStore([p]), lr=0.01)
        p.grad = np.ones(5)
        opt.step()
        # m_hat / (sqrt(v_hat) + eps) = 1 / (1 + 1e-8)
        np.testing.assert_allclose(p.data, -0.01 / (1 + 1e-8), rtol=1e-12)

    def test_zero_gradient_is_noop(self):
        p = nn.Parameter(np.arange(4.0), "p")
        opt = nn.Adam(nn.ParamStore([p]))
        p.grad = np.zeros(4)
        opt.step()
        np.testing.assert_array_equal(p.data, np.arange(4.0))

    def test_nonfinite_gradient_aborts_without_update(self):
        a = nn.Parameter(np.zeros(2), "a")
        b = nn.Parameter(np.zeros(2), "b")
        opt = nn.Adam(nn.ParamStore([a, b]))
        a.grad = np.ones(2)
        b.grad = np.array([np.nan, 0.0])
        with pytest.raises(NumericalError):
            opt.step()
        assert opt.t == 0
        np.testing.assert_array_equal(a.data, 0.0)

    def test_overflowing_update_aborts_without_update(self):
        a = nn.Parameter(np.zeros(2, np.float32), "a")
        b = nn.Parameter(np.zeros(2, np.float32), "b")
        opt = nn.Adam(nn.ParamStore([a, b]), lr=1e300)
        a.grad = np.ones(2)
        b.grad = np.ones(2)
        with pytest.raises(NumericalError):
            opt.step()
        assert opt.t == 0
        np.testing.assert_array_equal(a.data, 0.0)

    def test_bad_hyperparameters(self):
        with pytest.raises(ValueError):
            nn.Adam(nn.ParamStore(), lr=0)

    def test_deterministic(self):
        def run():
            rng = nn.Rng(11)
            layer = nn.DenseLayer(4, 3, rng)
            store = nn.ParamStore(layer.parameters())
            opt = nn.Adam(store)
            for _ in range(10):
                x = T.Tensor(rng.normal((8, 4), np.float32))
                store.zero_grad()
                T.square(layer(x)).mean().backward()
                opt.step()
            return [p.data.copy() for p in store]

        for a, b in zip(run(), run()):
            assert a.tobytes() == b.tobytes()


class TestSampling:
    def test_same_seed_same_stream(self):
        assert nn.Rng(5).normal(10).tobytes() == nn.Rng(5).normal(10).tobytes()
        assert nn.Rng(5).normal(10).tobytes() != nn.Rng(6).normal(10).tobytes()

    def test_reparameterize_zero_noise(self):
        mu = np.array([[1.0, -2.0]])
        z = nn.reparameterize(mu, np.array([[3.0, 4.0]]), np.zeros((1, 2)))
        np.testing.assert_array_equal(z.data, mu)

    def test_reparameterize_zero_sigma(self):
        mu = np.array([[0.5]])
        z = nn.reparameterize(mu, np.zeros((1, 1)), np.array([[7.0]]))
        np.testing.assert_array_equal(z.data, mu)

    def test_monte_carlo_moments(self):
        mu, sigma = 1.5, 0.7
        eps = nn.gauss_sample(nn.Rng(0), (100_000,))
        z = nn.reparameterize(np.full(100_000, mu), np.full(100_000, sigma), eps).data
        assert abs(z.mean() - mu) < 0.02
        assert abs(z.std() - sigma) < 0.02

    def test_gradient_flows_to_mu_and_sigma_only(self):
        mu = T.Tensor(np.array([[0.3, -0.1]]), requires_grad=True)
        sigma = T.Tensor(np.array([[1.2, 0.4]]), requires_grad=True)
        eps = np.array([[0.5, -2.0]])
        nn.reparameterize(mu, sigma, eps).sum().backward()
        np.testing.assert_array_equal(mu.grad, [[1.0, 1.0]])
        np.testing.assert_array_equal(sigma.grad, eps)


class TestParamFile:
    def test_roundtrip(self, tmp_path):
        arrays = {"a": np.arange(6, dtype=np.float32).reshape(2, 3), "b": np.ones(4, np.float32)}
        nn.write_params(tmp_path / "p.bin", arrays, {"schema_hash": "abc"})
        head, back = nn.read_params(tmp_path / "p.bin")
        assert head["names"] == ["a", "b"] and head["shapes"] == [[2, 3], [4]]
        assert head["schema_hash"] == "abc"
        for k in arrays:
            np.testing.assert_array_equal(back[k], arrays[k])

    def test_payload_is_little_endian_float32(self, tmp_path):
        nn.write_params(tmp_path / "p.bin", {"x": np.array([1.5], np.float32)})
        raw = (tmp_path / "p.bin").read_bytes()
        assert raw.endswith(np.array([1.5], "<f4").tobytes())

    def test_rejects_garbage(self, tmp_path):
        from cardicat.errors import CheckpointError
        (tmp_path / "bad.bin").write_bytes(b"nope")
        with pytest.raises(CheckpointError):
            nn.read_params(tmp_path / "bad.bin")

