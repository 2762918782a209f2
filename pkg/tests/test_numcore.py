import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from homemorl import numcore as nc
from homemorl.numcore import _pymlp
from homemorl.numcore.serialize import from_bytes, to_bytes

try:
    from homemorl.numcore import _cmlp
except ImportError:  # extension not built
    _cmlp = None

KERNELS = [pytest.param(_pymlp, id="python"),
           pytest.param(_cmlp, id="cython",
                        marks=pytest.mark.skipif(_cmlp is None, reason="extension not built"))]


def ref_forward(theta, sizes, sigmoid_all, X):
    """Loop-per-layer oracle written independently of the kernels."""
    n_w = sum(a * b for a, b in zip(sizes[:-1], sizes[1:]))
    off, boff = 0, n_w
    h = X
    L = len(sizes) - 1
    for i in range(L):
        a, b = sizes[i], sizes[i + 1]
        W = theta[off:off + a * b].reshape(a, b)
        c = theta[boff:boff + b]
        off += a * b
        boff += b
        z = h @ W + c
        if sigmoid_all:
            h = 1 / (1 + np.exp(-z))
        elif i < L - 1:
            h = np.maximum(z, 0)
        else:
            h = z
    return h


def central_fd(params, X, G, eps=1e-6):
    theta = params.theta
    g = np.zeros_like(theta)
    for j in range(len(theta)):
        tp, tm = theta.copy(), theta.copy()
        tp[j] += eps
        tm[j] -= eps
        fp = np.sum(nc.forward(nc.MLPParams(params.shape, tp), X) * G)
        fm = np.sum(nc.forward(nc.MLPParams(params.shape, tm), X) * G)
        g[j] = (fp - fm) / (2 * eps)
    return g


@pytest.mark.parametrize("kernel", KERNELS)
@pytest.mark.parametrize("act", [nc.RELU, nc.SIGMOID])
def test_forward_matches_oracle(kernel, act, rng):
    sizes = (5, 7, 3, 2)
    p = nc.init_params(sizes, rng, act)
    X = rng.normal(size=(11, 5))
    out = kernel.forward_cache(p.theta, sizes, act == nc.SIGMOID, X)[-1]
    np.testing.assert_allclose(out, ref_forward(p.theta, sizes, act == nc.SIGMOID, X), atol=1e-12)


@pytest.mark.skipif(_cmlp is None, reason="extension not built")
def test_backends_agree(rng):
    sizes = (6, 16, 16, 4)
    p = nc.init_params(sizes, rng)
    X = rng.normal(size=(33, 6))
    G = rng.normal(size=(33, 4))
    a_py = _pymlp.forward_cache(p.theta, sizes, False, X)
    a_c = _cmlp.forward_cache(p.theta, sizes, False, X)
    for u, v in zip(a_py, a_c):
        np.testing.assert_allclose(u, v, atol=1e-12)
    np.testing.assert_allclose(_pymlp.backward_cache(p.theta, sizes, False, a_py, G),
                               _cmlp.backward_cache(p.theta, sizes, False, a_c, G), atol=1e-12)


@pytest.mark.parametrize("act", [nc.RELU, nc.SIGMOID])
def test_gradient_central_difference(act):
    rng = np.random.default_rng(7)
    for _ in range(5):
        sizes = tuple(int(v) for v in rng.integers(1, 6, size=rng.integers(2, 5)))
        shape = nc.LayerShape(sizes, act)
        # random biases keep ReLU pre-activations away from the kink at zero
        p = nc.MLPParams(shape, rng.normal(size=shape.n_params))
        X = rng.normal(size=(4, sizes[0]))
        G = rng.normal(size=(4, sizes[-1]))
        g = nc.backward(p, X, G)
        fd = central_fd(p, X, G)
        err = np.abs(g - fd) / np.maximum(1.0, np.abs(fd))
        assert err.max() < 1e-6


def test_layer_layout_and_param_count():
    shape = nc.LayerShape((3, 4, 2))
    assert shape.n_params == 3 * 4 + 4 * 2 + 4 + 2
    p = nc.MLPParams(shape, np.arange(shape.n_params, dtype=float))
    (W0, b0), (W1, b1) = p.layers()
    assert W0.shape == (3, 4) and W0[0, 1] == 1.0
    assert W1[0, 0] == 12.0
    assert b0[0] == 20.0 and b1[-1] == shape.n_params - 1


def test_init_zero_biases_and_bounds(rng):
    p = nc.init_params((10, 20, 3), rng)
    (W0, b0), (W1, b1) = p.layers()
    assert not b0.any() and not b1.any()
    assert np.abs(W0).max() <= np.sqrt(6 / 10)


def test_forward_single_vector_and_batch(rng):
    p = nc.init_params((3, 5, 2), rng)
    x = rng.normal(size=3)
    assert nc.forward(p, x).shape == (2,)
    np.testing.assert_allclose(nc.forward(p, x), nc.forward(p, x[None])[0])


def test_shape_errors(rng):
    p = nc.init_params((3, 5, 2), rng)
    with pytest.raises(nc.ShapeError):
        nc.forward(p, np.zeros((2, 4)))
    with pytest.raises(nc.ShapeError):
        nc.mse_loss_grad(np.zeros(0), np.zeros(0))
    with pytest.raises(nc.ShapeError):
        nc.MLPParams(p.shape, np.zeros(3))


def test_backward_rejects_nan(rng):
    p = nc.init_params((2, 3, 1), rng)
    with pytest.raises(nc.NumericError):
        nc.backward(p, np.array([[np.nan, 0.0]]), np.ones((1, 1)))


def test_adam_step_first_update_is_lr_sign():
    p = nc.MLPParams(nc.LayerShape((1, 1)), np.array([1.0, 2.0]))
    adam = nc.AdamState.zeros(2, lr=0.1)
    new, st2 = nc.adam_step(p, adam, np.array([0.5, -3.0]))
    # bias correction makes the first step lr * g / |g|
    np.testing.assert_allclose(new.theta, [0.9, 2.1], atol=1e-7)
    assert st2.t == 1 and adam.t == 0
    assert p.theta[0] == 1.0


def test_trainer_reduces_loss(rng):
    p = nc.init_params((2, 16, 1), rng)
    X = rng.uniform(-1, 1, size=(64, 2))
    y = (X[:, :1] * X[:, 1:])
    tr = nc.Trainer(p, nc.AdamState.zeros(p.shape.n_params, lr=1e-2))
    first = tr.fit_step(X, y)
    for _ in range(300):
        last = tr.fit_step(X, y)
    assert last < 0.5 * first


def test_weighted_fit_ignores_zero_weight_rows(rng):
    p = nc.init_params((1, 4, 1), rng)
    X = np.array([[0.0], [1.0]])
    y = np.array([[0.0], [1e6]])
    tr = nc.Trainer(p.copy())
    tr.fit_step(X[:1], y[:1])
    tr2 = nc.Trainer(p.copy())
    tr2.fit_step(X, y, weights=[2.0, 0.0])
    np.testing.assert_allclose(tr.params.theta, tr2.params.theta, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(sizes=st.lists(st.integers(1, 8), min_size=2, max_size=5),
       act=st.sampled_from([nc.RELU, nc.SIGMOID]), seed=st.integers(0, 2**32 - 1))
def test_serialize_roundtrip(sizes, act, seed):
    p = nc.init_params(tuple(sizes), np.random.default_rng(seed), act)
    q = from_bytes(to_bytes(p))
    assert q.shape == p.shape
    assert np.array_equal(q.theta, p.theta)


def test_serialize_file_and_bad_magic(tmp_path, rng):
    p = nc.init_params((3, 2), rng, nc.SIGMOID)
    path = tmp_path / "p.bin"
    nc.save_params(p, path)
    q = nc.load_params(path)
    assert np.array_equal(p.theta, q.theta) and q.shape.activation == nc.SIGMOID
    blob = path.read_bytes()
    with pytest.raises(ValueError):
        from_bytes(b"XXXX" + blob[4:])
    with pytest.raises(ValueError):
        from_bytes(blob[:-8])
