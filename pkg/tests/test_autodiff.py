import itertools
import zlib

import numpy as np
import pytest
import scipy.sparse as sp

from srepnet import autodiff as ad
from srepnet.autodiff import kernels

RTOL = 1e-6


def brute_conv3d(x, w, b, stride, pad):
    """Independent reference: explicit window sums, no im2col."""
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad), (pad, pad)))
    nb, _, X, Y, Z = xp.shape
    co, _, kx, ky, kz = w.shape
    out = np.zeros((nb, co, (X - kx) // stride + 1, (Y - ky) // stride + 1, (Z - kz) // stride + 1))
    for n, o, i, j, k in itertools.product(*(range(s) for s in out.shape)):
        win = xp[n, :, i * stride:i * stride + kx, j * stride:j * stride + ky, k * stride:k * stride + kz]
        out[n, o, i, j, k] = (win * w[o]).sum() + (b[o] if b is not None else 0.0)
    return out


def test_conv3d_ones_window_sum():
    x = ad.Tensor(np.ones((1, 1, 4, 4, 4)))
    w = ad.Tensor(np.ones((1, 1, 3, 3, 3)))
    y = ad.conv3d(x, w)
    assert y.shape == (1, 1, 2, 2, 2)
    np.testing.assert_array_equal(y.data, 27.0)


def test_conv3d_identity_kernel():
    rng = np.random.default_rng(0)
    x = ad.Tensor(rng.normal(size=(2, 1, 5, 4, 6)))
    w = np.zeros((1, 1, 3, 3, 3))
    w[0, 0, 1, 1, 1] = 1.0
    y = ad.conv3d(x, ad.Tensor(w), padding=1)
    np.testing.assert_array_equal(y.data, x.data)


@pytest.mark.parametrize("stride,pad", [(1, 0), (1, 1), (2, 1), (2, 0)])
def test_conv3d_matches_brute_force(stride, pad):
    rng = np.random.default_rng(1)
    x = rng.normal(size=(2, 3, 5, 6, 7))
    w = rng.normal(size=(4, 3, 3, 3, 3))
    b = rng.normal(size=4)
    y = ad.conv3d(ad.Tensor(x), ad.Tensor(w), ad.Tensor(b), stride=stride, padding=pad)
    np.testing.assert_allclose(y.data, brute_conv3d(x, w, b, stride, pad), rtol=1e-12, atol=1e-12)


def test_conv3d_output_dims_formula():
    x = ad.Tensor(np.zeros((1, 2, 9, 8, 7)))
    w = ad.Tensor(np.zeros((3, 2, 3, 3, 3)))
    y = ad.conv3d(x, w, stride=2, padding=1)
    assert y.shape == (1, 3, (9 + 2 - 3) // 2 + 1, (8 + 2 - 3) // 2 + 1, (7 + 2 - 3) // 2 + 1)


def test_conv3d_rejects_channel_mismatch():
    with pytest.raises(ValueError):
        ad.conv3d(ad.Tensor(np.zeros((1, 2, 4, 4, 4))), ad.Tensor(np.zeros((1, 3, 3, 3, 3))))


@pytest.mark.parametrize("backend", ["numpy", "cython"])
def test_kernel_backends_bit_identical(backend):
    if backend == "cython":
        cy = pytest.importorskip("srepnet.autodiff._kernels")
        im2col, col2im = cy.im2col3d, cy.col2im3d
    else:
        im2col, col2im = kernels.im2col3d_numpy, kernels.col2im3d_numpy
    rng = np.random.default_rng(2)
    xp = rng.normal(size=(2, 3, 9, 8, 7))
    ref = kernels.im2col3d_numpy(xp, 3, 3, 3, 2, 4, 3, 3)
    np.testing.assert_array_equal(im2col(xp, 3, 3, 3, 2, 4, 3, 3), ref)
    g = rng.normal(size=ref.shape)
    np.testing.assert_array_equal(col2im(g, 9, 8, 7, 2), kernels.col2im3d_numpy(g, 9, 8, 7, 2))


# ------------------------------------------------------------- gradient checks

def _rand(rng, *shape):
    return ad.Tensor(rng.normal(size=shape), requires_grad=True)


def test_conv3d_gradient():
    rng = np.random.default_rng(3)
    x, w, b = _rand(rng, 2, 2, 3, 3, 3), _rand(rng, 2, 2, 3, 3, 3), _rand(rng, 2)
    errs = ad.check_gradients(lambda: ad.conv3d(x, w, b, stride=1, padding=1), [x, w, b])
    assert max(errs) < RTOL, errs


def test_conv3d_strided_gradient():
    rng = np.random.default_rng(4)
    x, w = _rand(rng, 1, 2, 5, 4, 5), _rand(rng, 3, 2, 3, 3, 3)
    errs = ad.check_gradients(lambda: ad.conv3d(x, w, stride=2, padding=1), [x, w])
    assert max(errs) < RTOL, errs


OPS = {
    "add": (lambda a, b: ad.add(a, b), [(3, 4), (3, 4)]),
    "add_broadcast": (lambda a, b: ad.add(a, b), [(3, 4), (4,)]),
    "sub": (lambda a, b: ad.sub(a, b), [(3, 4), (3, 4)]),
    "mul": (lambda a, b: ad.mul(a, b), [(3, 4), (3, 4)]),
    "exp": (lambda a: ad.exp(a), [(3, 4)]),
    "square": (lambda a: ad.square(a), [(5,)]),
    "reshape": (lambda a: ad.mul(ad.reshape(a, (4, 3)), np.arange(12.0).reshape(4, 3)), [(3, 4)]),
    "transpose": (lambda a: ad.mul(ad.transpose(a, (1, 0)), np.arange(12.0).reshape(4, 3)), [(3, 4)]),
    "getitem": (lambda a: ad.square(a[:, 1:3]), [(3, 4)]),
    "concat": (lambda a, b: ad.square(ad.concat([a, b], axis=-1)), [(2, 3), (2, 2)]),
    "sum_axis": (lambda a: ad.square(ad.sum(a, axis=1)), [(3, 4)]),
    "mean": (lambda a: ad.square(ad.mean(a, axis=(0, 1))), [(3, 4, 2)]),
    "matmul": (lambda a, b: ad.matmul(a, b), [(2, 3, 4), (4, 5)]),
    "linear": (lambda a, w, b: ad.linear(a, w, b), [(3, 4), (4, 2), (2,)]),
    "layer_norm": (lambda a, g, o: ad.mul(ad.layer_norm(a, g, o), np.arange(10.0).reshape(2, 5)),
                   [(2, 5), (5,), (5,)]),
}


@pytest.mark.parametrize("name", sorted(OPS))
def test_op_gradients(name):
    f, shapes = OPS[name]
    rng = np.random.default_rng(zlib.crc32(name.encode()))
    inputs = [_rand(rng, *s) for s in shapes]
    errs = ad.check_gradients(lambda: f(*inputs), inputs)
    assert max(errs) < RTOL, errs


def test_log_gradient():
    rng = np.random.default_rng(5)
    x = ad.Tensor(rng.uniform(0.5, 2.0, size=(4, 3)), requires_grad=True)
    assert ad.check_gradients(lambda: ad.log(x), [x])[0] < RTOL


def test_relu_values_and_gradient():
    np.testing.assert_array_equal(ad.relu(ad.Tensor([-1.0, 2.0])).data, [0.0, 2.0])
    rng = np.random.default_rng(6)
    data = rng.normal(size=(4, 5))
    data[np.abs(data) < 0.05] = 0.5  # keep FD steps away from the kink
    x = ad.Tensor(data, requires_grad=True)
    assert ad.check_gradients(lambda: ad.relu(x), [x])[0] < RTOL


def test_layer_norm_constant_vector():
    x = ad.Tensor(np.full((2, 6), 3.7))
    y = ad.layer_norm(x, ad.Tensor(np.ones(6)), ad.Tensor(np.full(6, 0.25)))
    np.testing.assert_allclose(y.data, 0.25, atol=1e-12)


def test_layer_norm_normalises_last_axis():
    rng = np.random.default_rng(7)
    y = ad.layer_norm(ad.Tensor(rng.normal(3, 4, size=(5, 16))), ad.Tensor(np.ones(16)),
                      ad.Tensor(np.zeros(16)), eps=0.0)
    np.testing.assert_allclose(y.data.mean(-1), 0, atol=1e-12)
    np.testing.assert_allclose(y.data.std(-1), 1, atol=1e-12)


def test_sparse_identity_and_path_laplacian():
    x = ad.Tensor(np.arange(6.0).reshape(3, 2))
    np.testing.assert_array_equal(ad.sparse_dense_matmul(sp.identity(3), x).data, x.data)
    L = sp.csr_matrix(np.array([[1.0, -1.0], [-1.0, 1.0]]))
    y = ad.sparse_dense_matmul(L, ad.Tensor([[1.0], [0.0]]))
    np.testing.assert_array_equal(y.data, [[1.0], [-1.0]])


def test_sparse_matmul_gradient_batched():
    rng = np.random.default_rng(8)
    S = sp.random(6, 6, density=0.4, random_state=1, format="csr")
    x = _rand(rng, 3, 6, 2)
    assert ad.check_gradients(lambda: ad.sparse_dense_matmul(S, x), [x])[0] < RTOL
    dense = S.toarray()
    np.testing.assert_allclose(ad.sparse_dense_matmul(S, x).data, np.einsum("uv,bvf->buf", dense, x.data))


def test_sparse_matmul_dimension_mismatch():
    with pytest.raises(ValueError):
        ad.sparse_dense_matmul(sp.identity(3), ad.Tensor(np.zeros((4, 2))))


def test_gaussian_sample_cases_and_gradient():
    rng = np.random.default_rng(9)
    mu, lv = _rand(rng, 2, 3), _rand(rng, 2, 3)
    np.testing.assert_array_equal(ad.gaussian_sample(mu, lv, np.zeros((2, 3))).data, mu.data)
    n = rng.normal(size=(2, 3))
    z = ad.gaussian_sample(mu, ad.Tensor(np.zeros((2, 3))), n)
    np.testing.assert_allclose(z.data, mu.data + n, rtol=0, atol=0)
    errs = ad.check_gradients(lambda: ad.gaussian_sample(mu, lv, n), [mu, lv])
    assert max(errs) < RTOL
    with pytest.raises(ValueError):
        ad.gaussian_sample(mu, lv, np.zeros(3))


def test_backward_is_linear_in_losses():
    rng = np.random.default_rng(10)
    w = _rand(rng, 4, 3)
    x = ad.Tensor(rng.normal(size=(5, 4)))

    def loss_a():
        return ad.mean(ad.square(ad.matmul(x, w)))

    def loss_b():
        return ad.sum(ad.exp(ad.mul(w, 0.1)))

    w.grad = None
    ad.add(loss_a(), loss_b()).backward()
    joint = w.grad.copy()
    w.grad = None
    loss_a().backward()
    ga = w.grad.copy()
    w.grad = None
    loss_b().backward()
    np.testing.assert_allclose(joint, ga + w.grad, rtol=1e-14, atol=1e-15)


def test_repeated_backward_bit_identical():
    rng = np.random.default_rng(11)
    x, w = _rand(rng, 2, 1, 6, 6, 6), _rand(rng, 3, 1, 3, 3, 3)
    grads = []
    for _ in range(2):
        w.grad = None
        ad.sum(ad.square(ad.conv3d(x, w, stride=2, padding=1))).backward()
        grads.append(w.grad.copy())
    np.testing.assert_array_equal(*grads)


def test_shared_subexpression_accumulates():
    x = ad.Tensor(np.array([3.0]), requires_grad=True)
    y = ad.mul(x, x)  # dy/dx = 2x
    ad.sum(ad.add(y, y)).backward()
    np.testing.assert_array_equal(x.grad, [12.0])


# ------------------------------------------------------------------- Adam

def test_adam_zero_gradient_keeps_parameters():
    w = {"w": np.array([1.0, -2.0])}
    new, _ = ad.adam_step(w, {"w": np.zeros(2)}, ad.AdamState(), lr=0.1)
    np.testing.assert_array_equal(new["w"], w["w"])


def test_adam_descends_on_square():
    w = ad.Parameter("w", np.array([1.0]))
    opt = ad.Adam([w], lr=0.1)
    loss = ad.sum(ad.square(w))
    loss.backward()
    opt.step()
    assert w.data[0] < 1.0


def test_adam_converges_on_convex_quadratic():
    # f(w) = 0.5 (w - c)^T A (w - c); closed-form minimiser is c
    A = np.array([[3.0, 0.5], [0.5, 1.0]])
    c = np.array([0.7, -1.3])
    w = ad.Parameter("w", np.zeros(2))
    opt = ad.Adam([w], lr=0.05)
    for i in range(6000):
        if i == 3000:
            opt.lr = 0.005
        opt.zero_grad()
        d = ad.sub(w, c)
        ad.mul(ad.sum(ad.mul(ad.matmul(ad.reshape(d, (1, 2)), A), ad.reshape(d, (1, 2)))), 0.5).backward()
        opt.step()
    np.testing.assert_allclose(w.data, c, atol=1e-6)


def test_adam_rejects_duplicate_names():
    with pytest.raises(ValueError):
        ad.Adam([ad.Parameter("a", [1.0]), ad.Parameter("a", [2.0])])


# ------------------------------------------------------------------ checkpoints

def test_checkpoint_roundtrip(tmp_path):
    rng = np.random.default_rng(12)
    params = {"enc.conv0.w": rng.normal(size=(2, 1, 3, 3, 3)), "dec.b": rng.normal(size=5),
              "scalar": np.array(3.25)}
    path = tmp_path / "m.ckpt"
    ad.save_checkpoint(path, params, meta="latent_dim = 4\n")
    loaded, meta = ad.load_checkpoint(path)
    assert meta == "latent_dim = 4\n"
    assert list(loaded) == list(params)
    for k in params:
        np.testing.assert_array_equal(loaded[k], params[k])


def test_checkpoint_bad_magic(tmp_path):
    path = tmp_path / "bad.ckpt"
    path.write_bytes(b"NOTACKPT" + b"\0" * 16)
    with pytest.raises(ad.CheckpointError):
        ad.load_checkpoint(path)


def test_checkpoint_truncated(tmp_path):
    path = tmp_path / "t.ckpt"
    ad.save_checkpoint(path, {"w": np.ones(10)})
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(ad.CheckpointError):
        ad.load_checkpoint(path)
