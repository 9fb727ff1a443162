"""Shared builders for model tests and the acceptance suite."""
import numpy as np

from srepnet import autodiff as ad
from srepnet.model import ModelConfig, SrepNet

TINY = ModelConfig(latent_dim=4, encoder_channels=(2, 2), initial_features=4,
                   decoder_features=(4, 4, 4, 4, 3), cheb_order=3, rings=1, angular_samples=3,
                   image_dims=(8, 8, 8), batch_size=2, seed=5)


def tiny_gradcheck(seed: int = 0) -> dict[str, float]:
    """Relative FD error of d(total loss)/d(parameter) for every parameter of the tiny model.

    All parameters, biases included, are drawn at random so no ReLU sits
    exactly on its kink (zero-bias convolutions of empty regions would).
    """
    rng = np.random.default_rng(seed)
    model = SrepNet(TINY)
    for p in model.parameters():
        p.data = rng.normal(0.0, 0.4, p.shape)
    masks = (rng.random((2, 8, 8, 8)) > 0.5).astype(np.float64)
    targets = rng.normal(0.0, 0.5, (2, model.num_nodes, 3))
    noise = rng.standard_normal((2, TINY.latent_dim))

    def f():
        return model.loss(masks, targets, noise)[0]

    params = model.parameters()
    errors = ad.check_gradients(f, params, eps=1e-5)
    return {p.name: e for p, e in zip(params, errors)}


# --------------------------------------------------------- acceptance record

ACCEPTANCE: dict[int, str] = {}


def record(criterion: int, ok: bool, detail: str) -> bool:
    """Keep one pass/fail line per acceptance criterion for the terminal summary."""
    line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'} | {detail}"
    ACCEPTANCE[criterion] = line
    print(line)
    return ok


def op_gradient_errors() -> dict[str, float]:
    """Max relative FD error for each differentiable op on small random inputs."""
    import scipy.sparse as sp

    from srepnet.model import cheb_conv, scaled_laplacian
    from srepnet.srep import template_adjacency

    rng = np.random.default_rng(2024)

    def rand(*shape, positive=False):
        data = rng.uniform(0.5, 2.0, shape) if positive else rng.normal(size=shape)
        return ad.Tensor(data, requires_grad=True)

    L = scaled_laplacian(template_adjacency(1, 3))
    S = sp.random(6, 6, density=0.4, random_state=3, format="csr")
    weights = rng.normal(size=(2, 5))
    noise = rng.normal(size=(3, 4))
    cases = {
        "add": (lambda a, b: ad.add(a, b), [rand(3, 4), rand(4)]),
        "sub": (lambda a, b: ad.sub(a, b), [rand(3, 4), rand(3, 4)]),
        "mul": (lambda a, b: ad.mul(a, b), [rand(3, 4), rand(3, 4)]),
        "exp": (lambda a: ad.exp(a), [rand(3, 4)]),
        "log": (lambda a: ad.log(a), [rand(3, 4, positive=True)]),
        "square": (lambda a: ad.square(a), [rand(5)]),
        "relu": (lambda a: ad.relu(a), [ad.Tensor(rng.choice([-1, 1], (4, 3)) * rng.uniform(0.1, 1, (4, 3)))]),
        "reshape": (lambda a: ad.mul(ad.reshape(a, (4, 3)), np.arange(12.0).reshape(4, 3)), [rand(3, 4)]),
        "transpose": (lambda a: ad.mul(ad.transpose(a, (1, 0)), np.arange(12.0).reshape(4, 3)), [rand(3, 4)]),
        "getitem": (lambda a: ad.square(a[:, 1:3]), [rand(3, 4)]),
        "concat": (lambda a, b: ad.square(ad.concat([a, b], axis=-1)), [rand(2, 3), rand(2, 2)]),
        "sum": (lambda a: ad.square(ad.sum(a, axis=1)), [rand(3, 4)]),
        "mean": (lambda a: ad.square(ad.mean(a)), [rand(3, 4)]),
        "matmul": (lambda a, b: ad.matmul(a, b), [rand(2, 3, 4), rand(4, 5)]),
        "linear": (lambda a, w, b: ad.linear(a, w, b), [rand(3, 4), rand(4, 2), rand(2)]),
        "layer_norm": (lambda a, g, o: ad.mul(ad.layer_norm(a, g, o), weights), [rand(2, 5), rand(5), rand(5)]),
        "sparse_dense_matmul": (lambda x: ad.square(ad.sparse_dense_matmul(S, x)), [rand(2, 6, 3)]),
        "conv3d": (lambda x, w, b: ad.conv3d(x, w, b, stride=2, padding=1),
                   [rand(2, 2, 3, 3, 3), rand(2, 2, 3, 3, 3), rand(2)]),
        "gaussian_sample": (lambda m, lv: ad.square(ad.gaussian_sample(m, lv, noise)), [rand(3, 4), rand(3, 4)]),
        "cheb_conv": (lambda x, th, b: ad.square(cheb_conv(x, L, th, b)), [rand(2, 15, 3), rand(3, 3, 2), rand(2)]),
    }
    errors = {}
    for name, (f, inputs) in cases.items():
        errors[name] = max(ad.check_gradients(lambda: f(*inputs), inputs))
    return errors
