"""Variational encoder-decoder mapping a binary mask to s-rep graph node coordinates.

Encoder: stride-2 conv3d + ReLU blocks, flatten, one linear layer to (mu, logvar).
Decoder: linear layer to per-node features, then five Chebyshev graph
convolutions on the template graph with ReLU + LayerNorm between them.
Coordinates are predicted in image-normalised units, ``(x - centre) / half_extent``.
"""
from __future__ import annotations

import math
import os
import time
from dataclasses import dataclass

import numpy as np

from .. import autodiff as ad
from ..mask import VolumetricMask
from ..srep import Srep, num_graph_nodes, template_adjacency
from .config import ENCODER_KERNEL, ENCODER_PADDING, ENCODER_STRIDE, ModelConfig
from .graph import cheb_conv, scaled_laplacian

CHECKPOINT_KIND = "srepnet-model/1"


@dataclass
class EncoderOutput:
    mu: ad.Tensor
    logvar: ad.Tensor


def substream(seed: int, name: str) -> np.random.Generator:
    """Independent generator for one named use of the run seed."""
    keys = {"init": 101, "augment": 102, "sampling": 103, "noise": 104}
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(keys[name],)))


def normalize_coords(coords, mask: VolumetricMask) -> np.ndarray:
    return (np.asarray(coords) - mask.center) / mask.half_extent


def denormalize_coords(coords, mask: VolumetricMask) -> np.ndarray:
    return np.asarray(coords) * mask.half_extent + mask.center


def kl_divergence(mu: ad.Tensor, logvar: ad.Tensor) -> ad.Tensor:
    """Batch mean of KL(N(mu, exp(logvar)) || N(0, I))."""
    terms = 1.0 + logvar - ad.square(mu) - ad.exp(logvar)
    return ad.mean(ad.sum(terms, axis=-1)) * -0.5


def loss(pred: ad.Tensor, gt, mu: ad.Tensor, logvar: ad.Tensor,
         lambda_r: float = 1.0, lambda_kl: float = 1e-3):
    """(total, L_r, L_KL): coordinate MSE plus weighted KL to the unit Gaussian."""
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ValueError(f"prediction shape {pred.shape} != target shape {gt.shape}")
    l_r = ad.mean(ad.square(pred - gt))
    l_kl = kl_divergence(mu, logvar)
    return l_r * lambda_r + l_kl * lambda_kl, l_r, l_kl


class SrepNet:
    def __init__(self, config: ModelConfig, rng: np.random.Generator | None = None):
        self.config = config
        self.num_nodes = num_graph_nodes(config.rings, config.angular_samples)
        self.laplacian = scaled_laplacian(template_adjacency(config.rings, config.angular_samples))
        self.params: dict[str, ad.Parameter] = {}
        self._init(substream(config.seed, "init") if rng is None else rng)
        self.last_latency = math.nan

    # ------------------------------------------------------------ parameters

    def _add(self, name, data, init):
        self.params[name] = ad.Parameter(name, data, init)

    def _init(self, rng):
        cfg = self.config
        k = ENCODER_KERNEL
        cin = 1
        for i, cout in enumerate(cfg.encoder_channels):
            fan_in = cin * k ** 3
            self._add(f"enc{i}.weight", rng.normal(0, math.sqrt(2 / fan_in), (cout, cin, k, k, k)), "he_normal")
            self._add(f"enc{i}.bias", np.zeros(cout), "zeros")
            cin = cout
        flat = cin * int(np.prod(cfg.encoder_output_dims()))
        self._glorot("latent.weight", (flat, 2 * cfg.latent_dim), rng)
        self._add("latent.bias", np.zeros(2 * cfg.latent_dim), "zeros")
        self._glorot("expand.weight", (cfg.latent_dim, self.num_nodes * cfg.initial_features), rng)
        self._add("expand.bias", np.zeros(self.num_nodes * cfg.initial_features), "zeros")
        fin = cfg.initial_features
        for i, fout in enumerate(cfg.decoder_features):
            limit = math.sqrt(6 / (cfg.cheb_order * fin + fout))
            self._add(f"cheb{i}.theta", rng.uniform(-limit, limit, (cfg.cheb_order, fin, fout)), "glorot_uniform")
            self._add(f"cheb{i}.bias", np.zeros(fout), "zeros")
            if i < 4:
                self._add(f"norm{i}.gain", np.ones(fout), "ones")
                self._add(f"norm{i}.offset", np.zeros(fout), "zeros")
            fin = fout

    def _glorot(self, name, shape, rng):
        limit = math.sqrt(6 / (shape[0] + shape[1]))
        self._add(name, rng.uniform(-limit, limit, shape), "glorot_uniform")

    def parameters(self) -> list[ad.Parameter]:
        return list(self.params.values())

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        missing = set(self.params) - set(state)
        extra = set(state) - set(self.params)
        if missing or extra:
            raise ValueError(f"checkpoint mismatch: missing {sorted(missing)}, unexpected {sorted(extra)}")
        for name, p in self.params.items():
            if state[name].shape != p.shape:
                raise ValueError(f"{name}: checkpoint shape {state[name].shape} != model shape {p.shape}")
            p.data = np.array(state[name], dtype=np.float64)

    # --------------------------------------------------------------- forward

    def encode(self, masks) -> EncoderOutput:
        """``masks`` of shape (B, X, Y, Z) or (B, 1, X, Y, Z), values 0/1."""
        x = np.asarray(masks, dtype=np.float64)
        if x.ndim == 4:
            x = x[:, None]
        if x.ndim != 5 or x.shape[1] != 1 or x.shape[2:] != self.config.image_dims:
            raise ValueError(f"expected masks of shape (B, {self.config.image_dims}), got {x.shape}")
        h = ad.Tensor(x)
        p = self.params
        for i in range(len(self.config.encoder_channels)):
            h = ad.relu(ad.conv3d(h, p[f"enc{i}.weight"], p[f"enc{i}.bias"],
                                  stride=ENCODER_STRIDE, padding=ENCODER_PADDING))
        h = ad.reshape(h, (x.shape[0], -1))
        out = ad.linear(h, p["latent.weight"], p["latent.bias"])
        d = self.config.latent_dim
        return EncoderOutput(out[:, :d], out[:, d:])

    def graph_layers(self, h: ad.Tensor, L=None) -> ad.Tensor:
        """Five Chebyshev layers on per-node features ``h`` (B, V, F_0)."""
        L = self.laplacian if L is None else L
        p = self.params
        for i in range(5):
            h = cheb_conv(h, L, p[f"cheb{i}.theta"], p[f"cheb{i}.bias"])
            if i < 4:
                h = ad.layer_norm(ad.relu(h), p[f"norm{i}.gain"], p[f"norm{i}.offset"])
        return h

    def decode(self, z: ad.Tensor) -> ad.Tensor:
        z = ad.as_tensor(z)
        p = self.params
        h = ad.linear(z, p["expand.weight"], p["expand.bias"])
        h = ad.reshape(h, (z.shape[0], self.num_nodes, self.config.initial_features))
        return self.graph_layers(h)

    def forward(self, masks, noise=None):
        """Returns (coords, EncoderOutput).  ``noise=None`` decodes z = mu."""
        enc = self.encode(masks)
        z = enc.mu if noise is None else ad.gaussian_sample(enc.mu, enc.logvar, noise)
        return self.decode(z), enc

    def loss(self, masks, targets, noise=None):
        pred, enc = self.forward(masks, noise)
        return loss(pred, targets, enc.mu, enc.logvar, self.config.lambda_r, self.config.lambda_kl)

    # ------------------------------------------------------------- inference

    def predict_normalized(self, masks) -> np.ndarray:
        pred, _ = self.forward(masks)
        return pred.data

    def infer(self, mask: VolumetricMask) -> Srep:
        """Deterministic s-rep in the mask's physical space; latency kept in ``last_latency``."""
        if mask.dims != self.config.image_dims:
            raise ValueError(f"mask dims {mask.dims} do not match model input dims {self.config.image_dims}")
        start = time.perf_counter()
        coords = self.predict_normalized(mask.voxels[None])[0]
        world = denormalize_coords(coords, mask)
        srep = Srep.from_node_coords(self.config.rings, self.config.angular_samples, world)
        self.last_latency = time.perf_counter() - start
        return srep

    # ----------------------------------------------------------- persistence

    def save(self, path: str | os.PathLike, extra: dict | None = None) -> None:
        meta = f"kind = {CHECKPOINT_KIND!r}\n" + self.config.to_text()
        for key, value in (extra or {}).items():
            meta += f"meta.{key} = {value!r}\n"
        ad.save_checkpoint(path, self.state_dict(), meta)


def read_meta(text: str) -> dict[str, str]:
    out = {}
    for line in text.splitlines():
        key, sep, value = line.partition(" = ")
        if sep:
            out[key.strip()] = value.strip()
    return out


def load_model(path: str | os.PathLike) -> SrepNet:
    state, meta = ad.load_checkpoint(path)
    if read_meta(meta).get("kind") != repr(CHECKPOINT_KIND):
        raise ad.CheckpointError(f"{path}: not a {CHECKPOINT_KIND} checkpoint")
    model = SrepNet(ModelConfig.from_text(meta))
    model.load_state_dict(state)
    return model
