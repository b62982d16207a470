"""Convolutional autoencoder over padded word-embedding matrices."""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..io import FormatError, atomic_write_bytes
from . import layers

CHECKPOINT_MAGIC = b"CAE1"

DEFAULT_POOLS = {
    300: ((2, 5), (2, 5), (2, 2)),
    768: ((2, 8), (2, 8), (2, 2)),
}


class TrainingError(RuntimeError):
    """Raised when optimisation cannot continue (e.g. NaN gradients)."""


@dataclass
class CAEConfig:
    input_cols: int = 300
    input_rows: int = 32
    encoder_filters: tuple = (64, 32, 1)
    decoder_filters: tuple = (1, 32, 64)
    pool_sizes: tuple | None = None
    learning_rate: float = 1e-5
    batch_size: int = 32
    max_epochs: int = 50
    validation_fraction: float = 0.2
    l2_constrained: bool = False
    seed: int = 0
    dtype: str = "float64"
    eps: float = 1e-12

    def __post_init__(self):
        self.encoder_filters = tuple(int(f) for f in self.encoder_filters)
        self.decoder_filters = tuple(int(f) for f in self.decoder_filters)
        if self.pool_sizes is None:
            if self.input_cols not in DEFAULT_POOLS:
                raise ValueError(f"no default pooling for D={self.input_cols}; pass pool_sizes")
            self.pool_sizes = DEFAULT_POOLS[self.input_cols]
        self.pool_sizes = tuple(tuple(int(v) for v in p) for p in self.pool_sizes)
        if not len(self.pool_sizes) == len(self.encoder_filters) == len(self.decoder_filters):
            raise ValueError("need one pool size per encoder and decoder layer")
        rows = int(np.prod([p[0] for p in self.pool_sizes]))
        cols = int(np.prod([p[1] for p in self.pool_sizes]))
        if self.input_rows % rows or self.input_cols % cols:
            raise ValueError(
                f"pooling {self.pool_sizes} does not divide input {self.input_rows}x{self.input_cols}"
            )
        if self.dtype not in ("float64", "float32"):
            raise ValueError("dtype must be float64 or float32")

    @property
    def input_shape(self) -> tuple[int, int]:
        return (self.input_rows, self.input_cols)

    def encoder_shapes(self) -> list[tuple[int, int]]:
        """Spatial shape of the input and after each encoder block."""
        shapes = [self.input_shape]
        for r, c in self.pool_sizes:
            h, w = shapes[-1]
            shapes.append((h // r, w // c))
        return shapes

    @property
    def bottleneck_shape(self) -> tuple[int, int, int]:
        return (self.encoder_filters[-1], *self.encoder_shapes()[-1])

    @property
    def representation_size(self) -> int:
        return int(np.prod(self.bottleneck_shape))

    def layer_channels(self) -> list[tuple[int, int]]:
        """(in, out) channels of every conv layer in declaration order."""
        chans = []
        prev = 1
        for f in self.encoder_filters:
            chans.append((prev, f))
            prev = f
        for f in self.decoder_filters:
            chans.append((prev, f))
            prev = f
        chans.append((prev, 1))
        return chans

    def to_dict(self) -> dict:
        return asdict(self)


def glorot_uniform(rng: np.random.Generator, c_out: int, c_in: int) -> np.ndarray:
    fan_in, fan_out = c_in * 9, c_out * 9
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, (c_out, c_in, 3, 3))


@dataclass
class Cache:
    enc: list = field(default_factory=list)
    dec: list = field(default_factory=list)
    u_raw: np.ndarray | None = None
    u: np.ndarray | None = None
    norms: np.ndarray | None = None
    out_input: np.ndarray | None = None


class CAEModel:
    """Parameters, Adam state and forward/backward passes of the autoencoder.

    Parameters are stored as ``[W0, b0, W1, b1, ...]`` in declaration order:
    encoder convs, decoder convs, then the linear single-filter output conv.
    """

    def __init__(self, config: CAEConfig, params: list[np.ndarray]):
        self.config = config
        expected = config.layer_channels()
        if len(params) != 2 * len(expected):
            raise ValueError(f"expected {2 * len(expected)} parameter arrays")
        for k, (c_in, c_out) in enumerate(expected):
            if params[2 * k].shape != (c_out, c_in, 3, 3) or params[2 * k + 1].shape != (c_out,):
                raise ValueError(f"parameter shape mismatch in layer {k}")
        self.params = [np.asarray(p, dtype=config.dtype) for p in params]
        self.m = [np.zeros_like(p) for p in self.params]
        self.v = [np.zeros_like(p) for p in self.params]
        self.step = 0

    @classmethod
    def initialize(cls, config: CAEConfig, rng: np.random.Generator | None = None) -> "CAEModel":
        rng = np.random.default_rng(config.seed) if rng is None else rng
        params = []
        for c_in, c_out in config.layer_channels():
            params.append(glorot_uniform(rng, c_out, c_in))
            params.append(np.zeros(c_out))
        return cls(config, params)

    @property
    def n_layers(self) -> int:
        return len(self.params) // 2

    def copy(self) -> "CAEModel":
        clone = CAEModel(self.config, [p.copy() for p in self.params])
        clone.m = [a.copy() for a in self.m]
        clone.v = [a.copy() for a in self.v]
        clone.step = self.step
        return clone

    # -- shape handling -------------------------------------------------------

    def _batch(self, x) -> np.ndarray:
        x = getattr(x, "values", x)
        x = np.asarray(x, dtype=self.config.dtype)
        if x.ndim == 2:
            x = x[None]
        if x.ndim == 3:
            x = x[:, None]
        if x.shape[1:] != (1, *self.config.input_shape):
            raise ValueError(f"input shape {x.shape[-2:]} does not match {self.config.input_shape}")
        return x

    # -- forward --------------------------------------------------------------

    def _encode(self, x: np.ndarray, cache: Cache | None):
        cfg = self.config
        h = x
        for k, pool in enumerate(cfg.pool_sizes):
            z = layers.conv2d_forward(h, self.params[2 * k], self.params[2 * k + 1])
            # max pooling commutes with ReLU; pool first to rectify the smaller array
            pooled, arg = layers.maxpool_forward(z, pool)
            if cache is not None:
                cache.enc.append((h, pooled, arg))
            h = layers.relu(pooled)
        u_raw = h.reshape(len(h), -1)
        if cfg.l2_constrained:
            u, norms = layers.l2_normalize_forward(u_raw, cfg.eps)
        else:
            u, norms = u_raw, None
        if cache is not None:
            cache.u_raw, cache.u, cache.norms = u_raw, u, norms
        return u

    def _decode(self, u: np.ndarray, cache: Cache | None):
        cfg = self.config
        n_enc = len(cfg.encoder_filters)
        h = u.reshape(len(u), *cfg.bottleneck_shape)
        for k, pool in enumerate(reversed(cfg.pool_sizes)):
            li = n_enc + k
            z = layers.conv2d_forward(h, self.params[2 * li], self.params[2 * li + 1])
            if cache is not None:
                cache.dec.append((h, z))
            h = layers.upsample_forward(layers.relu(z), pool)
        if cache is not None:
            cache.out_input = h
        out = layers.conv2d_forward(h, self.params[-2], self.params[-1])
        return out

    def encode(self, x) -> np.ndarray:
        """Bottleneck representations, one flattened row per input matrix."""
        return self._encode(self._batch(x), None)

    def decode(self, rep) -> np.ndarray:
        """Reconstruct ``(batch, rows, cols)`` matrices from representations."""
        rep = np.asarray(rep, dtype=self.config.dtype)
        size = self.config.representation_size
        if rep.ndim == 1 or (rep.ndim == 2 and rep.shape == self.config.bottleneck_shape[1:]):
            rep = rep.reshape(1, -1)
        rep = rep.reshape(len(rep), -1)
        if rep.shape[1] != size:
            raise ValueError(f"representation must have {size} values")
        return self._decode(rep, None)[:, 0]

    def reconstruct(self, x) -> np.ndarray:
        return self._decode(self._encode(self._batch(x), None), None)[:, 0]

    def encoder_activations(self, x) -> list[np.ndarray]:
        """Pooled outputs of every encoder block (before any normalisation)."""
        cache = Cache()
        self._encode(self._batch(x), cache)
        return [layers.relu(pooled) for _, pooled, _ in cache.enc]

    # -- backward -------------------------------------------------------------

    def loss_and_grads(self, x) -> tuple[float, list[np.ndarray]]:
        """Mean squared reconstruction error and its parameter gradients."""
        cfg = self.config
        x = self._batch(x)
        cache = Cache()
        u = self._encode(x, cache)
        out = self._decode(u, cache)
        loss = layers.mse_loss(out, x)
        grads: list[np.ndarray] = [None] * len(self.params)

        d = layers.mse_grad(out, x)
        d, grads[-2], grads[-1] = layers.conv2d_backward(d, cache.out_input, self.params[-2])
        n_enc = len(cfg.encoder_filters)
        pools_rev = list(reversed(cfg.pool_sizes))
        for k in reversed(range(len(cfg.decoder_filters))):
            li = n_enc + k
            h, z = cache.dec[k]
            d = layers.upsample_backward(d, pools_rev[k]) * (z > 0)
            d, grads[2 * li], grads[2 * li + 1] = layers.conv2d_backward(d, h, self.params[2 * li])

        du = d.reshape(len(d), -1)
        if cfg.l2_constrained:
            du = layers.l2_normalize_backward(du, cache.u, cache.norms, cfg.eps)
        d = du.reshape(len(du), *cfg.bottleneck_shape)
        for k in reversed(range(n_enc)):
            h, pooled, arg = cache.enc[k]
            d = layers.maxpool_backward(d * (pooled > 0), arg, cfg.pool_sizes[k])
            d, grads[2 * k], grads[2 * k + 1] = layers.conv2d_backward(d, h, self.params[2 * k])
        return loss, grads

    def loss(self, x) -> float:
        x = self._batch(x)
        return layers.mse_loss(self._decode(self._encode(x, None), None), x)

    # -- persistence ------------------------------------------------------------

    def save(self, path: str | Path) -> None:
        """Write ``CAE1 | u32 len | JSON config | float64 LE params``."""
        header = json.dumps(self.config.to_dict(), sort_keys=True).encode()
        body = b"".join(np.ascontiguousarray(p, dtype="<f8").tobytes() for p in self.params)
        atomic_write_bytes(path, CHECKPOINT_MAGIC + struct.pack("<I", len(header)) + header + body)

    @classmethod
    def load(cls, path: str | Path) -> "CAEModel":
        data = Path(path).read_bytes()
        if data[:4] != CHECKPOINT_MAGIC:
            raise FormatError(f"{path}: not a CAE checkpoint")
        (n,) = struct.unpack_from("<I", data, 4)
        config = CAEConfig(**json.loads(data[8:8 + n]))
        offset = 8 + n
        params = []
        for c_in, c_out in config.layer_channels():
            for shape in ((c_out, c_in, 3, 3), (c_out,)):
                count = int(np.prod(shape))
                arr = np.frombuffer(data, dtype="<f8", count=count, offset=offset)
                params.append(arr.reshape(shape).copy())
                offset += 8 * count
        if offset != len(data):
            raise FormatError(f"{path}: trailing or missing parameter bytes")
        return cls(config, params)


def adam_step(model: CAEModel, grads: list[np.ndarray], lr: float | None = None,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> CAEModel:
    """One bias-corrected Adam update, applied in place."""
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient at step {model.step + 1}")
    lr = model.config.learning_rate if lr is None else lr
    model.step += 1
    t = model.step
    for p, g, m, v in zip(model.params, grads, model.m, model.v):
        m *= beta1
        m += (1 - beta1) * g
        v *= beta2
        v += (1 - beta2) * g * g
        m_hat = m / (1 - beta1 ** t)
        v_hat = v / (1 - beta2 ** t)
        p -= lr * m_hat / (np.sqrt(v_hat) + eps)
    return model
