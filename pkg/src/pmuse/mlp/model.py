"""Dense network with batch norm and dropout: parameters, forward and backward."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from pmuse.errors import SchemaError
from pmuse.mlp.config import MlpConfig

STD_FLOOR = 1e-12


@dataclass
class Normalizer:
    """Per-column affine map ``(v - mean) / std``; constant columns are flagged."""

    mean: np.ndarray
    std: np.ndarray
    constant: np.ndarray

    @classmethod
    def fit(cls, data: np.ndarray, enabled: bool = True) -> "Normalizer":
        data = np.asarray(data, dtype=np.float64)
        if not enabled:
            d = data.shape[1]
            return cls(np.zeros(d), np.ones(d), np.zeros(d, dtype=bool))
        mean = data.mean(axis=0)
        std = data.std(axis=0)
        constant = std < STD_FLOOR
        return cls(mean, np.where(constant, STD_FLOOR, std), constant)

    def forward(self, v):
        out = (v - self.mean) / self.std
        if self.constant.any():
            out[..., self.constant] = 0.0
        return out

    def inverse(self, v):
        return v * self.std + self.mean


@dataclass
class Layer:
    """Affine map, optionally followed by batch norm (hidden layers only)."""

    W: np.ndarray
    b: np.ndarray
    gamma: np.ndarray | None = None
    beta: np.ndarray | None = None
    run_mean: np.ndarray | None = None
    run_var: np.ndarray | None = None

    def params(self) -> list[np.ndarray]:
        out = [self.W, self.b]
        if self.gamma is not None:
            out += [self.gamma, self.beta]
        return out


@dataclass
class MlpModel:
    config: MlpConfig
    layers: list[Layer]
    x_norm: Normalizer
    y_norm: Normalizer
    feature_names: list[str] = field(default_factory=list)
    target_names: list[str] = field(default_factory=list)
    topology_id: str = "base"

    @property
    def n_inputs(self) -> int:
        return self.layers[0].W.shape[0]

    @property
    def n_outputs(self) -> int:
        return self.layers[-1].W.shape[1]

    @property
    def dtype(self):
        return np.dtype(self.config.dtype)

    def params(self) -> list[np.ndarray]:
        return [p for layer in self.layers for p in layer.params()]

    def param_names(self) -> list[str]:
        names = []
        for i, layer in enumerate(self.layers):
            names += [f"W{i}", f"b{i}"]
            if layer.gamma is not None:
                names += [f"gamma{i}", f"beta{i}"]
        return names

    # --- inference ---------------------------------------------------------------

    def predict(self, z) -> np.ndarray:
        """De-normalized state estimate(s); pure, inference-mode forward pass."""
        z = np.asarray(z, dtype=np.float64)
        single = z.ndim == 1
        z2 = np.atleast_2d(z)
        if z2.shape[1] != self.n_inputs:
            raise SchemaError(f"expected {self.n_inputs} features, got {z2.shape[1]}")
        if not np.all(np.isfinite(z2)):
            raise ValueError("non-finite input feature")
        h = self.x_norm.forward(z2).astype(self.dtype)
        y, _ = forward(self, h, training=False)
        out = self.y_norm.inverse(y.astype(np.float64))
        return out[0] if single else out

    def linear_coefficients(self) -> tuple[np.ndarray, np.ndarray]:
        """Raw-unit ``(A, c)`` with ``y = z A + c``; only for zero hidden layers."""
        if len(self.layers) != 1:
            raise ValueError("only defined for a network without hidden layers")
        W = self.layers[0].W.astype(np.float64)
        b = self.layers[0].b.astype(np.float64)
        A = W / self.x_norm.std[:, None] * self.y_norm.std[None, :]
        c = (b - (self.x_norm.mean / self.x_norm.std) @ W) * self.y_norm.std + self.y_norm.mean
        return A, c


def init_model(config: MlpConfig, n_in: int, n_out: int, rng: np.random.Generator,
               x_norm: Normalizer, y_norm: Normalizer) -> MlpModel:
    """He-uniform hidden weights, Glorot-uniform output weights, zero biases."""
    dt = np.dtype(config.dtype)
    sizes = [n_in] + [config.width] * config.hidden_layers + [n_out]
    layers = []
    for i in range(len(sizes) - 1):
        fan_in, fan_out = sizes[i], sizes[i + 1]
        hidden = i < config.hidden_layers
        limit = np.sqrt(6.0 / fan_in) if hidden else np.sqrt(6.0 / (fan_in + fan_out))
        W = rng.uniform(-limit, limit, (fan_in, fan_out)).astype(dt)
        layer = Layer(W, np.zeros(fan_out, dt))
        if hidden and config.batch_norm:
            layer.gamma = np.ones(fan_out, dt)
            layer.beta = np.zeros(fan_out, dt)
            layer.run_mean = np.zeros(fan_out, dt)
            layer.run_var = np.ones(fan_out, dt)
        layers.append(layer)
    return MlpModel(config, layers, x_norm, y_norm)


@dataclass
class _Cache:
    h_in: np.ndarray
    ahat: np.ndarray | None
    inv_std: np.ndarray | None
    u: np.ndarray
    mask: np.ndarray | None


def forward(model: MlpModel, h: np.ndarray, training: bool, rng: np.random.Generator | None = None,
            dropout: bool | None = None, update_stats: bool | None = None):
    """Forward pass on normalized inputs. Returns (normalized output, caches).

    In training mode batch norm uses batch statistics (and, unless
    ``update_stats`` is False, updates the running averages) and dropout is
    active unless ``dropout`` is False.
    """
    cfg = model.config
    use_dropout = training and cfg.dropout_rate > 0 if dropout is None else dropout
    update = training if update_stats is None else update_stats
    keep = 1.0 - cfg.dropout_rate
    caches = []
    for layer in model.layers[:-1]:
        a = h @ layer.W + layer.b
        ahat = inv = None
        if layer.gamma is not None:
            if training:
                mu = a.mean(axis=0)
                var = a.var(axis=0)
                if update:
                    m = cfg.bn_momentum
                    layer.run_mean *= m
                    layer.run_mean += (1 - m) * mu
                    layer.run_var *= m
                    layer.run_var += (1 - m) * var
            else:
                mu, var = layer.run_mean, layer.run_var
            inv = (1.0 / np.sqrt(var + cfg.bn_epsilon)).astype(a.dtype)
            ahat = (a - mu) * inv
            u = layer.gamma * ahat + layer.beta
        else:
            u = a
        r = np.maximum(u, 0)
        mask = None
        if use_dropout:
            mask = (rng.random(r.shape, dtype=r.dtype) < keep).astype(r.dtype) / np.asarray(keep, r.dtype)
            r = r * mask
        caches.append(_Cache(h, ahat, inv, u, mask))
        h = r
    last = model.layers[-1]
    caches.append(_Cache(h, None, None, None, None))
    return h @ last.W + last.b, caches


def backward(model: MlpModel, caches, dy: np.ndarray, training: bool) -> list[np.ndarray]:
    """Gradients in ``model.params()`` order for upstream gradient ``dy``."""
    grads: list[list[np.ndarray]] = [None] * len(model.layers)
    last = model.layers[-1]
    h = caches[-1].h_in
    grads[-1] = [h.T @ dy, dy.sum(axis=0)]
    dh = dy @ last.W.T
    for i in range(len(model.layers) - 2, -1, -1):
        layer, c = model.layers[i], caches[i]
        if c.mask is not None:
            dh = dh * c.mask
        du = dh * (c.u > 0)
        if layer.gamma is not None:
            dgamma = (du * c.ahat).sum(axis=0)
            dbeta = du.sum(axis=0)
            dahat = du * layer.gamma
            if training:
                n = du.shape[0]
                da = c.inv_std / n * (n * dahat - dahat.sum(axis=0) - c.ahat * (dahat * c.ahat).sum(axis=0))
            else:
                da = dahat * c.inv_std
            g = [c.h_in.T @ da, da.sum(axis=0), dgamma, dbeta]
        else:
            da = du
            g = [c.h_in.T @ da, da.sum(axis=0)]
        grads[i] = g
        if i > 0:
            dh = da @ layer.W.T
    return [g for gs in grads for g in gs]


def mse_and_grad(y: np.ndarray, target: np.ndarray):
    diff = y - target
    loss = float(np.mean(diff.astype(np.float64) ** 2))
    return loss, (2.0 / diff.size) * diff
