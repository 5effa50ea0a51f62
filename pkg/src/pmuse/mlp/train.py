"""Adam training with early stopping, fine-tuning and gradient checking."""

from __future__ import annotations

import copy
import time
from dataclasses import dataclass, field

import numpy as np

from pmuse.errors import DivergenceError, SchemaError
from pmuse.mlp.config import MlpConfig
from pmuse.mlp.model import MlpModel, Normalizer, backward, forward, init_model, mse_and_grad


@dataclass
class TrainReport:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    stop_epoch: int = 0  # 1-based epoch whose weights were kept
    epochs_run: int = 0
    wall_time: float = 0.0

    def to_dict(self) -> dict:
        return {
            "train_loss": self.train_loss,
            "val_loss": self.val_loss,
            "stop_epoch": self.stop_epoch,
            "epochs_run": self.epochs_run,
            "wall_time": self.wall_time,
        }


class Adam:
    def __init__(self, params, lr, beta1, beta2, eps):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        # python floats keep float32 parameters in float32
        lr_t = float(self.lr * np.sqrt(1 - b2 ** self.t) / (1 - b1 ** self.t))
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * (g * g)
            p -= lr_t * m / (np.sqrt(v) + self.eps)


def _snapshot(model: MlpModel):
    return [[a.copy() for a in _layer_arrays(layer)] for layer in model.layers]


def _layer_arrays(layer):
    return [a for a in (layer.W, layer.b, layer.gamma, layer.beta, layer.run_mean, layer.run_var) if a is not None]


def _restore(model: MlpModel, snap):
    for layer, arrays in zip(model.layers, snap):
        for dst, src in zip(_layer_arrays(layer), arrays):
            dst[...] = src


def _batches(n: int, size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    starts = list(range(0, n, size))
    # a trailing batch of one row would give degenerate batch statistics
    if len(starts) > 1 and n - starts[-1] < 2:
        starts.pop()
    for i, s in enumerate(starts):
        e = starts[i + 1] if i + 1 < len(starts) else n
        yield order[s:e]


def val_loss(model: MlpModel, xn: np.ndarray, yn: np.ndarray) -> float:
    if len(xn) == 0:
        return float("nan")
    y, _ = forward(model, xn, training=False)
    return float(np.mean((y.astype(np.float64) - yn) ** 2))


def fit(model: MlpModel, x_train, y_train, x_val, y_val, epochs: int, learning_rate: float,
        patience: int | None, rng: np.random.Generator, report: TrainReport | None = None) -> TrainReport:
    """Optimise ``model`` in place on already-normalized arrays.

    With ``patience=None`` all ``epochs`` run; if validation data exist the
    best-validation weights are still restored at the end.
    """
    cfg = model.config
    dt = model.dtype
    x_train = np.ascontiguousarray(x_train, dtype=dt)
    y_train = np.ascontiguousarray(y_train, dtype=dt)
    x_val = np.ascontiguousarray(x_val, dtype=dt)
    y_val = np.asarray(y_val, dtype=np.float64)
    report = report or TrainReport()
    opt = Adam(model.params(), learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_epsilon)
    have_val = len(x_val) > 0
    best, best_epoch, snap = np.inf, 0, None
    t0 = time.perf_counter()
    for epoch in range(1, epochs + 1):
        total, count = 0.0, 0
        for idx in _batches(len(x_train), cfg.batch_size, rng):
            y, caches = forward(model, x_train[idx], training=True, rng=rng)
            loss, dy = mse_and_grad(y, y_train[idx])
            if not np.isfinite(loss):
                raise DivergenceError(
                    f"training loss became non-finite at epoch {epoch}; try a lower learning rate "
                    f"(current {learning_rate:g})"
                )
            opt.step(backward(model, caches, dy, training=True))
            total += loss * len(idx)
            count += len(idx)
        report.train_loss.append(total / count)
        vl = val_loss(model, x_val, y_val) if have_val else report.train_loss[-1]
        report.val_loss.append(vl)
        report.epochs_run = epoch
        if vl < best:
            best, best_epoch, snap = vl, epoch, _snapshot(model)
        elif patience is not None and epoch - best_epoch >= patience:
            break
    if snap is not None:
        _restore(model, snap)
    report.stop_epoch = best_epoch
    report.wall_time += time.perf_counter() - t0
    return report


def _split_arrays(dataset, name: str, noisy: bool = True):
    s = dataset.split(name)
    return (s.z_noisy if noisy else s.z_clean), s.x_true


def train(dataset, config: MlpConfig, noisy: bool = True) -> tuple[MlpModel, TrainReport]:
    """Train a fresh model on ``dataset``'s train split, early-stopping on val.

    Inputs are the noisy features unless ``noisy`` is False.
    """
    z_tr, x_tr = _split_arrays(dataset, "train", noisy)
    z_va, x_va = _split_arrays(dataset, "val", noisy)
    if len(z_tr) == 0:
        raise ValueError("training split is empty")
    if z_tr.shape[1] != len(dataset.feature_names) or x_tr.shape[1] != len(dataset.state_names):
        raise SchemaError("dataset matrices do not match its schema")
    x_norm = Normalizer.fit(z_tr, config.normalize)
    y_norm = Normalizer.fit(x_tr, config.normalize)
    root = np.random.SeedSequence(config.seed)
    init_seq, train_seq = root.spawn(2)
    if config.train_seed is not None:
        train_seq = np.random.SeedSequence(config.train_seed)
    model = init_model(config, z_tr.shape[1], x_tr.shape[1], np.random.default_rng(init_seq), x_norm, y_norm)
    model.feature_names = list(dataset.feature_names)
    model.target_names = list(dataset.state_names)
    model.topology_id = dataset.topology_id
    report = fit(
        model,
        x_norm.forward(z_tr), y_norm.forward(x_tr),
        x_norm.forward(z_va), y_norm.forward(x_va),
        config.max_epochs, config.learning_rate, config.early_stop_patience,
        np.random.default_rng(train_seq),
    )
    return model, report


# --- transfer to a new topology -------------------------------------------------

@dataclass(frozen=True)
class FineTuneOptions:
    samples: int = 2000
    epochs: int = 90
    learning_rate: float | None = None  # default: base rate / 10
    seed: int = 1


def remap_inputs(model: MlpModel, feature_names) -> MlpModel:
    """Copy of ``model`` restricted to ``feature_names`` (a subset, any order).

    First-layer weight rows of dropped features are discarded; new features
    cannot be added.
    """
    old = {n: i for i, n in enumerate(model.feature_names)}
    missing = [n for n in feature_names if n not in old]
    if missing:
        raise SchemaError(f"features not known to the model: {missing[:5]}")
    cols = np.array([old[n] for n in feature_names], dtype=int)
    new = copy.deepcopy(model)
    first = new.layers[0]
    first.W = np.ascontiguousarray(first.W[cols])
    new.x_norm = Normalizer(model.x_norm.mean[cols], model.x_norm.std[cols], model.x_norm.constant[cols])
    new.feature_names = list(feature_names)
    return new


def renormalize(model: MlpModel, x_norm: Normalizer, y_norm: Normalizer) -> None:
    """Swap in new normalization and re-express the weights so that the
    network computes the same raw-unit function as before."""
    first, last = model.layers[0], model.layers[-1]
    dt = model.dtype
    W1 = first.W.astype(np.float64)
    ratio = x_norm.std / model.x_norm.std
    shift = (x_norm.mean - model.x_norm.mean) / model.x_norm.std
    first.b = (first.b + shift @ W1).astype(dt)
    first.W = (W1 * ratio[:, None]).astype(dt)
    Wo = last.W.astype(np.float64)
    scale = model.y_norm.std / y_norm.std
    last.b = ((last.b.astype(np.float64) * model.y_norm.std + model.y_norm.mean - y_norm.mean) / y_norm.std).astype(dt)
    last.W = (Wo * scale[None, :]).astype(dt)
    model.x_norm, model.y_norm = x_norm, y_norm


def fine_tune(model: MlpModel, dataset, options: FineTuneOptions | None = None,
              noisy: bool = True) -> tuple[MlpModel, TrainReport]:
    """Continue training all layers on a new-topology dataset.

    Uses the first ``options.samples`` training rows for ``options.epochs``
    epochs (no early stop; the best-validation epoch is kept when the
    dataset has a validation split). Normalization is recomputed on the
    fine-tuning rows. Returns a new model; ``model`` is not modified.
    """
    opts = options or FineTuneOptions()
    names = list(dataset.feature_names)
    if names != list(model.feature_names):
        if len(names) > len(model.feature_names) or not set(names) <= set(model.feature_names):
            raise SchemaError("dataset feature schema is incompatible with the model")
        tuned = remap_inputs(model, names)
    else:
        tuned = copy.deepcopy(model)
    if list(dataset.state_names) != list(model.target_names):
        raise SchemaError("dataset state layout differs from the model's outputs")
    z_tr, x_tr = _split_arrays(dataset, "train", noisy)
    z_tr, x_tr = z_tr[: opts.samples], x_tr[: opts.samples]
    z_va, x_va = _split_arrays(dataset, "val", noisy)
    cfg = tuned.config
    renormalize(tuned, Normalizer.fit(z_tr, cfg.normalize), Normalizer.fit(x_tr, cfg.normalize))
    lr = opts.learning_rate if opts.learning_rate is not None else cfg.learning_rate / 10.0
    report = fit(
        tuned,
        tuned.x_norm.forward(z_tr), tuned.y_norm.forward(x_tr),
        tuned.x_norm.forward(z_va), tuned.y_norm.forward(x_va),
        opts.epochs, lr, None, np.random.default_rng([cfg.seed, opts.seed]),
    )
    tuned.topology_id = dataset.topology_id
    return tuned, report


# --- gradient verification ----------------------------------------------------

def grad_check(model: MlpModel, z, x, epsilon: float = 1e-6, max_entries: int | None = 40,
               seed: int = 0) -> float:
    """Largest relative gap between backprop and central differences.

    Runs in inference mode (running batch-norm statistics, no dropout) on
    the normalized loss of the sample(s) ``(z, x)``. For each parameter
    array the gap is ``|g_a - g_fd| / max(|g_a|, |g_fd|, 1e-8)`` taken with
    Euclidean norms over the checked entries; at most ``max_entries``
    randomly chosen entries per array are perturbed. Use a float64 model.
    """
    zn = model.x_norm.forward(np.atleast_2d(np.asarray(z, dtype=np.float64))).astype(model.dtype)
    yn = model.y_norm.forward(np.atleast_2d(np.asarray(x, dtype=np.float64))).astype(model.dtype)

    def loss_of():
        y, _ = forward(model, zn, training=False)
        return float(np.mean((y.astype(np.float64) - yn) ** 2))

    y, caches = forward(model, zn, training=False)
    _, dy = mse_and_grad(y, yn)
    grads = backward(model, caches, dy, training=False)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for p, g in zip(model.params(), grads):
        flat = p.reshape(-1)
        gflat = g.reshape(-1)
        idx = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            idx = rng.choice(flat.size, max_entries, replace=False)
        fd = np.empty(len(idx))
        for j, k in enumerate(idx):
            orig = flat[k]
            flat[k] = orig + epsilon
            lp = loss_of()
            flat[k] = orig - epsilon
            lm = loss_of()
            flat[k] = orig
            fd[j] = (lp - lm) / (2 * epsilon)
        ga = gflat[idx].astype(np.float64)
        denom = max(np.linalg.norm(ga), np.linalg.norm(fd), 1e-8)
        worst = max(worst, float(np.linalg.norm(ga - fd) / denom))
    return worst
