"""Versioned JSON model files."""

from __future__ import annotations

import json
import warnings
from pathlib import Path

import numpy as np

from pmuse.errors import ModelFormatError
from pmuse.mlp.config import MlpConfig
from pmuse.mlp.model import Layer, MlpModel, Normalizer

FORMAT = "pmuse-mlp"
VERSION = 1


class TopologyMismatchWarning(UserWarning):
    """A model trained on one topology is being used with another."""


def _arr(a) -> dict:
    a = np.asarray(a)
    # float() of a float32 value is exact, so JSON round-trips bit for bit
    return {"shape": list(a.shape), "data": [float(v) for v in a.reshape(-1)]}


def _unarr(doc, dtype) -> np.ndarray:
    return np.asarray(doc["data"], dtype=np.float64).astype(dtype).reshape(doc["shape"])


def model_to_dict(model: MlpModel) -> dict:
    layers = []
    for layer in model.layers:
        entry = {"W": _arr(layer.W), "b": _arr(layer.b)}
        if layer.gamma is not None:
            entry.update(gamma=_arr(layer.gamma), beta=_arr(layer.beta),
                         run_mean=_arr(layer.run_mean), run_var=_arr(layer.run_var))
        layers.append(entry)
    norm = lambda n: {"mean": _arr(n.mean), "std": _arr(n.std), "constant": n.constant.tolist()}  # noqa: E731
    return {
        "format": FORMAT,
        "version": VERSION,
        "config": model.config.to_dict(),
        "topology_id": model.topology_id,
        "feature_names": list(model.feature_names),
        "target_names": list(model.target_names),
        "x_norm": norm(model.x_norm),
        "y_norm": norm(model.y_norm),
        "layers": layers,
    }


def model_from_dict(doc: dict) -> MlpModel:
    if doc.get("format") != FORMAT:
        raise ModelFormatError("not a model file")
    if doc.get("version") != VERSION:
        raise ModelFormatError(f"unsupported model version {doc.get('version')!r} (expected {VERSION})")
    try:
        config = MlpConfig.from_dict(doc["config"])
        dt = np.dtype(config.dtype)
        layers = []
        for entry in doc["layers"]:
            layer = Layer(_unarr(entry["W"], dt), _unarr(entry["b"], dt))
            if "gamma" in entry:
                layer.gamma = _unarr(entry["gamma"], dt)
                layer.beta = _unarr(entry["beta"], dt)
                layer.run_mean = _unarr(entry["run_mean"], dt)
                layer.run_var = _unarr(entry["run_var"], dt)
            layers.append(layer)
        norms = []
        for key in ("x_norm", "y_norm"):
            n = doc[key]
            norms.append(Normalizer(_unarr(n["mean"], np.float64), _unarr(n["std"], np.float64),
                                    np.asarray(n["constant"], dtype=bool)))
        model = MlpModel(config, layers, norms[0], norms[1], list(doc["feature_names"]),
                         list(doc["target_names"]), str(doc["topology_id"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"corrupt model file: {exc}") from exc
    for prev, nxt in zip(model.layers, model.layers[1:]):
        if prev.W.shape[1] != nxt.W.shape[0]:
            raise ModelFormatError("layer dimensions do not chain")
    return model


def save_model(model: MlpModel, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(model_to_dict(model)))
    return path


def load_model(path, case=None) -> MlpModel:
    """Read a model file; warn if ``case`` has a different topology id."""
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"corrupt model file {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ModelFormatError(f"corrupt model file {path}")
    model = model_from_dict(doc)
    if case is not None and case.topology_id != model.topology_id:
        warnings.warn(
            f"model topology {model.topology_id!r} differs from case topology {case.topology_id!r}",
            TopologyMismatchWarning,
            stacklevel=2,
        )
    return model
