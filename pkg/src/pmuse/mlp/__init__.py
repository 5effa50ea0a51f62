"""From-scratch dense network approximating the conditional-mean state estimator."""

from pmuse.mlp.config import PRESETS, MlpConfig, preset
from pmuse.mlp.io import TopologyMismatchWarning, load_model, save_model
from pmuse.mlp.model import Layer, MlpModel, Normalizer, backward, forward, init_model
from pmuse.mlp.train import FineTuneOptions, TrainReport, fine_tune, fit, grad_check, remap_inputs, train


def predict(model: MlpModel, z):
    return model.predict(z)


__all__ = [
    "FineTuneOptions",
    "Layer",
    "MlpConfig",
    "MlpModel",
    "Normalizer",
    "PRESETS",
    "TopologyMismatchWarning",
    "TrainReport",
    "backward",
    "fine_tune",
    "fit",
    "forward",
    "grad_check",
    "init_model",
    "load_model",
    "predict",
    "preset",
    "remap_inputs",
    "save_model",
    "train",
]
