"""Scenario generation, measurement noise, datasets and bad-data injection."""

from pmuse.sampler.baddata import BadDataMask, inject_bad_data
from pmuse.sampler.dataset import (
    Dataset,
    Split,
    build_dataset,
    dataset_from_states,
    load_dataset,
    save_dataset,
)
from pmuse.sampler.extreme import ExtremeScenarios, default_load_floor, make_extreme_scenarios
from pmuse.sampler.injection import (
    Channel,
    InjectionMapper,
    InjectionModel,
    KdeDist,
    NormalDist,
    base_values,
    case_channels,
    fit_kde,
    load_history,
    parametric_model,
    parse_channel,
    row_rng,
    sample_scenarios,
    silverman_bandwidth,
)
from pmuse.sampler.noise import NOISE_PRESETS, NoiseModel, apply_noise, noise_preset

__all__ = [
    "BadDataMask",
    "Channel",
    "Dataset",
    "ExtremeScenarios",
    "InjectionMapper",
    "InjectionModel",
    "KdeDist",
    "NOISE_PRESETS",
    "NoiseModel",
    "NormalDist",
    "Split",
    "apply_noise",
    "base_values",
    "build_dataset",
    "case_channels",
    "dataset_from_states",
    "default_load_floor",
    "fit_kde",
    "inject_bad_data",
    "load_dataset",
    "load_history",
    "make_extreme_scenarios",
    "noise_preset",
    "parametric_model",
    "parse_channel",
    "row_rng",
    "sample_scenarios",
    "save_dataset",
    "silverman_bandwidth",
]
