"""PMU measurement noise: Gaussian, Gaussian mixture and Laplace families.

Magnitude parameters are in percent of reading (multiplicative noise);
angle parameters are in radians (additive).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

NOISE_FAMILIES = ("none", "gaussian", "gmm", "laplace")


@dataclass(frozen=True)
class NoiseModel:
    """Noise family with per-component location/scale for magnitude and angle.

    Gaussian and Laplace use a single component. For ``gmm`` the tuples hold
    one entry per mixture component and ``weights`` the mixing weights.
    """

    family: str = "none"
    mag_loc: tuple[float, ...] = (0.0,)
    mag_scale: tuple[float, ...] = (0.0,)
    ang_loc: tuple[float, ...] = (0.0,)
    ang_scale: tuple[float, ...] = (0.0,)
    weights: tuple[float, ...] = (1.0,)

    def __post_init__(self):
        if self.family not in NOISE_FAMILIES:
            raise ValueError(f"unknown noise family {self.family!r}; expected one of {NOISE_FAMILIES}")
        for name in ("mag_loc", "mag_scale", "ang_loc", "ang_scale", "weights"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        k = len(self.weights)
        if any(len(getattr(self, n)) != k for n in ("mag_loc", "mag_scale", "ang_loc", "ang_scale")):
            raise ValueError("component parameter lengths must match the number of weights")
        if any(w <= 0 for w in self.weights) or abs(sum(self.weights) - 1.0) > 1e-9:
            raise ValueError("mixture weights must be positive and sum to 1")
        if any(s < 0 for s in self.mag_scale + self.ang_scale):
            raise ValueError("noise scales must be non-negative")
        if self.family != "gmm" and k != 1:
            raise ValueError(f"{self.family} noise takes a single component")

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "mag_loc": list(self.mag_loc),
            "mag_scale": list(self.mag_scale),
            "ang_loc": list(self.ang_loc),
            "ang_scale": list(self.ang_scale),
            "weights": list(self.weights),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "NoiseModel":
        if "family" in doc and len(doc) == 1:
            return noise_preset(doc["family"])
        return cls(**doc)


NOISE_PRESETS = {
    "none": NoiseModel("none"),
    "gaussian": NoiseModel("gaussian", (0.0,), (0.0033,), (0.0,), (0.0029,)),
    "gmm": NoiseModel(
        "gmm",
        mag_loc=(0.0, 0.005),
        mag_scale=(0.0015, 0.0015),
        ang_loc=(0.0, 0.0043),
        ang_scale=(0.0014, 0.0014),
        weights=(0.3, 0.7),
    ),
    "laplace": NoiseModel("laplace", (0.001,), (0.0015,), (0.0009,), (0.0013,)),
}


def noise_preset(name: str) -> NoiseModel:
    try:
        return NOISE_PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown noise family {name!r}; expected one of {NOISE_FAMILIES}") from None


def draw_noise(model: NoiseModel, loc, scale, size, rng: np.random.Generator) -> np.ndarray:
    loc = np.asarray(loc)
    scale = np.asarray(scale)
    if model.family == "gaussian":
        return loc[0] + scale[0] * rng.standard_normal(size)
    if model.family == "laplace":
        return rng.laplace(loc[0], scale[0], size) if scale[0] > 0 else np.full(size, loc[0])
    comp = rng.choice(len(model.weights), size=size, p=np.asarray(model.weights))
    return loc[comp] + scale[comp] * rng.standard_normal(size)


def apply_noise(features: np.ndarray, angle_mask: np.ndarray, model: NoiseModel, seed) -> np.ndarray:
    """Return a noisy copy of polar PMU ``features`` (rows are scenarios).

    Magnitudes become ``value * (1 + eps/100)``; angles become ``value + eps``.
    """
    z = np.array(features, dtype=float, copy=True)
    if model.family == "none":
        return z
    angle_mask = np.asarray(angle_mask, dtype=bool)
    if z.shape[-1] != angle_mask.size:
        raise ValueError("angle mask length does not match the feature count")
    mag = ~angle_mask
    if np.any(z[..., mag] < 0):
        raise ValueError("magnitude features must be non-negative")
    rng = np.random.default_rng(seed)
    z2 = np.atleast_2d(z)
    n_rows = z2.shape[0]
    eps_mag = draw_noise(model, model.mag_loc, model.mag_scale, (n_rows, int(mag.sum())), rng)
    eps_ang = draw_noise(model, model.ang_loc, model.ang_scale, (n_rows, int(angle_mask.sum())), rng)
    z2[:, mag] *= 1.0 + eps_mag / 100.0
    z2[:, angle_mask] += eps_ang
    return z2.reshape(z.shape)
