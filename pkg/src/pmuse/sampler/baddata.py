"""Synthetic bad data: random entries pushed to mu0 +- k sigma0."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class BadDataMask:
    mask: np.ndarray
    eta: float
    k: float

    @property
    def fraction(self) -> float:
        return float(self.mask.mean()) if self.mask.size else 0.0


def inject_bad_data(z: np.ndarray, eta: float, k: float, stats, seed) -> tuple[np.ndarray, BadDataMask]:
    """Corrupt each entry independently with probability ``eta``.

    A corrupted entry becomes ``mu0 + s * k * sigma0`` with a random sign
    ``s``. ``stats`` supplies per-feature ``mu`` and ``sigma`` arrays
    (normally Wald statistics learned on the training split).
    """
    if not 0.0 <= eta <= 1.0:
        raise ValueError("eta must lie in [0, 1]")
    if not k > 0:
        raise ValueError("severity multiplier k must be positive")
    orig = np.atleast_2d(np.asarray(z, dtype=float))
    z = np.array(z, dtype=float, copy=True)
    z2 = np.atleast_2d(z)
    mu = np.asarray(stats.mu, dtype=float)
    sigma = np.asarray(stats.sigma, dtype=float)
    if mu.shape[0] != z2.shape[1]:
        raise ValueError("statistics length does not match the feature count")
    rng = np.random.default_rng(seed)
    mask = rng.random(z2.shape) < eta
    sign = np.where(rng.random(z2.shape) < 0.5, -1.0, 1.0)
    bad = mu + sign * k * sigma
    z2[mask] = np.broadcast_to(bad, z2.shape)[mask]
    # an entry that happened to equal its corrupted value is not bad data
    mask &= z2 != orig
    return z2.reshape(z.shape), BadDataMask(mask.reshape(z.shape), float(eta), float(k))
