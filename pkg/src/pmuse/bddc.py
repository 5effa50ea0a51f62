"""Online bad-data detection and correction for PMU feature vectors.

Detection is a per-feature Wald test against statistics learned on the
training split. Flagged features are replaced from the nearest training
operating condition (NOC) measured over the features that passed. An
extreme-scenario filter first un-flags groups of electrically close PMUs
that deviate together, since a genuine large disturbance looks like that.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np
from scipy.stats import norm

from pmuse.netmodel import NetworkCase, PmuPlacement, hop_matrix

STD_FLOOR = 1e-12
CORRECTIONS = ("noc", "mean", "none")


@dataclass(frozen=True)
class WaldStats:
    mu: np.ndarray
    sigma: np.ndarray
    feature_names: tuple[str, ...] = ()
    floored: np.ndarray | None = None

    def __len__(self):
        return len(self.mu)


def learn_stats(z_train: np.ndarray, feature_names=()) -> WaldStats:
    """Per-feature mean and unbiased std; std is floored at 1e-12 and flagged."""
    z = np.asarray(z_train, dtype=float)
    if z.ndim != 2 or len(z) < 2:
        raise ValueError("need a matrix with at least two rows")
    mu = z.mean(axis=0)
    sd = z.std(axis=0, ddof=1)
    floored = sd < STD_FLOOR
    return WaldStats(mu, np.where(floored, STD_FLOOR, sd), tuple(feature_names), floored)


def wald_threshold(alpha: float) -> float:
    """Two-sided standard-normal critical value Q^-1(alpha / 2)."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    return float(norm.isf(alpha / 2.0))


def wald_scores(z, stats: WaldStats) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if z.shape[-1] != len(stats.mu):
        raise ValueError(f"expected {len(stats.mu)} features, got {z.shape[-1]}")
    with np.errstate(invalid="ignore"):
        return np.abs(z - stats.mu) / stats.sigma


def wald_mask(z, stats: WaldStats, alpha: float = 0.05) -> np.ndarray:
    """Boolean flags (any leading shape); non-finite entries are always flagged."""
    s = wald_scores(z, stats)
    return ~np.isfinite(s) | (s >= wald_threshold(alpha))


def wald_flag(z, stats: WaldStats, alpha: float = 0.05) -> np.ndarray:
    """Indices of flagged features of one sample (ascending)."""
    return np.flatnonzero(wald_mask(np.asarray(z, dtype=float).ravel(), stats, alpha))


# --- nearest operating condition ------------------------------------------------

class NocDatabase:
    """Training matrix searched for the row closest to a sample's good features.

    Distances are Euclidean over raw features by default; with
    ``scale`` (e.g. the Wald sigmas) each column is divided by it first.
    """

    def __init__(self, y_train: np.ndarray, scale: np.ndarray | None = None):
        y = np.asarray(y_train, dtype=float)
        if y.ndim != 2 or len(y) == 0:
            raise ValueError("NOC database needs a non-empty 2-D training matrix")
        self.rows = y
        self.scale = None if scale is None else np.asarray(scale, dtype=float)
        # centring keeps the expanded squared distance well conditioned
        self.center = y.mean(axis=0)
        yc = (y - self.center) if self.scale is None else (y - self.center) / self.scale
        self._yc = np.ascontiguousarray(yc)
        self._yc2 = np.ascontiguousarray(yc * yc)

    def __len__(self):
        return len(self.rows)

    def nearest(self, z: np.ndarray, good: np.ndarray) -> int:
        """Index of the nearest row over columns where ``good`` is True (ties: smallest)."""
        zc = z - self.center
        if self.scale is not None:
            zc = zc / self.scale
        w = good.astype(float)
        zc = np.where(good, zc, 0.0)
        d2 = self._yc2 @ w - 2.0 * (self._yc @ zc) + float(zc @ zc)
        return int(np.argmin(d2))


def noc_correct(z, ibfs, y_train, database: NocDatabase | None = None):
    """Replace flagged entries of ``z`` from the nearest training row.

    Returns ``(corrected, k_star, fallback)``; ``fallback`` is True when
    every feature was flagged and the search used the full vector.
    """
    db = database or NocDatabase(y_train)
    z = np.asarray(z, dtype=float)
    bad = np.zeros(z.shape[0], dtype=bool)
    bad[np.asarray(ibfs, dtype=int)] = True
    good = ~bad
    fallback = not good.any()
    if fallback:
        good = np.isfinite(z)
        if not good.any():
            good = np.ones_like(good)
    zs = np.where(np.isfinite(z), z, 0.0)
    k = db.nearest(zs, good)
    out = z.copy()
    out[bad] = db.rows[k, bad]
    return out, k, fallback


# --- extreme scenario filter ------------------------------------------------------

class ExtremeScenarioFilter:
    """Un-flags features of PMUs that are flagged together and close together.

    For group sizes p from the number of flagged PMUs down to ``min_group``,
    every p-subset whose members are pairwise within p hops has its
    features removed from the flag set. The scan stops at the first size
    that removes anything; isolated flagged PMUs stay flagged.
    """

    def __init__(self, case: NetworkCase, placement: PmuPlacement, min_group: int = 2):
        self.placement = placement
        self.min_group = max(2, int(min_group))
        self.hops = hop_matrix(case, placement.pmu_buses)
        owner = np.array([f.bus for f in placement.feature_schema])
        self.owner = owner
        self.features_of = {b: np.flatnonzero(owner == b) for b in placement.pmu_buses}

    def close(self, group) -> bool:
        p = len(group)
        for a, b in combinations(group, 2):
            h = self.hops[a, b]
            if h is None or h > p:
                return False
        return True

    def __call__(self, ibfs) -> tuple[np.ndarray, bool]:
        ibfs = np.asarray(ibfs, dtype=int)
        if ibfs.size == 0:
            return ibfs, False
        flagged_buses = set(self.owner[ibfs].tolist())
        s = [b for b in self.placement.pmu_buses if b in flagged_buses]
        suppressed: set[int] = set()
        for p in range(len(s), self.min_group - 1, -1):
            for group in combinations(s, p):
                if self.close(group):
                    suppressed.update(group)
            if suppressed:
                break
        if not suppressed:
            return ibfs, False
        keep = ~np.isin(self.owner[ibfs], list(suppressed))
        return ibfs[keep], True


def esf_filter(ibfs, placement: PmuPlacement, case: NetworkCase, min_group: int = 2) -> np.ndarray:
    return ExtremeScenarioFilter(case, placement, min_group)(ibfs)[0]


# --- pipeline ----------------------------------------------------------------------

@dataclass(frozen=True)
class BddcConfig:
    alpha: float = 0.05
    esf_enabled: bool = True
    min_group: int = 2
    correction: str = "noc"
    standardized_distance: bool = False

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if self.correction not in CORRECTIONS:
            raise ValueError(f"correction must be one of {CORRECTIONS}")
        if self.min_group < 2:
            raise ValueError("min_group must be >= 2")


@dataclass(frozen=True)
class BddcResult:
    ibfs: np.ndarray
    ibfs_esf: np.ndarray
    corrected: np.ndarray
    noc_index: int | None
    suppressed: bool
    fallback: bool = False


class BddcPipeline:
    """Wald flagging, optional extreme-scenario filter, then correction."""

    def __init__(self, stats: WaldStats, y_train: np.ndarray, placement: PmuPlacement | None = None,
                 case: NetworkCase | None = None, config: BddcConfig | None = None):
        self.stats = stats
        self.config = config or BddcConfig()
        scale = stats.sigma if self.config.standardized_distance else None
        self.db = NocDatabase(y_train, scale) if self.config.correction == "noc" else None
        self.threshold = wald_threshold(self.config.alpha)
        self.esf = None
        if self.config.esf_enabled:
            if placement is None or case is None:
                raise ValueError("the extreme-scenario filter needs the placement and the case")
            self.esf = ExtremeScenarioFilter(case, placement, self.config.min_group)

    def process(self, z) -> BddcResult:
        z = np.asarray(z, dtype=float)
        s = wald_scores(z, self.stats)
        ibfs = np.flatnonzero(~np.isfinite(s) | (s >= self.threshold))
        ibfs_esf, suppressed = self.esf(ibfs) if self.esf is not None else (ibfs, False)
        if ibfs_esf.size == 0 or self.config.correction == "none":
            return BddcResult(ibfs, ibfs_esf, z.copy(), None, suppressed)
        if self.config.correction == "mean":
            out = z.copy()
            out[ibfs_esf] = self.stats.mu[ibfs_esf]
            return BddcResult(ibfs, ibfs_esf, out, None, suppressed)
        out, k, fallback = noc_correct(z, ibfs_esf, None, self.db)
        return BddcResult(ibfs, ibfs_esf, out, k, suppressed, fallback)

    def correct_batch(self, z_rows: np.ndarray) -> np.ndarray:
        return np.array([self.process(row).corrected for row in np.atleast_2d(z_rows)])


def process(z, stats: WaldStats, y_train, placement: PmuPlacement, case: NetworkCase,
            config: BddcConfig | None = None) -> BddcResult:
    return BddcPipeline(stats, y_train, placement, case, config).process(z)
