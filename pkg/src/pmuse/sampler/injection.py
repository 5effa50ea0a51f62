"""Per-channel injection models: KDE fitted to history, or parametric normal."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence, Union

import numpy as np

from pmuse.netmodel import NetworkCase

CHANNEL_QUANTITIES = ("P", "Q", "V")
MIN_HISTORY = 30


@dataclass(frozen=True)
class Channel:
    """One sampled quantity: net P or Q at a bus, or the slack |V| setpoint."""

    bus: int
    quantity: str

    def __post_init__(self):
        if self.quantity not in CHANNEL_QUANTITIES:
            raise ValueError(f"unknown channel quantity {self.quantity!r}")

    @property
    def name(self) -> str:
        return f"{self.quantity}@bus{self.bus}"


@dataclass(frozen=True)
class KdeDist:
    points: np.ndarray
    bandwidth: float

    def __post_init__(self):
        if not self.bandwidth > 0:
            raise ValueError("KDE bandwidth must be positive")
        if len(self.points) == 0:
            raise ValueError("KDE needs at least one sample point")

    def draw(self, rng: np.random.Generator, size=None):
        idx = rng.integers(0, len(self.points), size=size)
        return self.points[idx] + self.bandwidth * rng.standard_normal(size)


@dataclass(frozen=True)
class NormalDist:
    mean: float
    std: float = 0.0

    def __post_init__(self):
        if not self.std >= 0:
            raise ValueError("std must be non-negative")

    def draw(self, rng: np.random.Generator, size=None):
        return self.mean + self.std * rng.standard_normal(size)


Dist = Union[KdeDist, NormalDist]


@dataclass(frozen=True)
class InjectionModel:
    channels: tuple[Channel, ...]
    dists: tuple[Dist, ...]

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(self.channels))
        object.__setattr__(self, "dists", tuple(self.dists))
        if len(self.channels) != len(self.dists):
            raise ValueError("one distribution per channel required")
        if len(set(self.channels)) != len(self.channels):
            raise ValueError("duplicate channel")
        normal = [isinstance(d, NormalDist) for d in self.dists]
        object.__setattr__(self, "_kde_cols", [j for j, n in enumerate(normal) if not n])
        object.__setattr__(self, "_loc", np.array([d.mean if n else 0.0 for d, n in zip(self.dists, normal)]))
        object.__setattr__(self, "_scale", np.array([d.std if n else d.bandwidth for d, n in zip(self.dists, normal)]))

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.channels]

    def draw_row(self, rng: np.random.Generator) -> np.ndarray:
        """One draw per channel; KDE channels pick a kernel centre first."""
        row = self._loc + self._scale * rng.standard_normal(len(self.dists))
        for j in self._kde_cols:
            pts = self.dists[j].points
            row[j] += pts[rng.integers(0, len(pts))]
        return row


def case_channels(case: NetworkCase) -> list[Channel]:
    """P at every non-slack bus, Q at every PQ bus, and the slack magnitude."""
    out = [Channel(b.id, "P") for b in case.buses if b.kind != "slack"]
    out += [Channel(b.id, "Q") for b in case.buses if b.kind == "PQ"]
    out.append(Channel(case.slack_id, "V"))
    return out


def base_values(case: NetworkCase, channels: Sequence[Channel]) -> np.ndarray:
    vals = []
    for c in channels:
        b = case.bus(c.bus)
        vals.append({"P": b.p_inj, "Q": b.q_inj, "V": b.v_setpoint}[c.quantity])
    return np.array(vals, dtype=float)


def silverman_bandwidth(x: np.ndarray) -> float:
    """Silverman's rule of thumb, 0.9 min(std, IQR/1.34) n^(-1/5), with a floor."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    std = float(np.std(x, ddof=1)) if n > 1 else 0.0
    q75, q25 = np.percentile(x, [75, 25])
    spread = min(std, (q75 - q25) / 1.34) or std
    bw = 0.9 * spread * n ** -0.2
    floor = 1e-9 * max(1.0, float(np.max(np.abs(x))))
    return max(bw, floor)


def fit_kde(history: Mapping[Channel, np.ndarray], bandwidth="silverman") -> InjectionModel:
    """Gaussian-kernel KDE per channel.

    ``bandwidth`` is ``"silverman"``, ``"scott"`` or a positive float used for
    every channel.
    """
    channels, dists = [], []
    for ch, values in history.items():
        x = np.asarray(values, dtype=float).ravel()
        if x.size == 0:
            raise ValueError(f"channel {ch.name} has no history")
        if x.size < MIN_HISTORY:
            raise ValueError(f"channel {ch.name}: need at least {MIN_HISTORY} samples, got {x.size}")
        if bandwidth == "silverman":
            bw = silverman_bandwidth(x)
        elif bandwidth == "scott":
            bw = max(1.06 * float(np.std(x, ddof=1)) * x.size ** -0.2, 1e-9 * max(1.0, float(np.max(np.abs(x)))))
        else:
            bw = float(bandwidth)
        channels.append(ch)
        dists.append(KdeDist(x, bw))
    return InjectionModel(tuple(channels), tuple(dists))


def parametric_model(case: NetworkCase, pct_std: float = 5.0, v_std: float = 0.0,
                     channels: Sequence[Channel] | None = None) -> InjectionModel:
    """Normal model around the base case: std = pct_std % of |base value|.

    The slack magnitude gets an absolute std ``v_std`` (pu).
    """
    channels = list(channels or case_channels(case))
    base = base_values(case, channels)
    dists = []
    for ch, mu in zip(channels, base):
        std = v_std if ch.quantity == "V" else abs(mu) * pct_std / 100.0
        dists.append(NormalDist(float(mu), float(std)))
    return InjectionModel(tuple(channels), tuple(dists))


def row_rng(seed: int, row: int, attempt: int = 0) -> np.random.Generator:
    """Independent stream per (seed, row, attempt); worker-count independent."""
    return np.random.default_rng([seed, row, attempt])


def sample_scenarios(model: InjectionModel, F: int, seed: int, start_row: int = 0) -> np.ndarray:
    """F x channels matrix; row k draws from its own stream (seed, k)."""
    if F < 1:
        raise ValueError("F must be >= 1")
    out = np.empty((F, len(model.channels)))
    for k in range(F):
        out[k] = model.draw_row(row_rng(seed, start_row + k))
    return out


class InjectionMapper:
    """Turns channel rows into full per-bus (p, q, v_set) arrays."""

    def __init__(self, case: NetworkCase, channels: Sequence[Channel]):
        idx = case.bus_index
        self.p0 = np.array([b.p_inj for b in case.buses])
        self.q0 = np.array([b.q_inj for b in case.buses])
        self.v0 = np.array([b.v_setpoint for b in case.buses])
        self.cols = {}
        for key in CHANNEL_QUANTITIES:
            pairs = [(j, idx[case.bus(ch.bus).id]) for j, ch in enumerate(channels) if ch.quantity == key]
            self.cols[key] = tuple(np.array(c, dtype=int) for c in zip(*pairs)) if pairs else None

    def __call__(self, row: np.ndarray):
        p, q, v = self.p0.copy(), self.q0.copy(), self.v0.copy()
        for target, key in ((p, "P"), (q, "Q"), (v, "V")):
            if self.cols[key] is not None:
                cols, buses = self.cols[key]
                target[buses] = row[cols]
        return p, q, v


def parse_channel(name: str) -> Channel:
    """Inverse of ``Channel.name``: ``"P@bus5"`` -> Channel(5, "P")."""
    try:
        qty, bus = name.strip().split("@bus")
        return Channel(int(bus), qty)
    except ValueError as exc:
        raise ValueError(f"bad channel name {name!r}; expected e.g. 'P@bus5'") from exc


def load_history(path) -> dict[Channel, np.ndarray]:
    """Injection history CSV: one column per channel name, one row per time step."""
    with open(path) as fh:
        names = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return {parse_channel(n): data[:, j] for j, n in enumerate(names)}
