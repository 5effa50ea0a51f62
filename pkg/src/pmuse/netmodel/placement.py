"""PMU placement and the real-valued feature layout it induces."""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from pmuse.netmodel.case import NetworkCase

FEATURE_KINDS = ("V_mag", "V_ang", "I_mag", "I_ang")

# Highest-voltage (345 kV) buses of the IEEE 118-bus case.
IEEE118_PMU_BUSES = (8, 9, 10, 26, 30, 38, 63, 64, 65, 68, 81)


@dataclass(frozen=True)
class FeatureSpec:
    kind: str
    bus: int
    branch: int | None = None
    name: str = ""

    @property
    def is_angle(self) -> bool:
        return self.kind.endswith("_ang")

    @property
    def phasor(self) -> str:
        """Name shared by the magnitude and angle of one phasor."""
        return self.name.split("@", 1)[1]


@dataclass(frozen=True)
class PmuPlacement:
    pmu_buses: tuple[int, ...]
    feature_schema: tuple[FeatureSpec, ...] = ()

    @property
    def names(self) -> list[str]:
        return [f.name for f in self.feature_schema]

    @property
    def n_features(self) -> int:
        return len(self.feature_schema)

    def features_of_bus(self, bus: int) -> list[int]:
        return [i for i, f in enumerate(self.feature_schema) if f.bus == bus]

    def angle_mask(self) -> np.ndarray:
        return np.array([f.is_angle for f in self.feature_schema], dtype=bool)


def feature_map(case: NetworkCase, placement) -> PmuPlacement:
    """Expand PMU buses into (magnitude, angle) feature pairs.

    Per PMU bus, in placement order: its voltage phasor, then the sending-end
    current of each in-service incident branch in branch-id order.
    """
    buses = tuple(placement.pmu_buses if isinstance(placement, PmuPlacement) else placement)
    for b in buses:
        case.bus(b)
    if len(set(buses)) != len(buses):
        raise ValueError("duplicate PMU bus in placement")

    # parallel circuits between the same bus pair get a branch-id suffix
    pair_count = Counter(frozenset((br.from_bus, br.to_bus)) for br in case.branches)

    schema: list[FeatureSpec] = []
    for b in buses:
        schema.append(FeatureSpec("V_mag", b, None, f"Vmag@bus{b}"))
        schema.append(FeatureSpec("V_ang", b, None, f"Vang@bus{b}"))
        for br in case.incident_branches(b):
            other = br.to_bus if br.from_bus == b else br.from_bus
            tag = f"{b}-{other}"
            if pair_count[frozenset((br.from_bus, br.to_bus))] > 1:
                tag += f"#{br.id}"
            schema.append(FeatureSpec("I_mag", b, br.id, f"Imag@{tag}"))
            schema.append(FeatureSpec("I_ang", b, br.id, f"Iang@{tag}"))
    return PmuPlacement(buses, tuple(schema))


def load_placement(path) -> list[int]:
    """Placement file: a JSON list of bus ids (or ``{"pmu_buses": [...]}``)."""
    doc = json.loads(Path(path).read_text())
    if isinstance(doc, dict):
        doc = doc["pmu_buses"]
    return [int(b) for b in doc]


def state_names(case: NetworkCase) -> list[str]:
    return [f"Vmag@bus{b}" for b in case.bus_ids] + [f"Vang@bus{b}" for b in case.bus_ids]
