"""Bus/branch data model and JSON persistence."""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from functools import cached_property
from pathlib import Path

from pmuse.errors import CaseValidationError, UnknownBusError

BUS_KINDS = ("slack", "PV", "PQ")


@dataclass(frozen=True)
class BusRecord:
    """One bus. Injections are net (generation minus load), per unit.

    ``p_load``/``q_load`` keep the load component separately so that
    stress scenarios can scale demand without touching generation.
    """

    id: int
    kind: str
    p_inj: float = 0.0
    q_inj: float = 0.0
    shunt_admittance: complex = 0j
    v_setpoint: float = 1.0
    p_load: float = 0.0
    q_load: float = 0.0


@dataclass(frozen=True)
class BranchRecord:
    id: int
    from_bus: int
    to_bus: int
    series_impedance: complex
    shunt_susceptance_total: float = 0.0
    in_service: bool = True

    @property
    def series_admittance(self) -> complex:
        return 1.0 / self.series_impedance


@dataclass(frozen=True)
class NetworkCase:
    """Immutable network description; validated on construction."""

    name: str
    buses: tuple[BusRecord, ...]
    branches: tuple[BranchRecord, ...]
    topology_id: str = "base"

    def __post_init__(self):
        object.__setattr__(self, "buses", tuple(self.buses))
        object.__setattr__(self, "branches", tuple(self.branches))
        validate_case(self)

    @cached_property
    def bus_ids(self) -> tuple[int, ...]:
        return tuple(b.id for b in self.buses)

    @cached_property
    def bus_index(self) -> dict[int, int]:
        return {b.id: i for i, b in enumerate(self.buses)}

    @cached_property
    def branch_by_id(self) -> dict[int, BranchRecord]:
        return {br.id: br for br in self.branches}

    @property
    def n_bus(self) -> int:
        return len(self.buses)

    @cached_property
    def slack_id(self) -> int:
        return next(b.id for b in self.buses if b.kind == "slack")

    def bus(self, bus_id: int) -> BusRecord:
        try:
            return self.buses[self.bus_index[bus_id]]
        except KeyError:
            raise UnknownBusError(f"bus {bus_id} not in case {self.name!r}") from None

    def branch(self, branch_id: int) -> BranchRecord:
        try:
            return self.branch_by_id[branch_id]
        except KeyError:
            raise CaseValidationError(f"branch {branch_id} not in case {self.name!r}") from None

    def in_service_branches(self) -> list[BranchRecord]:
        return [br for br in self.branches if br.in_service]

    def incident_branches(self, bus_id: int) -> list[BranchRecord]:
        """In-service branches touching ``bus_id``, sorted by branch id."""
        self.bus(bus_id)
        return sorted(
            (br for br in self.branches if br.in_service and bus_id in (br.from_bus, br.to_bus)),
            key=lambda br: br.id,
        )

    def with_branch_status(self, branch_id: int, in_service: bool, topology_id: str | None = None):
        br = self.branch(branch_id)
        branches = tuple(replace(b, in_service=in_service) if b.id == br.id else b for b in self.branches)
        return NetworkCase(self.name, self.buses, branches, topology_id or self.topology_id)

    def with_buses(self, buses) -> NetworkCase:
        return NetworkCase(self.name, tuple(buses), self.branches, self.topology_id)


def validate_case(case: NetworkCase) -> None:
    ids = [b.id for b in case.buses]
    if not ids:
        raise CaseValidationError("case has no buses")
    if len(set(ids)) != len(ids):
        raise CaseValidationError("bus ids are not unique")
    for b in case.buses:
        if b.kind not in BUS_KINDS:
            raise CaseValidationError(f"bus {b.id}: unknown kind {b.kind!r}")
        if b.kind in ("slack", "PV") and not b.v_setpoint > 0:
            raise CaseValidationError(f"bus {b.id}: voltage setpoint must be positive")
    n_slack = sum(b.kind == "slack" for b in case.buses)
    if n_slack != 1:
        raise CaseValidationError(f"exactly one slack bus required, found {n_slack}")
    known = set(ids)
    branch_ids = [br.id for br in case.branches]
    if len(set(branch_ids)) != len(branch_ids):
        raise CaseValidationError("branch ids are not unique")
    for br in case.branches:
        if br.from_bus == br.to_bus:
            raise CaseValidationError(f"branch {br.id}: from_bus equals to_bus")
        if br.from_bus not in known or br.to_bus not in known:
            raise CaseValidationError(f"branch {br.id}: endpoint not in bus list")
        if not abs(br.series_impedance) > 0:
            raise CaseValidationError(f"branch {br.id}: zero series impedance")


# --- JSON persistence ---------------------------------------------------------

def _cplx(obj) -> complex:
    if isinstance(obj, dict):
        return complex(float(obj.get("re", 0.0)), float(obj.get("im", 0.0)))
    return complex(obj)


def _cplx_json(z: complex) -> dict:
    return {"re": z.real, "im": z.imag}


def case_to_dict(case: NetworkCase) -> dict:
    return {
        "name": case.name,
        "topology_id": case.topology_id,
        "buses": [
            {
                "id": b.id,
                "kind": b.kind,
                "p_inj": b.p_inj,
                "q_inj": b.q_inj,
                "shunt_admittance": _cplx_json(b.shunt_admittance),
                "v_setpoint": b.v_setpoint,
                "p_load": b.p_load,
                "q_load": b.q_load,
            }
            for b in case.buses
        ],
        "branches": [
            {
                "id": br.id,
                "from_bus": br.from_bus,
                "to_bus": br.to_bus,
                "series_impedance": _cplx_json(br.series_impedance),
                "shunt_susceptance_total": br.shunt_susceptance_total,
                "in_service": br.in_service,
            }
            for br in case.branches
        ],
    }


def case_from_dict(doc: dict) -> NetworkCase:
    try:
        buses = [
            BusRecord(
                id=int(b["id"]),
                kind=str(b["kind"]),
                p_inj=float(b.get("p_inj", 0.0)),
                q_inj=float(b.get("q_inj", 0.0)),
                shunt_admittance=_cplx(b.get("shunt_admittance", 0.0)),
                v_setpoint=float(b.get("v_setpoint", 1.0)),
                p_load=float(b.get("p_load", 0.0)),
                q_load=float(b.get("q_load", 0.0)),
            )
            for b in doc["buses"]
        ]
        branches = [
            BranchRecord(
                id=int(br.get("id", k + 1)),
                from_bus=int(br["from_bus"]),
                to_bus=int(br["to_bus"]),
                series_impedance=_cplx(br["series_impedance"]),
                shunt_susceptance_total=float(br.get("shunt_susceptance_total", 0.0)),
                in_service=bool(br.get("in_service", True)),
            )
            for k, br in enumerate(doc["branches"])
        ]
    except (KeyError, TypeError, ValueError) as exc:
        raise CaseValidationError(f"malformed case document: {exc}") from exc
    return NetworkCase(str(doc.get("name", "case")), buses, branches, str(doc.get("topology_id", "base")))


def load_case_json(path) -> NetworkCase:
    return case_from_dict(json.loads(Path(path).read_text()))


def save_case_json(case: NetworkCase, path) -> None:
    Path(path).write_text(json.dumps(case_to_dict(case), indent=1))
