"""Reader for MATPOWER ``.m`` case text (version 2 format).

Only the columns needed for a bus/branch power flow are used. Transformer
tap ratios and phase shifts are read but not modelled; ``load_matpower``
reports them through ``ignored_taps`` on the returned info dict.
"""

from __future__ import annotations

import re
from importlib import resources
from pathlib import Path

import numpy as np

from pmuse.errors import CaseValidationError
from pmuse.netmodel.case import BranchRecord, BusRecord, NetworkCase

_MATRIX_RE = re.compile(r"mpc\.(\w+)\s*=\s*\[(.*?)\]\s*;", re.S)
_SCALAR_RE = re.compile(r"mpc\.(\w+)\s*=\s*([-+0-9.eE]+)\s*;")

_TYPE = {1: "PQ", 2: "PV", 3: "slack"}


def parse_matpower(text: str) -> dict[str, np.ndarray | float]:
    """Return the numeric blocks of a MATPOWER case as arrays."""
    out: dict[str, np.ndarray | float] = {}
    # strip comments but keep line structure
    lines = [ln.split("%", 1)[0] for ln in text.splitlines()]
    body = "\n".join(lines)
    for name, value in _SCALAR_RE.findall(body):
        out[name] = float(value)
    for name, block in _MATRIX_RE.findall(body):
        rows = []
        for row in re.split(r"[;\n]", block):
            row = row.strip()
            if row:
                rows.append([float(v) for v in row.replace(",", " ").split()])
        if rows:
            width = max(len(r) for r in rows)
            if any(len(r) != width for r in rows):
                raise CaseValidationError(f"ragged rows in mpc.{name}")
            out[name] = np.array(rows, dtype=float)
    for key in ("bus", "branch"):
        if key not in out:
            raise CaseValidationError(f"MATPOWER text lacks mpc.{key}")
    return out


def case_from_matpower(text: str, name: str = "matpower") -> tuple[NetworkCase, dict]:
    mpc = parse_matpower(text)
    base = float(mpc.get("baseMVA", 100.0))
    bus = mpc["bus"]
    gen = mpc.get("gen", np.zeros((0, 10)))
    branch = mpc["branch"]

    pg: dict[int, float] = {}
    qg: dict[int, float] = {}
    vg: dict[int, float] = {}
    for row in gen:
        if len(row) > 7 and row[7] <= 0:
            continue
        b = int(row[0])
        pg[b] = pg.get(b, 0.0) + row[1]
        qg[b] = qg.get(b, 0.0) + row[2]
        vg.setdefault(b, row[5])

    buses = []
    for row in bus:
        bid, btype = int(row[0]), int(row[1])
        if btype == 4:
            raise CaseValidationError(f"bus {bid} is flagged isolated (type 4)")
        kind = _TYPE[btype]
        pd, qd = row[2] / base, row[3] / base
        buses.append(
            BusRecord(
                id=bid,
                kind=kind,
                p_inj=pg.get(bid, 0.0) / base - pd,
                q_inj=qg.get(bid, 0.0) / base - qd,
                shunt_admittance=complex(row[4], row[5]) / base,
                v_setpoint=float(vg.get(bid, row[7])) if kind != "PQ" else 1.0,
                p_load=pd,
                q_load=qd,
            )
        )

    branches = []
    taps = []
    for k, row in enumerate(branch):
        status = row[10] > 0 if len(row) > 10 else True
        ratio = row[8] if len(row) > 8 else 0.0
        shift = row[9] if len(row) > 9 else 0.0
        if (ratio not in (0.0, 1.0)) or shift != 0.0:
            taps.append((k + 1, int(row[0]), int(row[1]), ratio, shift))
        branches.append(
            BranchRecord(
                id=k + 1,
                from_bus=int(row[0]),
                to_bus=int(row[1]),
                series_impedance=complex(row[2], row[3]),
                shunt_susceptance_total=float(row[4]),
                in_service=bool(status),
            )
        )
    return NetworkCase(name, buses, branches), {"base_mva": base, "ignored_taps": taps}


def load_matpower(path) -> NetworkCase:
    path = Path(path)
    case, _ = case_from_matpower(path.read_text(), name=path.stem)
    return case


def ieee118() -> NetworkCase:
    """IEEE 118-bus test case shipped with the package."""
    text = resources.files("pmuse.data").joinpath("case118.m").read_text()
    case, _ = case_from_matpower(text, name="case118")
    return case
