"""Small built-in cases used by tests, the oracle study and smoke runs."""

from __future__ import annotations

import numpy as np

from pmuse.netmodel.case import BranchRecord, BusRecord, NetworkCase


def two_bus(z: complex = 0.1j, p_load: float = 0.0, q_load: float = 0.0, v_slack: float = 1.0) -> NetworkCase:
    buses = [
        BusRecord(1, "slack", v_setpoint=v_slack),
        BusRecord(2, "PQ", p_inj=-p_load, q_inj=-q_load, p_load=p_load, q_load=q_load),
    ]
    return NetworkCase("two_bus", buses, [BranchRecord(1, 1, 2, z)])


def triangle(z: complex = 0.1j, loads=(0.0, 0.0)) -> NetworkCase:
    buses = [
        BusRecord(1, "slack"),
        BusRecord(2, "PQ", p_inj=-loads[0], p_load=loads[0]),
        BusRecord(3, "PQ", p_inj=-loads[1], p_load=loads[1]),
    ]
    branches = [BranchRecord(1, 1, 2, z), BranchRecord(2, 2, 3, z), BranchRecord(3, 3, 1, z)]
    return NetworkCase("triangle", buses, branches)


# Nominal values of the 3-bus example: series impedances, bus shunt
# impedances and the mean injections. Shunt impedance "Inf" at bus 2 means
# no shunt there.
THREE_BUS_IMPEDANCES = {(1, 2): 0.05 + 0.1j, (2, 3): 0.05j, (3, 1): 0.02 + 0.05j}
THREE_BUS_SHUNT_IMPEDANCE = {1: -100j, 3: -40j}
THREE_BUS_MEANS = {"P2g": 2.0, "P3g": 0.5, "Q2g": 0.1, "P3l": 2.0, "Q3l": 0.5, "V1": 1.0}


def three_bus(p2: float = 2.0, q2: float = 0.1, p3: float = -1.5, q3: float = -0.5, v1: float = 1.0) -> NetworkCase:
    """3-bus system of the analytical MMSE example.

    ``p2``/``q2``/``p3``/``q3`` are net injections; the defaults are the
    nominal reading in which the third listed generation entry is a
    generator at bus 3 offsetting part of its load.
    """
    buses = [
        BusRecord(1, "slack", v_setpoint=v1, shunt_admittance=1 / THREE_BUS_SHUNT_IMPEDANCE[1]),
        BusRecord(2, "PQ", p_inj=p2, q_inj=q2),
        BusRecord(3, "PQ", p_inj=p3, q_inj=q3, p_load=-p3, q_load=-q3, shunt_admittance=1 / THREE_BUS_SHUNT_IMPEDANCE[3]),
    ]
    branches = [
        BranchRecord(k + 1, a, b, z) for k, ((a, b), z) in enumerate(THREE_BUS_IMPEDANCES.items())
    ]
    return NetworkCase("three_bus", buses, branches)


def synthetic_case(n_bus: int, seed: int = 0, extra_edges: float = 0.5, load_mean: float = 0.1,
                   gen_share: float = 0.97) -> NetworkCase:
    """Random meshed network: a random spanning tree plus extra chords.

    Loads are drawn around ``load_mean`` pu; one in ten buses is a PV
    generator and the generators together cover ``gen_share`` of the
    demand, so the slack only carries the remainder plus losses. Used for
    scalability smoke tests.
    """
    rng = np.random.default_rng(seed)
    ids = list(range(1, n_bus + 1))
    edges = []
    for k in range(1, n_bus):
        # attach to a nearby earlier bus to keep the graph geographic-ish
        j = int(rng.integers(max(0, k - 8), k))
        edges.append((ids[j], ids[k]))
    seen = {frozenset(e) for e in edges}
    for _ in range(int(extra_edges * n_bus)):
        a = int(rng.integers(0, n_bus))
        b = int(np.clip(a + rng.integers(-12, 13), 0, n_bus - 1))
        if a != b and frozenset((ids[a], ids[b])) not in seen:
            seen.add(frozenset((ids[a], ids[b])))
            edges.append((ids[a], ids[b]))

    loads = np.abs(rng.normal(load_mean, load_mean / 3, n_bus))
    gen_mask = rng.random(n_bus) < 0.1
    gen_mask[0] = False
    total = loads.sum()
    n_gen = max(int(gen_mask.sum()), 1)
    buses = []
    for i, bid in enumerate(ids):
        pl, ql = float(loads[i]), float(0.3 * loads[i])
        if i == 0:
            buses.append(BusRecord(bid, "slack", -pl, -ql, v_setpoint=1.02, p_load=pl, q_load=ql))
        elif gen_mask[i]:
            pg = gen_share * total / n_gen
            buses.append(BusRecord(bid, "PV", pg - pl, -ql, v_setpoint=1.01, p_load=pl, q_load=ql))
        else:
            buses.append(BusRecord(bid, "PQ", -pl, -ql, p_load=pl, q_load=ql))
    branches = []
    for k, (a, b) in enumerate(edges):
        x = float(rng.uniform(0.01, 0.04))
        branches.append(BranchRecord(k + 1, a, b, complex(0.15 * x, x), float(rng.uniform(0.0, 0.05))))
    return NetworkCase(f"synthetic{n_bus}", buses, branches)
