"""Graph utilities over in-service branches: hop distances and outages."""

from __future__ import annotations

from collections import deque

from pmuse.errors import CaseValidationError, IslandingError
from pmuse.netmodel.case import NetworkCase


def adjacency(case: NetworkCase) -> dict[int, set[int]]:
    adj: dict[int, set[int]] = {b: set() for b in case.bus_ids}
    for br in case.branches:
        if br.in_service:
            adj[br.from_bus].add(br.to_bus)
            adj[br.to_bus].add(br.from_bus)
    return adj


def bfs_levels(adj: dict[int, set[int]], source: int) -> dict[int, int]:
    """Hop count from ``source`` to every reachable bus."""
    dist = {source: 0}
    queue = deque([source])
    while queue:
        u = queue.popleft()
        for v in adj[u]:
            if v not in dist:
                dist[v] = dist[u] + 1
                queue.append(v)
    return dist


def hop_distance(case: NetworkCase, a: int, b: int) -> int | None:
    """Shortest path length in branches; ``None`` when ``b`` is unreachable."""
    case.bus(a)
    case.bus(b)
    return bfs_levels(adjacency(case), a).get(b)


def hop_matrix(case: NetworkCase, buses) -> dict[tuple[int, int], int | None]:
    adj = adjacency(case)
    out = {}
    for a in buses:
        case.bus(a)
        levels = bfs_levels(adj, a)
        for b in buses:
            out[a, b] = levels.get(b)
    return out


def min_hops_to_pmus(case: NetworkCase, pmu_buses, bus: int) -> int | None:
    return multi_source_hops(case, pmu_buses).get(bus)


def multi_source_hops(case: NetworkCase, pmu_buses) -> dict[int, int]:
    """Minimum hop count from any PMU bus, for every reachable bus."""
    pmu_buses = list(pmu_buses)
    if not pmu_buses:
        raise ValueError("empty PMU placement")
    adj = adjacency(case)
    dist = {}
    queue = deque()
    for p in pmu_buses:
        case.bus(p)
        dist[p] = 0
        queue.append(p)
    while queue:
        u = queue.popleft()
        for v in adj[u]:
            if v not in dist:
                dist[v] = dist[u] + 1
                queue.append(v)
    return dist


def components(case: NetworkCase) -> list[set[int]]:
    adj = adjacency(case)
    seen: set[int] = set()
    comps = []
    for b in case.bus_ids:
        if b in seen:
            continue
        comp = set(bfs_levels(adj, b))
        seen |= comp
        comps.append(comp)
    return comps


def is_connected(case: NetworkCase) -> bool:
    return len(components(case)) == 1


def require_connected(case: NetworkCase) -> None:
    comps = components(case)
    if len(comps) > 1:
        slack_comp = next(c for c in comps if case.slack_id in c)
        cut = sorted(set(case.bus_ids) - slack_comp)
        raise IslandingError(f"network is islanded; buses cut off from slack: {cut}", cut)


def apply_branch_outage(case: NetworkCase, branch_id: int) -> NetworkCase:
    """Return a copy of ``case`` with one branch opened.

    Raises ``IslandingError`` naming the disconnected buses if the outage
    splits the network.
    """
    br = case.branch(branch_id)
    if not br.in_service:
        raise CaseValidationError(f"branch {branch_id} is already out of service")
    out = case.with_branch_status(branch_id, False, topology_id=f"{case.topology_id}-out{branch_id}")
    require_connected(out)
    return out


def restore_branch(case: NetworkCase, branch_id: int, topology_id: str | None = None) -> NetworkCase:
    tid = topology_id or case.topology_id.removesuffix(f"-out{branch_id}")
    return case.with_branch_status(branch_id, True, topology_id=tid)


def enumerate_n1_topologies(case: NetworkCase) -> list[int]:
    """Branch ids whose single outage leaves the network connected."""
    require_connected(case)
    bridges = _bridges(case)
    return sorted(br.id for br in case.branches if br.in_service and br.id not in bridges)


def _bridges(case: NetworkCase) -> set[int]:
    # Tarjan low-link over a multigraph; parallel branches are never bridges.
    adj: dict[int, list[tuple[int, int]]] = {b: [] for b in case.bus_ids}
    for br in case.branches:
        if br.in_service:
            adj[br.from_bus].append((br.to_bus, br.id))
            adj[br.to_bus].append((br.from_bus, br.id))
    disc: dict[int, int] = {}
    low: dict[int, int] = {}
    found: set[int] = set()
    timer = 0
    for root in case.bus_ids:
        if root in disc:
            continue
        disc[root] = low[root] = timer
        timer += 1
        stack = [(root, None, iter(adj[root]))]
        while stack:
            u, via, it = stack[-1]
            advanced = False
            for v, eid in it:
                if eid == via:
                    continue
                if v not in disc:
                    disc[v] = low[v] = timer
                    timer += 1
                    stack.append((v, eid, iter(adj[v])))
                    advanced = True
                    break
                low[u] = min(low[u], disc[v])
            if advanced:
                continue
            stack.pop()
            if stack:
                parent = stack[-1][0]
                low[parent] = min(low[parent], low[u])
                if low[u] > disc[parent]:
                    found.add(via)
    return found


def find_branch(case: NetworkCase, a: int, b: int) -> int:
    """Id of the lowest-numbered in-service branch joining buses ``a`` and ``b``."""
    for br in sorted(case.branches, key=lambda x: x.id):
        if br.in_service and {br.from_bus, br.to_bus} == {a, b}:
            return br.id
    raise CaseValidationError(f"no in-service branch between {a} and {b}")
