"""Network data model, admittance matrix, topology graph and PMU feature layout."""

from pmuse.netmodel.case import (
    BranchRecord,
    BusRecord,
    NetworkCase,
    case_from_dict,
    case_to_dict,
    load_case_json,
    save_case_json,
)
from pmuse.netmodel.matpower import case_from_matpower, ieee118, load_matpower
from pmuse.netmodel.placement import (
    IEEE118_PMU_BUSES,
    FeatureSpec,
    PmuPlacement,
    feature_map,
    load_placement,
    state_names,
)
from pmuse.netmodel.topology import (
    apply_branch_outage,
    enumerate_n1_topologies,
    find_branch,
    hop_distance,
    hop_matrix,
    is_connected,
    min_hops_to_pmus,
    multi_source_hops,
    restore_branch,
)
from pmuse.netmodel.ybus import build_ybus


def load_case(path) -> NetworkCase:
    """Load a case from JSON or MATPOWER ``.m`` text, by file suffix."""
    from pathlib import Path

    if Path(path).suffix == ".m":
        return load_matpower(path)
    return load_case_json(path)
