from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from pmuse.netmodel.case import NetworkCase


def build_ybus(case: NetworkCase, sparse: bool = False):
    """Bus admittance matrix using the pi branch model.

    Rows/columns follow ``case.buses`` order. Off-diagonal entries are the
    negated series admittances; each diagonal collects incident series
    admittances, the bus shunt and half of every incident charging
    susceptance.
    """
    n = case.n_bus
    idx = case.bus_index
    rows, cols, vals = [], [], []
    for br in case.branches:
        if not br.in_service:
            continue
        f, t = idx[br.from_bus], idx[br.to_bus]
        ys = 1.0 / br.series_impedance
        ysh = 0.5j * br.shunt_susceptance_total
        rows += [f, t, f, t]
        cols += [f, t, t, f]
        vals += [ys + ysh, ys + ysh, -ys, -ys]
    for i, b in enumerate(case.buses):
        if b.shunt_admittance != 0:
            rows.append(i)
            cols.append(i)
            vals.append(b.shunt_admittance)
    ybus = sp.csr_matrix((np.array(vals, dtype=complex), (rows, cols)), shape=(n, n))
    ybus.sum_duplicates()
    return ybus if sparse else ybus.toarray()
