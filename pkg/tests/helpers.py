"""Assignment construction for builder and solver tests.

Builds full variable vectors from hand-written state/op sequences using the
direct algebraic maps from the model module, deliberately bypassing the
instance's own rows so the checker and the builder verify each other.
"""

from __future__ import annotations

from typing import Mapping, Sequence

import numpy as np

from flexsched.milp import MilpInstance
from flexsched.model import (
    Horizon,
    Topology,
    dry_sludge_rate,
    power_at,
    storage_step,
    thin_sludge_rate,
)


def assignment_from_sequences(
    instance: MilpInstance,
    topology: Topology,
    horizon: Horizon,
    density: np.ndarray,
    inflows: Mapping[str, np.ndarray],
    states: Mapping[str, Sequence[str]],
    ops: Mapping[str, Sequence[float]],
) -> np.ndarray:
    """Vector of all variable values implied by per-resource state/op series."""
    T = horizon.step_count
    dt_h = horizon.step_hours
    values = np.zeros(len(instance.variables))
    by_tag = instance.index_map

    p_ds = {r.name: np.zeros(T) for r in topology.resources}
    p_ts = {r.name: np.zeros(T) for r in topology.resources}
    p_el = {r.name: np.zeros(T) for r in topology.resources}

    for r in topology.resources:
        seq = states[r.name]
        op_seq = ops[r.name]
        assert len(seq) == T and len(op_seq) == T
        for t in range(T):
            values[by_tag[f"op[{r.name}][{t}]"].index] = op_seq[t]
            for s in r.states:
                values[by_tag[f"x[{r.name}][{s.name}][{t}]"].index] = 1.0 if s.name == seq[t] else 0.0
            p_el[r.name][t] = power_at(r, seq[t], op_seq[t], density[t])
            p_ds[r.name][t] = thin_sludge_rate(r, op_seq[t])
            p_ts[r.name][t] = dry_sludge_rate(p_ds[r.name][t], density[t])
            values[by_tag[f"p_el[{r.name}][{t}]"].index] = p_el[r.name][t]
            values[by_tag[f"p_ds[{r.name}][{t}]"].index] = p_ds[r.name][t]
            values[by_tag[f"p_ts[{r.name}][{t}]"].index] = p_ts[r.name][t]

    for st in topology.storages:
        draws = [r.name for r in topology.resources if topology.thin_source_of(r.name) == st.name]
        feeds = [r.name for r in topology.resources if topology.dry_sink_of(r.name) == st.name]
        inflow = inflows.get(st.name, np.zeros(T))
        soc = st.soc_init
        for t in range(T):
            total_in = inflow[t] + sum(p_ts[rn][t] for rn in feeds)
            total_out = sum(p_ds[rn][t] for rn in draws)
            soc = storage_step(soc, total_in, total_out, dt_h)
            values[by_tag[f"soc[{st.name}][{t}]"].index] = soc

    for t in range(T):
        values[by_tag[f"p_system[{t}]"].index] = sum(p_el[rn][t] for rn in p_el)

    return values
