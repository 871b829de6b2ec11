"""MILP instance compiler and independent solution checker.

Compiles a validated plant topology plus per-step prices and forecasts into a
solver-agnostic mixed-integer linear program. Every constraint row carries a
provenance label of the form "<class> @ <context>" so violations and coverage
can be reported in domain terms.

Bound-type rows (operating point, fill level) are emitted as explicit labeled
rows and duplicated as variable bounds; the duplication is intentional, rows
document the model while bounds feed the solver directly.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .model import (
    DRY_SLUDGE,
    RUN_STATE,
    START_STATE,
    THIN_SLUDGE,
    Horizon,
    ResourceSpec,
    Topology,
)

logger = logging.getLogger(__name__)

CONTINUOUS = "continuous"
BINARY = "binary"

LE, EQ, GE = "<=", "=", ">="

# Constraint class labels (the part of a provenance label before " @ ").
OP_BOUNDS = "op-bounds"
POWER_MAP = "power-map"
THIN_RATE = "thin-sludge-rate"
DRY_RATE = "dry-sludge-rate"
SYSTEM_POWER = "system-power"
OP_STATE_LOWER = "op-state-lower"
OP_STATE_UPPER = "op-state-upper"
STATE_CHOICE = "state-choice"
SUCCESSOR = "successor"
MIN_HOLD = "min-hold"
MAX_HOLD = "max-hold"
NO_SIMULTANEOUS_START = "no-simultaneous-start"
STORAGE_BALANCE = "storage-balance"
SOC_BOUNDS = "soc-bounds"
INITIAL_STATE = "initial-state"
TERMINAL_SOC = "terminal-soc"
INITIAL_DWELL = "initial-dwell"

# The constraint classes that together express the full algebraic model; used
# by coverage checks on built instances.
CONSTRAINT_CLASSES = frozenset({
    OP_BOUNDS, POWER_MAP, THIN_RATE, DRY_RATE, SYSTEM_POWER,
    OP_STATE_LOWER, OP_STATE_UPPER, STATE_CHOICE, SUCCESSOR,
    MIN_HOLD, MAX_HOLD, NO_SIMULTANEOUS_START, SOC_BOUNDS, STORAGE_BALANCE,
})


class BuildError(ValueError):
    """Inputs cannot be compiled into an instance."""


def constraint_class(provenance: str) -> str:
    return provenance.split(" @ ", 1)[0]


@dataclass(frozen=True)
class VarRef:
    index: int
    kind: str
    lower: float
    upper: float
    tag: str

    def __post_init__(self) -> None:
        if self.kind == BINARY and (self.lower, self.upper) != (0.0, 1.0):
            raise ValueError(f"binary {self.tag} must have bounds [0, 1]")


@dataclass(frozen=True)
class LinearConstraint:
    """sum(coef * var) <sense> rhs. Terms are index-sorted and duplicate-free."""

    terms: tuple[tuple[int, float], ...]
    sense: str
    rhs: float
    provenance: str

    def __post_init__(self) -> None:
        if self.sense not in (LE, EQ, GE):
            raise ValueError(f"bad sense {self.sense!r} in {self.provenance}")
        seen: set[int] = set()
        for idx, coef in self.terms:
            if idx in seen:
                raise ValueError(f"duplicate variable {idx} in {self.provenance}")
            seen.add(idx)
            if not math.isfinite(coef) or coef == 0.0:
                raise ValueError(f"coefficient {coef} on variable {idx} in {self.provenance}")

    def evaluate(self, assignment: Sequence[float]) -> float:
        return sum(coef * assignment[idx] for idx, coef in self.terms)


@dataclass(frozen=True)
class MilpInstance:
    variables: tuple[VarRef, ...]
    constraints: tuple[LinearConstraint, ...]
    objective: tuple[tuple[int, float], ...]
    objective_constant: float
    sense: str
    index_map: Mapping[str, VarRef] = field(compare=False, repr=False)

    @classmethod
    def create(
        cls,
        variables: Sequence[VarRef],
        constraints: Sequence[LinearConstraint],
        objective: Sequence[tuple[int, float]],
        objective_constant: float = 0.0,
    ) -> "MilpInstance":
        variables = tuple(variables)
        index_map: dict[str, VarRef] = {}
        for v in variables:
            if v.tag in index_map:
                raise ValueError(f"duplicate variable tag {v.tag!r}")
            index_map[v.tag] = v
        n = len(variables)
        for idx, _ in objective:
            if not (0 <= idx < n):
                raise ValueError(f"objective references unknown variable {idx}")
        return cls(
            variables=variables,
            constraints=tuple(constraints),
            objective=tuple(objective),
            objective_constant=objective_constant,
            sense="min",
            index_map=index_map,
        )

    @property
    def binary_indices(self) -> tuple[int, ...]:
        return tuple(v.index for v in self.variables if v.kind == BINARY)

    def objective_value(self, assignment: Sequence[float]) -> float:
        return self.objective_constant + sum(c * assignment[i] for i, c in self.objective)


@dataclass(frozen=True)
class BuildOptions:
    """Optional build-time tightenings.

    elapsed_dwell_minutes: time each resource has already spent in its pinned
    initial state before t = 0. Reduces the remaining minimum hold (floored at
    zero) and shortens the remaining maximum hold. Must be whole step
    multiples; values for unknown resources are rejected.
    """

    elapsed_dwell_minutes: Mapping[str, float] = field(default_factory=dict)


@dataclass(frozen=True)
class CheckViolation:
    """One constraint, bound, or integrality breach found by the checker."""

    code: str  # constraint | bound | integrality
    message: str
    provenance: str | None
    amount: float

    def __str__(self) -> str:
        return self.message


class _Accumulator:
    def __init__(self) -> None:
        self.variables: list[VarRef] = []
        self.constraints: list[LinearConstraint] = []

    def var(self, kind: str, lower: float, upper: float, tag: str) -> int:
        idx = len(self.variables)
        self.variables.append(VarRef(idx, kind, lower, upper, tag))
        return idx

    def con(self, terms: Iterable[tuple[int, float]], sense: str, rhs: float, provenance: str) -> None:
        merged: dict[int, float] = {}
        for idx, coef in terms:
            merged[idx] = merged.get(idx, 0.0) + coef
        cleaned = tuple(sorted((i, c) for i, c in merged.items() if c != 0.0))
        self.constraints.append(LinearConstraint(cleaned, sense, rhs, provenance))


def _steps(minutes: float, horizon: Horizon, what: str) -> int:
    if math.isinf(minutes):
        raise ValueError(f"{what} must be finite")
    ratio = minutes / horizon.step_minutes
    if abs(ratio - round(ratio)) > 1e-9:
        raise BuildError(f"{what} {minutes} min is not a whole number of {horizon.step_minutes} min steps")
    return int(round(ratio))


def _exclusion_class(state_name: str) -> str:
    return f"no-simultaneous-{state_name.lower()}"


def build_instance(
    topology: Topology,
    horizon: Horizon,
    prices: np.ndarray,
    density: np.ndarray,
    inflows: Mapping[str, np.ndarray],
    options: BuildOptions | None = None,
) -> MilpInstance:
    """Compile the plant into a MILP over the horizon.

    prices are EUR/MWh per step, density g/l per step, inflows m3/h per step
    keyed by storage name (storages without exogenous inflow may be absent).
    The caller is expected to have run validate_topology; this function only
    re-checks what it needs to stay well-defined.
    """
    options = options or BuildOptions()
    T = horizon.step_count
    dt_h = horizon.step_hours

    prices = np.asarray(prices, dtype=float)
    density = np.asarray(density, dtype=float)
    if prices.shape != (T,):
        raise BuildError(f"price vector has length {prices.shape}, horizon needs {T}")
    if density.shape != (T,):
        raise BuildError(f"density vector has length {density.shape}, horizon needs {T}")
    inflow_vectors: dict[str, np.ndarray] = {}
    for st in topology.storages:
        vec = inflows.get(st.name)
        if vec is None:
            if st.exogenous_inflow is not None:
                raise BuildError(f"storage {st.name!r} declares exogenous inflow but none was supplied")
            inflow_vectors[st.name] = np.zeros(T)
        else:
            vec = np.asarray(vec, dtype=float)
            if vec.shape != (T,):
                raise BuildError(f"inflow vector for {st.name!r} has length {vec.shape}, horizon needs {T}")
            inflow_vectors[st.name] = vec
    for name in inflows:
        if name not in {st.name for st in topology.storages}:
            raise BuildError(f"inflow supplied for unknown storage {name!r}")
    for name in options.elapsed_dwell_minutes:
        if name not in {r.name for r in topology.resources}:
            raise BuildError(f"elapsed dwell declared for unknown resource {name!r}")

    acc = _Accumulator()

    op_idx: dict[tuple[str, int], int] = {}
    x_idx: dict[tuple[str, str, int], int] = {}
    p_el_idx: dict[tuple[str, int], int] = {}
    p_ds_idx: dict[tuple[str, int], int] = {}
    p_ts_idx: dict[tuple[str, int], int] = {}
    soc_idx: dict[tuple[str, int], int] = {}
    p_sys_idx: dict[int, int] = {}

    for r in topology.resources:
        for t in range(T):
            op_idx[r.name, t] = acc.var(CONTINUOUS, r.op_min, r.op_max, f"op[{r.name}][{t}]")
        for s in r.states:
            for t in range(T):
                x_idx[r.name, s.name, t] = acc.var(BINARY, 0.0, 1.0, f"x[{r.name}][{s.name}][{t}]")
        for t in range(T):
            p_el_idx[r.name, t] = acc.var(CONTINUOUS, -math.inf, math.inf, f"p_el[{r.name}][{t}]")
        for t in range(T):
            p_ds_idx[r.name, t] = acc.var(CONTINUOUS, -math.inf, math.inf, f"p_ds[{r.name}][{t}]")
        for t in range(T):
            p_ts_idx[r.name, t] = acc.var(CONTINUOUS, -math.inf, math.inf, f"p_ts[{r.name}][{t}]")
    for st in topology.storages:
        for t in range(T):
            soc_idx[st.name, t] = acc.var(CONTINUOUS, st.soc_min, st.soc_max, f"soc[{st.name}][{t}]")
    for t in range(T):
        p_sys_idx[t] = acc.var(CONTINUOUS, -math.inf, math.inf, f"p_system[{t}]")

    for r in topology.resources:
        for t in range(T):
            o = op_idx[r.name, t]
            acc.con([(o, 1.0)], GE, r.op_min, f"{OP_BOUNDS} @ {r.name} t={t} lower")
            acc.con([(o, 1.0)], LE, r.op_max, f"{OP_BOUNDS} @ {r.name} t={t} upper")

        for t in range(T):
            terms: list[tuple[int, float]] = [(p_el_idx[r.name, t], 1.0), (op_idx[r.name, t], -r.coeff_b)]
            run = r.find_state(RUN_STATE)
            start = r.find_state(START_STATE)
            if run is not None:
                terms.append((x_idx[r.name, RUN_STATE, t], -(r.coeff_a + r.coeff_c * density[t])))
            if start is not None:
                terms.append((x_idx[r.name, START_STATE, t], -r.coeff_d))
            acc.con(terms, EQ, 0.0, f"{POWER_MAP} @ {r.name} t={t}")

        for t in range(T):
            acc.con(
                [(p_ds_idx[r.name, t], 1.0), (op_idx[r.name, t], -r.coeff_e)],
                EQ, 0.0, f"{THIN_RATE} @ {r.name} t={t}",
            )
        for t in range(T):
            acc.con(
                [(p_ts_idx[r.name, t], 1.0), (p_ds_idx[r.name, t], -density[t])],
                EQ, 0.0, f"{DRY_RATE} @ {r.name} t={t}",
            )

        for t in range(T):
            lo = [(op_idx[r.name, t], 1.0)] + [
                (x_idx[r.name, s.name, t], -s.op_min) for s in r.states
            ]
            acc.con(lo, GE, 0.0, f"{OP_STATE_LOWER} @ {r.name} t={t}")
            hi = [(op_idx[r.name, t], 1.0)] + [
                (x_idx[r.name, s.name, t], -s.op_max) for s in r.states
            ]
            acc.con(hi, LE, 0.0, f"{OP_STATE_UPPER} @ {r.name} t={t}")
            acc.con(
                [(x_idx[r.name, s.name, t], 1.0) for s in r.states],
                EQ, 1.0, f"{STATE_CHOICE} @ {r.name} t={t}",
            )

        for s in r.states:
            for t in range(1, T):
                terms = [(x_idx[r.name, s.name, t - 1], 1.0), (x_idx[r.name, s.name, t], -1.0)]
                terms += [(x_idx[r.name, f, t], -1.0) for f in s.successors]
                acc.con(terms, LE, 0.0, f"{SUCCESSOR} @ {r.name} {s.name} t={t}")

        for s in r.states:
            n_min = _steps(s.hold_min_minutes, horizon, f"hold_min of {r.name}/{s.name}")
            if n_min > 1:
                for t in range(1, T):
                    w = min(n_min, T - t)  # clipped window; entries near the edge persist to it
                    terms = [(x_idx[r.name, s.name, t], float(w)), (x_idx[r.name, s.name, t - 1], -float(w))]
                    terms += [(x_idx[r.name, s.name, tau], -1.0) for tau in range(t, t + w)]
                    acc.con(terms, LE, 0.0, f"{MIN_HOLD} @ {r.name} {s.name} t={t}")
            if not math.isinf(s.hold_max_minutes):
                n_max = _steps(s.hold_max_minutes, horizon, f"hold_max of {r.name}/{s.name}")
                for t in range(0, T - n_max):
                    terms = [(x_idx[r.name, s.name, tau], 1.0) for tau in range(t, t + n_max + 1)]
                    acc.con(terms, LE, float(n_max), f"{MAX_HOLD} @ {r.name} {s.name} t={t}")

    for state_name, names in topology.mutual_exclusions:
        cls = _exclusion_class(state_name)
        for t in range(T):
            acc.con(
                [(x_idx[rn, state_name, t], 1.0) for rn in names],
                LE, 1.0, f"{cls} @ t={t}",
            )

    for st in topology.storages:
        draws = [r.name for r in topology.resources if _thin_source(topology, r.name) == st.name]
        feeds = [r.name for r in topology.resources if _dry_sink(topology, r.name) == st.name]
        inflow = inflow_vectors[st.name]
        for t in range(T):
            terms = [(soc_idx[st.name, t], 1.0)]
            rhs = inflow[t] * dt_h
            if t >= 1:
                terms.append((soc_idx[st.name, t - 1], -1.0))
            else:
                rhs += st.soc_init
            terms += [(p_ds_idx[rn, t], dt_h) for rn in draws]
            terms += [(p_ts_idx[rn, t], -dt_h) for rn in feeds]
            acc.con(terms, EQ, rhs, f"{STORAGE_BALANCE} @ {st.name} t={t}")
        for t in range(T):
            acc.con([(soc_idx[st.name, t], 1.0)], GE, st.soc_min, f"{SOC_BOUNDS} @ {st.name} t={t} lower")
            acc.con([(soc_idx[st.name, t], 1.0)], LE, st.soc_max, f"{SOC_BOUNDS} @ {st.name} t={t} upper")
        if st.terminal_target is not None:
            last = soc_idx[st.name, T - 1]
            if st.terminal_tolerance > 0:
                acc.con([(last, 1.0)], GE, st.terminal_target - st.terminal_tolerance,
                        f"{TERMINAL_SOC} @ {st.name} lower")
                acc.con([(last, 1.0)], LE, st.terminal_target + st.terminal_tolerance,
                        f"{TERMINAL_SOC} @ {st.name} upper")
            else:
                acc.con([(last, 1.0)], EQ, st.terminal_target, f"{TERMINAL_SOC} @ {st.name}")

    for t in range(T):
        terms = [(p_sys_idx[t], 1.0)] + [(p_el_idx[r.name, t], -1.0) for r in topology.resources]
        acc.con(terms, EQ, 0.0, f"{SYSTEM_POWER} @ t={t}")

    for r in topology.resources:
        if r.find_state(r.initial_state) is None:
            raise BuildError(f"resource {r.name!r} has no state {r.initial_state!r}")
        acc.con([(x_idx[r.name, r.initial_state, 0], 1.0)], EQ, 1.0, f"{INITIAL_STATE} @ {r.name}")
        _apply_elapsed_dwell(acc, x_idx, r, horizon, options.elapsed_dwell_minutes.get(r.name))

    _terminal_precheck(topology, horizon, inflow_vectors, density)

    objective = tuple(
        (p_sys_idx[t], dt_h * prices[t] / 1000.0)
        for t in range(T)
        if prices[t] != 0.0
    )
    return MilpInstance.create(acc.variables, acc.constraints, objective)


def _thin_source(topology: Topology, resource_name: str) -> str | None:
    for link in topology.links:
        if link.stream_kind == THIN_SLUDGE and link.sink == resource_name:
            return link.source
    return None


def _dry_sink(topology: Topology, resource_name: str) -> str | None:
    for link in topology.links:
        if link.stream_kind == DRY_SLUDGE and link.source == resource_name:
            return link.sink
    return None


def _apply_elapsed_dwell(
    acc: _Accumulator,
    x_idx: Mapping[tuple[str, str, int], int],
    r: ResourceSpec,
    horizon: Horizon,
    elapsed_minutes: float | None,
) -> None:
    if elapsed_minutes is None:
        return
    if elapsed_minutes < 0:
        raise BuildError(f"elapsed dwell for {r.name!r} must be >= 0")
    e = _steps(elapsed_minutes, horizon, f"elapsed dwell of {r.name}")
    s = r.find_state(r.initial_state)
    assert s is not None
    T = horizon.step_count
    n_min = _steps(s.hold_min_minutes, horizon, f"hold_min of {r.name}/{s.name}")
    if e < n_min:
        # remaining hold, clipped at the horizon edge like any other min-hold
        for tau in range(1, min(n_min - e, T)):
            acc.con([(x_idx[r.name, s.name, tau], 1.0)], EQ, 1.0, f"{INITIAL_DWELL} @ {r.name} t={tau}")
    if not math.isinf(s.hold_max_minutes):
        n_max = _steps(s.hold_max_minutes, horizon, f"hold_max of {r.name}/{s.name}")
        remaining = n_max - e
        if remaining < 1:
            raise BuildError(
                f"resource {r.name!r} has exhausted the maximum hold of {s.name!r} "
                f"({elapsed_minutes} min elapsed of {s.hold_max_minutes} min)"
            )
        if remaining < T:
            terms = [(x_idx[r.name, s.name, tau], 1.0) for tau in range(remaining + 1)]
            acc.con(terms, LE, float(remaining), f"{INITIAL_DWELL} @ {r.name} window")


def _terminal_precheck(
    topology: Topology,
    horizon: Horizon,
    inflows: Mapping[str, np.ndarray],
    density: np.ndarray,
) -> None:
    """Cheap necessary condition: is each terminal target inside the fill
    range reachable by flow capacity alone? Warns, never fails; the solver
    gives the authoritative infeasibility verdict."""
    dt_h = horizon.step_hours
    for st in topology.storages:
        if st.terminal_target is None:
            continue
        draw_cap = sum(
            r.coeff_e * r.op_max for r in topology.resources
            if _thin_source(topology, r.name) == st.name
        )
        feed_cap_per_t = [
            sum(r.coeff_e * r.op_max * density[t] for r in topology.resources
                if _dry_sink(topology, r.name) == st.name)
            for t in range(horizon.step_count)
        ]
        total_in = float(np.sum(inflows[st.name])) * dt_h + sum(feed_cap_per_t) * dt_h
        total_out = draw_cap * dt_h * horizon.step_count
        hi = min(st.soc_init + total_in, st.soc_max)
        lo = max(st.soc_init + float(np.sum(inflows[st.name])) * dt_h - total_out, st.soc_min)
        if st.terminal_target + st.terminal_tolerance < lo or st.terminal_target - st.terminal_tolerance > hi:
            logger.warning(
                "terminal target %s for storage %r is outside the reachable fill range [%g, %g]",
                st.terminal_target, st.name, lo, hi,
            )


def relax(instance: MilpInstance) -> MilpInstance:
    """LP relaxation: binaries become continuous on [0, 1]."""
    variables = tuple(
        VarRef(v.index, CONTINUOUS, v.lower, v.upper, v.tag) if v.kind == BINARY else v
        for v in instance.variables
    )
    return MilpInstance.create(
        variables, instance.constraints, instance.objective, instance.objective_constant
    )


def check_assignment(
    instance: MilpInstance, assignment: Sequence[float], tol: float = 1e-6
) -> list[CheckViolation]:
    """Verify an assignment against every row, bound and integrality
    requirement. Violations are data; an empty list means feasible at tol."""
    values = np.asarray(assignment, dtype=float)
    if values.shape != (len(instance.variables),):
        raise ValueError(
            f"assignment has {values.shape} values, instance has {len(instance.variables)} variables"
        )
    out: list[CheckViolation] = []
    for v in instance.variables:
        val = values[v.index]
        if val < v.lower - tol or val > v.upper + tol:
            amount = max(v.lower - val, val - v.upper)
            out.append(CheckViolation(
                "bound", f"{v.tag} = {val} outside [{v.lower}, {v.upper}]", None, amount,
            ))
        if v.kind == BINARY and abs(val - round(val)) > tol:
            out.append(CheckViolation(
                "integrality", f"{v.tag} = {val} is not integral", None, abs(val - round(val)),
            ))
    for con in instance.constraints:
        lhs = float(np.dot(values[[i for i, _ in con.terms]], [c for _, c in con.terms])) if con.terms else 0.0
        if con.sense == LE:
            excess = lhs - con.rhs
        elif con.sense == GE:
            excess = con.rhs - lhs
        else:
            excess = abs(lhs - con.rhs)
        if excess > tol:
            out.append(CheckViolation(
                "constraint",
                f"{con.provenance}: lhs {lhs} {con.sense} rhs {con.rhs} violated by {excess}",
                con.provenance,
                excess,
            ))
    return out


def _fmt(x: float) -> str:
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".12g")


def instance_to_json(instance: MilpInstance) -> str:
    """Canonical serialized form: stable order, 12-significant-digit decimals.

    Two builds from identical inputs serialize byte-identically; golden tests
    and the determinism checks rely on that.
    """
    parts: list[str] = ['{"sense":"min","variables":[']
    vparts = [
        '{"index":%d,"kind":"%s","lower":"%s","upper":"%s","tag":"%s"}'
        % (v.index, v.kind, _fmt(v.lower), _fmt(v.upper), v.tag)
        for v in instance.variables
    ]
    parts.append(",".join(vparts))
    parts.append('],"constraints":[')
    cparts = [
        '{"terms":[%s],"sense":"%s","rhs":"%s","provenance":"%s"}'
        % (
            ",".join('[%d,"%s"]' % (i, _fmt(c)) for i, c in con.terms),
            con.sense,
            _fmt(con.rhs),
            con.provenance,
        )
        for con in instance.constraints
    ]
    parts.append(",".join(cparts))
    parts.append('],"objective":{"terms":[')
    parts.append(",".join('[%d,"%s"]' % (i, _fmt(c)) for i, c in instance.objective))
    parts.append('],"constant":"%s"}}' % _fmt(instance.objective_constant))
    return "".join(parts)
