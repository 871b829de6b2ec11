"""Plant domain model.

Resources (decanter centrifuges) are finite-state machines with per-state
operating-point bounds and hold durations.  Storages hold thin sludge (m3)
or dry sludge (kg).  Price and forecast series are sampled step functions.
The algebraic maps from operating point to electrical power and throughput
live here as pure functions so tests, the assignment checker and the
evaluator can all use them without touching the optimizer.

Units throughout: power kW, energy kWh, price EUR/MWh, volume m3, mass kg,
density g/l (numerically equal to kg/m3), durations in minutes unless a
parameter is explicitly in hours.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from typing import Iterable, Sequence

import numpy as np

# Power-map terms attach to states by these conventional names: the base and
# density terms to RUN_STATE, the start transient to START_STATE.  States with
# any other name contribute only the op-proportional term.
RUN_STATE = "Run"
START_STATE = "Start"

THIN_SLUDGE = "thin-sludge"
DRY_SLUDGE = "dry-sludge"


class DomainError(ValueError):
    """An argument is outside the domain an operation is defined on."""


class CoverageError(ValueError):
    """A series does not cover the requested horizon."""


@dataclass(frozen=True)
class Horizon:
    """Equidistant timestep grid.

    Timestep t covers the wall-clock interval
    [start_time + t * step, start_time + (t + 1) * step).
    """

    start_time: datetime
    step_minutes: float
    step_count: int

    def __post_init__(self) -> None:
        if self.step_minutes <= 0:
            raise ValueError(f"step_minutes must be > 0, got {self.step_minutes}")
        if self.step_count < 1:
            raise ValueError(f"step_count must be >= 1, got {self.step_count}")

    @property
    def step(self) -> timedelta:
        return timedelta(minutes=self.step_minutes)

    @property
    def step_hours(self) -> float:
        return self.step_minutes / 60.0

    @property
    def end_time(self) -> datetime:
        return self.start_time + self.step_count * self.step

    def time_at(self, t: int) -> datetime:
        return self.start_time + t * self.step


@dataclass(frozen=True)
class StateSpec:
    """One mode of a resource's state machine.

    hold_max may be math.inf for states that can be held indefinitely.
    Semantic validation (bound ordering, divisibility by the step) happens in
    validate_topology so that invalid specs can be constructed and reported.
    """

    name: str
    op_min: float
    op_max: float
    hold_min_minutes: float
    hold_max_minutes: float
    successors: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "successors", tuple(self.successors))


@dataclass(frozen=True)
class ResourceSpec:
    """A decanter: power/throughput coefficients plus its state machine.

    coeff_a: base power while running (kW)
    coeff_b: power per unit operating point (kW)
    coeff_c: power per density unit while running (kW*l/g)
    coeff_d: start transient power (kW)
    coeff_e: thin-sludge throughput at op = 1 (m3/h)
    """

    name: str
    states: tuple[StateSpec, ...]
    initial_state: str
    coeff_a: float
    coeff_b: float
    coeff_c: float
    coeff_d: float
    coeff_e: float
    op_min: float = 0.0
    op_max: float = 1.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "states", tuple(self.states))

    def find_state(self, name: str) -> StateSpec | None:
        for s in self.states:
            if s.name == name:
                return s
        return None


@dataclass(frozen=True)
class StorageSpec:
    """A sludge buffer with hard fill bounds.

    terminal_target pins the final fill level to target +- tolerance;
    exogenous_inflow names a forecast series feeding the storage from outside
    the modeled plant (the sludge pocket's upstream inflow).
    """

    name: str
    soc_min: float
    soc_max: float
    soc_init: float
    terminal_target: float | None = None
    terminal_tolerance: float = 0.0
    exogenous_inflow: str | None = None


@dataclass(frozen=True)
class FlowLink:
    """Directed sludge stream between a storage and a resource.

    thin-sludge links draw from a storage into a resource intake
    (source = storage, sink = resource); dry-sludge links push a resource's
    product into a storage (source = resource, sink = storage).
    """

    stream_kind: str
    source: str
    sink: str


@dataclass(frozen=True)
class Topology:
    """The whole plant: resources, storages, streams, exclusion rules.

    mutual_exclusions lists (state name, resource names) pairs; at most one of
    the listed resources may occupy that state in any single timestep.
    """

    resources: tuple[ResourceSpec, ...]
    storages: tuple[StorageSpec, ...]
    links: tuple[FlowLink, ...] = ()
    mutual_exclusions: tuple[tuple[str, tuple[str, ...]], ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "resources", tuple(self.resources))
        object.__setattr__(self, "storages", tuple(self.storages))
        object.__setattr__(self, "links", tuple(self.links))
        object.__setattr__(
            self,
            "mutual_exclusions",
            tuple((state, tuple(names)) for state, names in self.mutual_exclusions),
        )

    def resource(self, name: str) -> ResourceSpec:
        for r in self.resources:
            if r.name == name:
                return r
        raise KeyError(name)

    def storage(self, name: str) -> StorageSpec:
        for s in self.storages:
            if s.name == name:
                return s
        raise KeyError(name)

    def thin_source_of(self, resource_name: str) -> str:
        """Storage feeding the resource's intake. Assumes a valid topology."""
        for link in self.links:
            if link.stream_kind == THIN_SLUDGE and link.sink == resource_name:
                return link.source
        raise KeyError(f"no thin-sludge source for {resource_name}")

    def dry_sink_of(self, resource_name: str) -> str:
        """Storage receiving the resource's product. Assumes a valid topology."""
        for link in self.links:
            if link.stream_kind == DRY_SLUDGE and link.source == resource_name:
                return link.sink
        raise KeyError(f"no dry-sludge sink for {resource_name}")


@dataclass(frozen=True)
class PriceSeries:
    """Electricity prices at their native market resolution (EUR/MWh)."""

    samples: tuple[tuple[datetime, float], ...]
    resolution: timedelta

    def __post_init__(self) -> None:
        object.__setattr__(self, "samples", tuple(self.samples))
        if not self.samples:
            raise ValueError("price series must contain at least one sample")
        if self.resolution <= timedelta(0):
            raise ValueError("price resolution must be positive")
        for (t0, _), (t1, _) in zip(self.samples, self.samples[1:]):
            if t1 - t0 != self.resolution:
                raise ValueError(
                    f"price samples must be equally spaced at {self.resolution}; "
                    f"gap {t1 - t0} after {t0.isoformat()}"
                )


@dataclass(frozen=True)
class ForecastSeries:
    """Forecast samples held piecewise-constant from each timestamp onward."""

    samples: tuple[tuple[datetime, float], ...]
    unit: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "samples", tuple(self.samples))
        if not self.samples:
            raise ValueError("forecast series must contain at least one sample")
        for (t0, _), (t1, _) in zip(self.samples, self.samples[1:]):
            if t1 <= t0:
                raise ValueError(f"forecast timestamps must increase; {t1} after {t0}")
        for ts, value in self.samples:
            if value < 0:
                raise ValueError(f"forecast value at {ts.isoformat()} is negative")

    @classmethod
    def constant(cls, start: datetime, value: float, unit: str) -> "ForecastSeries":
        return cls(samples=((start, value),), unit=unit)


@dataclass(frozen=True)
class Violation:
    """One broken topology invariant. code is stable and machine-readable."""

    code: str
    message: str

    def __str__(self) -> str:
        return f"{self.code}: {self.message}"


def _check_state(r: ResourceSpec, s: StateSpec, horizon: Horizon, out: list[Violation]) -> None:
    where = f"resource {r.name!r} state {s.name!r}"
    if not (0 <= s.op_min <= s.op_max):
        out.append(Violation("state-op-bounds", f"{where}: need 0 <= op_min <= op_max, got [{s.op_min}, {s.op_max}]"))
    elif not (r.op_min <= s.op_min and s.op_max <= r.op_max):
        out.append(Violation(
            "state-op-outside-global",
            f"{where}: [{s.op_min}, {s.op_max}] outside global [{r.op_min}, {r.op_max}]",
        ))
    if s.hold_min_minutes > s.hold_max_minutes:
        out.append(Violation("hold-order", f"{where}: hold_min {s.hold_min_minutes} > hold_max {s.hold_max_minutes}"))
    if s.hold_min_minutes < horizon.step_minutes:
        out.append(Violation(
            "hold-below-step",
            f"{where}: hold_min {s.hold_min_minutes} min shorter than the step {horizon.step_minutes} min",
        ))
    for label, dur in (("hold_min", s.hold_min_minutes), ("hold_max", s.hold_max_minutes)):
        if math.isinf(dur):
            continue
        ratio = dur / horizon.step_minutes
        if abs(ratio - round(ratio)) > 1e-9:
            out.append(Violation(
                "hold-not-step-multiple",
                f"{where}: {label} {dur} min is not a multiple of the step {horizon.step_minutes} min",
            ))


def validate_topology(topology: Topology, horizon: Horizon) -> list[Violation]:
    """Collect every invariant violation in the plant description.

    Violations are data, not exceptions: an empty list means the topology is
    safe to build against. Messages name the offending element.
    """
    out: list[Violation] = []

    seen: set[str] = set()
    for r in topology.resources:
        if r.name in seen:
            out.append(Violation("duplicate-resource-name", f"resource name {r.name!r} appears more than once"))
        seen.add(r.name)
    seen = set()
    for st in topology.storages:
        if st.name in seen:
            out.append(Violation("duplicate-storage-name", f"storage name {st.name!r} appears more than once"))
        seen.add(st.name)

    resource_names = {r.name for r in topology.resources}
    storage_names = {st.name for st in topology.storages}

    for r in topology.resources:
        state_names = {s.name for s in r.states}
        if len(state_names) < len(r.states):
            out.append(Violation("duplicate-state-name", f"resource {r.name!r} has duplicate state names"))
        if r.initial_state not in state_names:
            out.append(Violation(
                "unknown-initial-state",
                f"resource {r.name!r}: initial state {r.initial_state!r} is not one of {sorted(state_names)}",
            ))
        if r.op_min > r.op_max:
            out.append(Violation("resource-op-bounds", f"resource {r.name!r}: op_min {r.op_min} > op_max {r.op_max}"))
        for s in r.states:
            for succ in s.successors:
                if succ not in state_names:
                    out.append(Violation(
                        "unknown-successor",
                        f"resource {r.name!r} state {s.name!r}: successor {succ!r} is not a state",
                    ))
            _check_state(r, s, horizon, out)

    for st in topology.storages:
        if not (st.soc_min <= st.soc_init <= st.soc_max):
            out.append(Violation(
                "soc-init-out-of-bounds",
                f"storage {st.name!r}: soc_init {st.soc_init} outside [{st.soc_min}, {st.soc_max}]",
            ))
        if st.terminal_target is not None and not (st.soc_min <= st.terminal_target <= st.soc_max):
            out.append(Violation(
                "terminal-out-of-bounds",
                f"storage {st.name!r}: terminal target {st.terminal_target} outside [{st.soc_min}, {st.soc_max}]",
            ))

    for link in topology.links:
        if link.stream_kind == THIN_SLUDGE:
            ok = link.source in storage_names and link.sink in resource_names
        elif link.stream_kind == DRY_SLUDGE:
            ok = link.source in resource_names and link.sink in storage_names
        else:
            out.append(Violation("unknown-stream-kind", f"link {link.source!r} -> {link.sink!r}: kind {link.stream_kind!r}"))
            continue
        if not ok:
            out.append(Violation(
                "link-endpoint-unresolved",
                f"{link.stream_kind} link {link.source!r} -> {link.sink!r} does not connect a storage and a resource",
            ))

    for r in topology.resources:
        thin = [l for l in topology.links if l.stream_kind == THIN_SLUDGE and l.sink == r.name]
        dry = [l for l in topology.links if l.stream_kind == DRY_SLUDGE and l.source == r.name]
        if len(thin) != 1:
            out.append(Violation(
                "thin-source-count",
                f"resource {r.name!r} needs exactly one thin-sludge source, has {len(thin)}",
            ))
        if len(dry) != 1:
            out.append(Violation(
                "dry-sink-count",
                f"resource {r.name!r} needs exactly one dry-sludge sink, has {len(dry)}",
            ))

    for state_name, names in topology.mutual_exclusions:
        for name in names:
            if name not in resource_names:
                out.append(Violation(
                    "exclusion-unknown-resource",
                    f"mutual exclusion on {state_name!r} lists unknown resource {name!r}",
                ))
            elif topology.resource(name).find_state(state_name) is None:
                out.append(Violation(
                    "exclusion-unknown-state",
                    f"resource {name!r} has no state {state_name!r} named in a mutual exclusion",
                ))

    # Reachability: exogenous inflow -> storage -> resource -> sink storage.
    fed = {st.name for st in topology.storages if st.exogenous_inflow is not None}
    reachable = set(fed)
    frontier = list(fed)
    while frontier:
        node = frontier.pop()
        for link in topology.links:
            if link.source == node and link.sink not in reachable:
                reachable.add(link.sink)
                frontier.append(link.sink)
    sink_storages = {l.sink for l in topology.links if l.stream_kind == DRY_SLUDGE and l.sink in storage_names}
    for name in sorted(sink_storages - reachable):
        out.append(Violation(
            "disconnected-storage",
            f"sink storage {name!r} is not reachable from any exogenous inflow",
        ))

    return out


def resample(series: PriceSeries | ForecastSeries, horizon: Horizon) -> np.ndarray:
    """Expand a sampled series to one value per timestep.

    Each timestep takes the value of the native interval containing its start
    instant. Price intervals are closed-open at the declared resolution;
    forecasts hold their last value indefinitely.
    """
    values = np.empty(horizon.step_count, dtype=float)
    if isinstance(series, PriceSeries):
        t0 = series.samples[0][0]
        n = len(series.samples)
        for t in range(horizon.step_count):
            instant = horizon.time_at(t)
            if instant < t0:
                raise CoverageError(f"uncovered timestep t = {t} ({instant.isoformat()} before first sample)")
            idx = (instant - t0) // series.resolution
            if idx >= n:
                raise CoverageError(f"uncovered timestep t = {t} ({instant.isoformat()} after last interval)")
            values[t] = series.samples[idx][1]
        return values

    stamps = [ts for ts, _ in series.samples]
    for t in range(horizon.step_count):
        instant = horizon.time_at(t)
        idx = bisect_right(stamps, instant) - 1
        if idx < 0:
            raise CoverageError(f"uncovered timestep t = {t} ({instant.isoformat()} before first sample)")
        values[t] = series.samples[idx][1]
    return values


def power_at(resource: ResourceSpec, state: str, op: float, density: float) -> float:
    """Electrical power draw (kW) of a resource in a given state.

    Affine in op and density: base and density terms apply while running,
    the start transient while starting, the op term always (state OP bounds
    clamp it to zero outside Run).
    """
    spec = resource.find_state(state)
    if spec is None:
        raise DomainError(f"resource {resource.name!r} has no state {state!r}")
    if not (spec.op_min - 1e-12 <= op <= spec.op_max + 1e-12):
        raise DomainError(
            f"op {op} outside [{spec.op_min}, {spec.op_max}] for state {state!r} of {resource.name!r}"
        )
    power = resource.coeff_b * op
    if state == RUN_STATE:
        power += resource.coeff_a + resource.coeff_c * density
    if state == START_STATE:
        power += resource.coeff_d
    return power


def thin_sludge_rate(resource: ResourceSpec, op: float) -> float:
    """Thin-sludge draw (m3/h) at a given operating point."""
    if not (0.0 <= op <= resource.op_max + 1e-12):
        raise DomainError(f"op {op} outside [0, {resource.op_max}] for {resource.name!r}")
    return resource.coeff_e * op


def dry_sludge_rate(thin_rate: float, density: float) -> float:
    """Dry-sludge production (kg/h): thin rate times density (g/l == kg/m3)."""
    if thin_rate < 0:
        raise DomainError(f"thin rate must be >= 0, got {thin_rate}")
    if density < 0:
        raise DomainError(f"density must be >= 0, got {density}")
    return thin_rate * density


def storage_step(soc_prev: float, inflow: float, outflow: float, dt_hours: float) -> float:
    """One balance step: fill level after dt_hours of net flow, lossless."""
    return soc_prev + (inflow - outflow) * dt_hours
