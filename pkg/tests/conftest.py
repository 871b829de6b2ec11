"""Shared plant fixtures.

Two plants recur across the suite: the full two-decanter plant with the
published coefficient set, and a deliberately small single-unit plant whose
optimum can be recomputed by exhaustive enumeration.
"""

from __future__ import annotations

import math
from datetime import datetime, timedelta, timezone

import pytest

from flexsched.model import (
    FlowLink,
    ForecastSeries,
    Horizon,
    PriceSeries,
    ResourceSpec,
    StateSpec,
    StorageSpec,
    Topology,
)

TZ = timezone(timedelta(hours=2))
TRIAL_START = datetime(2024, 5, 14, 11, 30, tzinfo=TZ)


def decanter(name: str) -> ResourceSpec:
    """One decanter with the published coefficient set, 3 min step grid."""
    return ResourceSpec(
        name=name,
        states=(
            StateSpec("Off", 0.0, 0.0, hold_min_minutes=60.0, hold_max_minutes=math.inf, successors=("Start",)),
            StateSpec("Start", 0.0, 0.0, hold_min_minutes=6.0, hold_max_minutes=6.0, successors=("Run",)),
            StateSpec("Run", 0.0, 1.0, hold_min_minutes=60.0, hold_max_minutes=math.inf, successors=("Off",)),
        ),
        initial_state="Off",
        coeff_a=22.356,
        coeff_b=8.464,
        coeff_c=0.0182,
        coeff_d=21.366,
        coeff_e=12.0,
        op_min=0.0,
        op_max=1.0,
    )


def two_decanter_topology() -> Topology:
    return Topology(
        resources=(decanter("decanter_1"), decanter("decanter_2")),
        storages=(
            StorageSpec("sludge_pocket", 0.0, 600.0, 350.0, terminal_target=350.0,
                        terminal_tolerance=0.0, exogenous_inflow="thin_sludge_inflow"),
            StorageSpec("containers_1", 0.0, 12000.0, 0.0),
            StorageSpec("containers_2", 0.0, 12000.0, 0.0),
        ),
        links=(
            FlowLink("thin-sludge", "sludge_pocket", "decanter_1"),
            FlowLink("thin-sludge", "sludge_pocket", "decanter_2"),
            FlowLink("dry-sludge", "decanter_1", "containers_1"),
            FlowLink("dry-sludge", "decanter_2", "containers_2"),
        ),
        mutual_exclusions=(("Start", ("decanter_1", "decanter_2")),),
    )


def tiny_unit() -> ResourceSpec:
    """Single small unit on a 60 min grid: Off >= 2 steps, Start exactly 1, Run >= 2."""
    return ResourceSpec(
        name="unit",
        states=(
            StateSpec("Off", 0.0, 0.0, hold_min_minutes=120.0, hold_max_minutes=math.inf, successors=("Start",)),
            StateSpec("Start", 0.0, 0.0, hold_min_minutes=60.0, hold_max_minutes=60.0, successors=("Run",)),
            StateSpec("Run", 0.0, 1.0, hold_min_minutes=120.0, hold_max_minutes=math.inf, successors=("Off",)),
        ),
        initial_state="Off",
        coeff_a=3.0,
        coeff_b=2.0,
        coeff_c=0.01,
        coeff_d=5.0,
        coeff_e=2.0,
    )


def tiny_topology() -> Topology:
    return Topology(
        resources=(tiny_unit(),),
        storages=(
            StorageSpec("tank", 0.0, 40.0, 20.0, terminal_target=20.0,
                        terminal_tolerance=0.0, exogenous_inflow="tank_inflow"),
            StorageSpec("bin", 0.0, 1e6, 0.0),
        ),
        links=(
            FlowLink("thin-sludge", "tank", "unit"),
            FlowLink("dry-sludge", "unit", "bin"),
        ),
    )


TINY_PRICES = (5.0, 5.0, 5.0, 5.0, 1.0, 1.0, 1.0, 1.0, 5.0, 5.0)


def tiny_horizon() -> Horizon:
    return Horizon(TRIAL_START, step_minutes=60.0, step_count=10)


def tiny_price_series() -> PriceSeries:
    res = timedelta(hours=1)
    return PriceSeries(
        samples=tuple((TRIAL_START + i * res, p) for i, p in enumerate(TINY_PRICES)),
        resolution=res,
    )


@pytest.fixture
def plant() -> Topology:
    return two_decanter_topology()


@pytest.fixture
def horizon_3min() -> Horizon:
    return Horizon(TRIAL_START, step_minutes=3.0, step_count=80)


def constant_forecast(value: float, unit: str) -> ForecastSeries:
    return ForecastSeries.constant(TRIAL_START, value, unit)
