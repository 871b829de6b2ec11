"""Domain model: algebraic maps, series resampling, topology validation.

Expected numbers are hand-computed from the coefficient table before being
frozen here; nothing below was copied from solver output.
"""

from __future__ import annotations

import math
from datetime import timedelta

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flexsched.model import (
    CoverageError,
    DomainError,
    ForecastSeries,
    Horizon,
    PriceSeries,
    StateSpec,
    dry_sludge_rate,
    power_at,
    resample,
    storage_step,
    thin_sludge_rate,
    validate_topology,
)

from conftest import TRIAL_START, decanter, tiny_topology, two_decanter_topology


class TestPowerMap:
    def test_run_full_load_at_design_density(self):
        # 22.356 + 8.464*1 + 0.0182*30 = 31.366
        assert power_at(decanter("d"), "Run", 1.0, 30.0) == pytest.approx(31.366, abs=1e-9)

    def test_off_draws_nothing(self):
        assert power_at(decanter("d"), "Off", 0.0, 17.5) == 0.0

    def test_start_is_the_transient_term_only(self):
        assert power_at(decanter("d"), "Start", 0.0, 30.0) == pytest.approx(21.366, abs=1e-9)

    def test_run_partial_load(self):
        # 22.356 + 8.464*0.5 + 0.0182*20 = 26.952
        assert power_at(decanter("d"), "Run", 0.5, 20.0) == pytest.approx(26.952, abs=1e-9)

    def test_op_outside_state_bounds_rejected(self):
        with pytest.raises(DomainError):
            power_at(decanter("d"), "Off", 0.5, 30.0)
        with pytest.raises(DomainError):
            power_at(decanter("d"), "Run", 1.5, 30.0)

    def test_unknown_state_rejected(self):
        with pytest.raises(DomainError):
            power_at(decanter("d"), "Idle", 0.0, 30.0)

    @given(op=st.floats(0, 1), density=st.floats(0, 100))
    @settings(max_examples=50, deadline=None)
    def test_affine_in_op_and_density(self, op, density):
        r = decanter("d")
        base = power_at(r, "Run", 0.0, 0.0)
        lifted = power_at(r, "Run", op, density)
        doubled = power_at(r, "Run", op, 2 * density)
        assert lifted - base == pytest.approx(r.coeff_b * op + r.coeff_c * density, abs=1e-9)
        # density enters linearly, never superlinearly
        assert doubled - base == pytest.approx(2 * (power_at(r, "Run", 0.0, density) - base) + r.coeff_b * op, abs=1e-9)


class TestThroughput:
    def test_design_point(self):
        assert thin_sludge_rate(decanter("d"), 1.0) == 12.0

    def test_zero(self):
        assert thin_sludge_rate(decanter("d"), 0.0) == 0.0

    def test_half_load(self):
        assert thin_sludge_rate(decanter("d"), 0.5) == 6.0

    def test_dry_rate_product(self):
        assert dry_sludge_rate(12.0, 30.0) == 360.0
        assert dry_sludge_rate(0.0, 30.0) == 0.0
        assert dry_sludge_rate(6.0, 20.0) == 120.0

    def test_negative_inputs_rejected(self):
        with pytest.raises(DomainError):
            dry_sludge_rate(-1.0, 30.0)
        with pytest.raises(DomainError):
            dry_sludge_rate(1.0, -0.5)
        with pytest.raises(DomainError):
            thin_sludge_rate(decanter("d"), -0.1)

    @given(op=st.floats(0, 1), density=st.floats(0, 60))
    @settings(max_examples=50, deadline=None)
    def test_rate_maps_compose_exactly(self, op, density):
        r = decanter("d")
        assert dry_sludge_rate(thin_sludge_rate(r, op), density) == r.coeff_e * op * density


class TestStorageStep:
    def test_inflow_only(self):
        assert storage_step(350.0, 10.0, 0.0, 0.05) == pytest.approx(350.5, abs=1e-12)

    def test_both_decanters_drawing(self):
        assert storage_step(350.0, 10.0, 24.0, 0.05) == pytest.approx(349.3, abs=1e-12)

    def test_balanced_flows_are_a_fixed_point(self):
        assert storage_step(123.4, 7.0, 7.0, 0.05) == 123.4

    @given(
        soc0=st.floats(0, 1000),
        flows=st.lists(st.tuples(st.floats(0, 50), st.floats(0, 50)), min_size=1, max_size=200),
        dt=st.floats(0.01, 1.0),
    )
    @settings(max_examples=50, deadline=None)
    def test_telescopes(self, soc0, flows, dt):
        soc = soc0
        for inflow, outflow in flows:
            soc = storage_step(soc, inflow, outflow, dt)
        closed_form = soc0 + sum((i - o) * dt for i, o in flows)
        assert soc == pytest.approx(closed_form, abs=1e-9 * max(1, len(flows)))


class TestResample:
    def test_quarter_hour_to_three_minutes(self):
        series = PriceSeries(
            samples=((TRIAL_START, 40.0), (TRIAL_START + timedelta(minutes=15), 80.0)),
            resolution=timedelta(minutes=15),
        )
        values = resample(series, Horizon(TRIAL_START, 3.0, 10))
        assert values.tolist() == [40.0] * 5 + [80.0] * 5

    def test_constant_density_forecast(self):
        series = ForecastSeries.constant(TRIAL_START, 30.0, "g/l")
        values = resample(series, Horizon(TRIAL_START, 3.0, 40))
        assert np.all(values == 30.0)

    def test_gap_names_first_uncovered_step(self):
        series = PriceSeries(samples=((TRIAL_START, 40.0),), resolution=timedelta(minutes=15))
        with pytest.raises(CoverageError, match=r"uncovered timestep t = 5"):
            resample(series, Horizon(TRIAL_START, 3.0, 10))

    def test_forecast_starting_late_is_a_gap(self):
        series = ForecastSeries.constant(TRIAL_START + timedelta(minutes=9), 10.0, "m3/h")
        with pytest.raises(CoverageError, match=r"uncovered timestep t = 0"):
            resample(series, Horizon(TRIAL_START, 3.0, 10))

    def test_forecast_steps_change_at_sample_instants(self):
        series = ForecastSeries(
            samples=((TRIAL_START, 10.0), (TRIAL_START + timedelta(minutes=6), 14.0)),
            unit="m3/h",
        )
        values = resample(series, Horizon(TRIAL_START, 3.0, 4))
        assert values.tolist() == [10.0, 10.0, 14.0, 14.0]

    @given(values=st.lists(st.floats(-500, 500), min_size=1, max_size=30))
    @settings(max_examples=50, deadline=None)
    def test_idempotent_at_native_resolution(self, values):
        step = timedelta(minutes=3)
        series = PriceSeries(
            samples=tuple((TRIAL_START + i * step, v) for i, v in enumerate(values)),
            resolution=step,
        )
        out = resample(series, Horizon(TRIAL_START, 3.0, len(values)))
        assert out.tolist() == values
        again = PriceSeries(
            samples=tuple((TRIAL_START + i * step, v) for i, v in enumerate(out.tolist())),
            resolution=step,
        )
        assert resample(again, Horizon(TRIAL_START, 3.0, len(values))).tolist() == out.tolist()


class TestValidateTopology:
    def test_reference_plant_is_clean(self):
        assert validate_topology(two_decanter_topology(), Horizon(TRIAL_START, 3.0, 80)) == []

    def test_tiny_plant_is_clean(self):
        assert validate_topology(tiny_topology(), Horizon(TRIAL_START, 60.0, 10)) == []

    def test_unknown_initial_state(self):
        r = decanter("d")
        bad = r.__class__(**{**r.__dict__, "initial_state": "Idle"})
        topo = two_decanter_topology()
        topo = topo.__class__(
            resources=(bad,) + topo.resources[1:],
            storages=topo.storages,
            links=tuple(
                l.__class__(l.stream_kind, l.source, "d" if l.sink == "decanter_1" else l.sink)
                if l.stream_kind == "thin-sludge" else
                l.__class__(l.stream_kind, "d" if l.source == "decanter_1" else l.source, l.sink)
                for l in topo.links
            ),
            mutual_exclusions=(("Start", ("d", "decanter_2")),),
        )
        violations = validate_topology(topo, Horizon(TRIAL_START, 3.0, 80))
        assert [v.code for v in violations] == ["unknown-initial-state"]
        assert "Idle" in violations[0].message

    def test_hold_not_multiple_of_step(self):
        r = decanter("d")
        states = tuple(
            StateSpec(s.name, s.op_min, s.op_max, 7.0 if s.name == "Start" else s.hold_min_minutes,
                      7.0 if s.name == "Start" else s.hold_max_minutes, s.successors)
            for s in r.states
        )
        bad = r.__class__(**{**r.__dict__, "states": states})
        topo = tiny_topology()
        topo = topo.__class__(
            resources=(bad,),
            storages=topo.storages,
            links=(
                topo.links[0].__class__("thin-sludge", "tank", "d"),
                topo.links[1].__class__("dry-sludge", "d", "bin"),
            ),
        )
        codes = [v.code for v in validate_topology(topo, Horizon(TRIAL_START, 3.0, 80))]
        assert codes.count("hold-not-step-multiple") == 2  # both hold_min and hold_max are 7

    def test_soc_init_out_of_bounds(self):
        topo = tiny_topology()
        bad_storage = topo.storages[0].__class__(
            name="tank", soc_min=0.0, soc_max=40.0, soc_init=45.0,
            terminal_target=20.0, terminal_tolerance=0.0, exogenous_inflow="tank_inflow",
        )
        topo = topo.__class__(resources=topo.resources, storages=(bad_storage, topo.storages[1]), links=topo.links)
        codes = [v.code for v in validate_topology(topo, Horizon(TRIAL_START, 60.0, 10))]
        assert codes == ["soc-init-out-of-bounds"]

    def test_missing_dry_sink_and_disconnection(self):
        topo = tiny_topology()
        topo = topo.__class__(resources=topo.resources, storages=topo.storages, links=topo.links[:1])
        codes = {v.code for v in validate_topology(topo, Horizon(TRIAL_START, 60.0, 10))}
        assert "dry-sink-count" in codes

    def test_duplicate_resource_names(self):
        topo = tiny_topology()
        topo = topo.__class__(
            resources=(topo.resources[0], topo.resources[0]),
            storages=topo.storages,
            links=topo.links + (
                topo.links[0].__class__("thin-sludge", "tank", "unit"),
                topo.links[1].__class__("dry-sludge", "unit", "bin"),
            ),
        )
        codes = [v.code for v in validate_topology(topo, Horizon(TRIAL_START, 60.0, 10))]
        assert "duplicate-resource-name" in codes


class TestHorizon:
    def test_rejects_bad_grid(self):
        with pytest.raises(ValueError):
            Horizon(TRIAL_START, 0.0, 10)
        with pytest.raises(ValueError):
            Horizon(TRIAL_START, 3.0, 0)

    def test_step_conversions(self):
        h = Horizon(TRIAL_START, 3.0, 520)
        assert h.step_hours == pytest.approx(0.05)
        assert h.end_time - h.start_time == timedelta(hours=26)
        assert h.time_at(20) == TRIAL_START + timedelta(minutes=60)
