import math

import pytest
from hypothesis import given, strategies as st

from easysched.energy import (
    DensityError, EnergyAlarm, FilterState, NoPerturbation, PvSource, RescheduleOrder, SensorSample,
    WindSourceConfig, air_density, alarm_from_ratio, detect, filter_alarm, load_sensor_trace,
    pv_source_poll, replay_sensor_trace, sample_at, wind_power,
)

BASE = SensorSample(0, 19.0, 36.0)
CFG = WindSourceConfig(rotor_area_m2=10.0, wind_speed_ms=8.0, baseline=BASE)
ALARM = EnergyAlarm(True, 0.74, 26.0)
CALM = EnergyAlarm(False, 1.0, 0.0)


def test_air_density_frozen_values():
    # hand evaluation: exp(17.5043*19/260.2) = 3.58985, vapour term 29804 Pa,
    # (101325 - 29804) / (287.06 * 292.15) = 0.85280
    assert air_density(19, 36) == pytest.approx(0.852795, abs=1e-6)
    assert air_density(28, 33) == pytest.approx(0.628402, abs=1e-6)
    # fractional humidity reading of the same formula
    assert air_density(19, 36, humidity_as_fraction=True) == pytest.approx(1.204644, abs=1e-6)


def test_dry_air_matches_ideal_gas():
    assert air_density(0, 0) == pytest.approx(101325 / (287.06 * 273.15))


def test_density_error_when_vapour_term_dominates():
    with pytest.raises(DensityError, match="humidity term exceeds pressure"):
        air_density(60, 100)


def test_wind_power_formula():
    rho = air_density(19, 36)
    assert wind_power(rho, CFG) == pytest.approx(0.5 * rho * 10 * 8 ** 3)


def test_detect_reports_density_drop():
    a = detect(SensorSample(22, 28, 33), CFG)
    assert a.alarmed
    assert a.ratio == pytest.approx(0.736873, abs=1e-6)
    assert a.taux_energy_pct == pytest.approx(26.3127, abs=1e-4)
    assert not detect(BASE, CFG).alarmed
    # a denser sample is not an alarm
    assert not detect(SensorSample(1, 10, 36), CFG).alarmed


def test_alarm_from_ratio_deadband():
    assert alarm_from_ratio(0.99, deadband=0.02) == EnergyAlarm(False, 0.99, 0.0)
    assert alarm_from_ratio(0.97, deadband=0.02).alarmed


def test_config_validation():
    with pytest.raises(ValueError):
        WindSourceConfig(0, 8, BASE)
    with pytest.raises(ValueError):
        WindSourceConfig(1, 8, BASE, deadband=1.0)
    with pytest.raises(ValueError):
        SensorSample(0, 20, 101)
    with pytest.raises(ValueError):
        SensorSample(0, 70, 50)


def test_pv_source():
    a = pv_source_poll()
    assert a.alarmed and a.taux_energy_pct == 10.0
    assert pv_source_poll(PvSource(25)).taux_energy_pct == 25
    assert not pv_source_poll(PvSource(0)).alarmed


def test_filter_single_alarm_sets_resched_time_and_triples():
    s0 = FilterState.initial(6)
    s1, order = filter_alarm(s0, ALARM, now_s=24, source="aoe1")
    assert order == RescheduleOrder(30, 26.0, "aoe1")
    assert s1.p2_s == 18
    s2, act = filter_alarm(s1, CALM, now_s=42)
    assert isinstance(act, NoPerturbation)
    assert s2.p2_s == 6


@given(st.integers(1, 12), st.floats(0.5, 20), st.sampled_from([3.0, 27.0, 100.0]))
def test_filter_k_alarms_give_power_of_three(k, p2, cap):
    s = FilterState.initial(p2, cap)
    orders = 0
    for _ in range(k):
        s, act = filter_alarm(s, ALARM)
        orders += isinstance(act, RescheduleOrder)
    assert orders == k
    assert s.p2_s == pytest.approx(min(3 ** k, cap) * p2)


@given(st.lists(st.booleans(), min_size=1, max_size=15))
def test_filter_resets_on_calm_window(pattern):
    p2 = 6.0
    s = FilterState.initial(p2)
    run = 0
    last_t = 0.0
    for alarmed in pattern:
        s, act = filter_alarm(s, ALARM if alarmed else CALM)
        run = run + 1 if alarmed else 0
        assert s.p2_s == pytest.approx(min(3 ** run, 100) * p2)
        assert isinstance(act, RescheduleOrder) == alarmed
        assert s.time_resch_s >= last_t
        last_t = s.time_resch_s


def test_order_validation():
    with pytest.raises(ValueError):
        RescheduleOrder(-1, 10)
    with pytest.raises(ValueError):
        RescheduleOrder(1, 0)
    with pytest.raises(ValueError):
        RescheduleOrder(1, 101)


TRACE_TEXT = "t_s,temperature_c,humidity_pct\n0,19,36\n22,28,33\n40,19,36\n"


def test_trace_replay_zero_order_hold():
    trace = load_sensor_trace(TRACE_TEXT)
    assert sample_at(trace, 21.9).temperature_c == 19
    assert sample_at(trace, 22).temperature_c == 28
    assert sample_at(trace, 1000).temperature_c == 19
    samples = list(replay_sensor_trace(trace, 3, until_s=45))
    assert [s.t_s for s in samples] == [3.0 * k for k in range(16)]
    hot = [s.t_s for s in samples if s.temperature_c == 28]
    assert hot == [24, 27, 30, 33, 36, 39]


def test_trace_validation():
    with pytest.raises(ValueError, match="decrease"):
        load_sensor_trace("t_s,temperature_c,humidity_pct\n5,19,36\n1,19,36\n")
    with pytest.raises(ValueError, match="empty"):
        load_sensor_trace("t_s,temperature_c,humidity_pct\n")
    with pytest.raises(ValueError):
        list(replay_sensor_trace(load_sensor_trace(TRACE_TEXT), 0))


@given(st.floats(-10, 40), st.floats(0, 100), st.floats(-10, 40), st.floats(0, 100))
def test_taux_consistent_with_power_ratio(t0, h0, t1, h1):
    cfg = WindSourceConfig(5.0, 7.0, SensorSample(0, t0, h0), humidity_as_fraction=True)
    a = detect(SensorSample(1, t1, h1), cfg)
    p0 = wind_power(air_density(t0, h0, humidity_as_fraction=True), cfg)
    p1 = wind_power(air_density(t1, h1, humidity_as_fraction=True), cfg)
    assert math.isclose(a.ratio, p1 / p0, rel_tol=1e-12)
    if a.alarmed:
        assert math.isclose(a.taux_energy_pct, 100 * (1 - p1 / p0), rel_tol=1e-9)
