import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hettwin.errors import DomainError, StateError
from hettwin.hetnet_sim import (BaseStation, ChannelModel, DemandProfile, Policy, Scenario, UserEquipment,
                                check_constraints, data_rate, demand_series, generate_trace, path_loss,
                                qos_satisfaction, read_trace_bundle, sinr, two_way_exchange, write_trace_bundle,
                                ClockTruth)
from support import single_cell_config, sinr_by_hand, snapshot_from, tiny_config


# ------------------------------------------------------------------ closed-form pieces

def test_path_loss_macro_at_100m():
    assert path_loss("macro", 100.0) == pytest.approx(15.3 + 37.6 * 2, rel=1e-12)
    assert path_loss("macro", 100.0) == pytest.approx(90.5)


def test_path_loss_small_at_1m():
    assert path_loss("small", 1.0) == pytest.approx(9.16, rel=1e-12)


def test_path_loss_macro_at_1m_is_constant_term():
    assert path_loss("macro", 1.0) == 15.3


@pytest.mark.parametrize("d", [0.0, -3.0, float("nan")])
def test_path_loss_rejects_non_positive_distance(d):
    with pytest.raises(DomainError):
        path_loss("macro", d)


def test_path_loss_rejects_unknown_tier():
    with pytest.raises(DomainError):
        path_loss("femto", 10.0)


@pytest.mark.parametrize("s, bw, expected", [(0.0, 20e6, 0.0), (1.0, 20e6, 2.0e7), (3.0, 10e6, 2.0e7)])
def test_data_rate_examples(s, bw, expected):
    assert data_rate(s, bw) == pytest.approx(expected, abs=1e-6)


def test_data_rate_rejects_negative_sinr():
    with pytest.raises(DomainError):
        data_rate(-0.1, 1e6)


def test_satisfaction_examples():
    assert qos_satisfaction(7.0, 7.0) == 1.0
    assert qos_satisfaction(5e6, 10e6) == 0.5
    # delay is smaller-is-better: 20 ms against a 10 ms bound
    assert qos_satisfaction(0.020, 0.010, "delay") == pytest.approx(0.5)


def test_satisfaction_zero_requirement():
    with pytest.raises(DomainError):
        qos_satisfaction(1.0, 0.0)


def test_satisfaction_zero_delay_is_infinitely_satisfied():
    assert qos_satisfaction(0.0, 0.01, "delay") == math.inf


# ------------------------------------------------------------------ SINR

def test_sinr_equal_signal_and_noise():
    snap = snapshot_from([[2.0]], [[0.5]], 1.0, [0])
    assert sinr(0, 0, snap) == 1.0


def test_sinr_interference_limited_symmetry():
    snap = snapshot_from([[1.0, 1.0]], [[10.0, 10.0]], 1e-12, [0])
    assert sinr(0, 0, snap) == pytest.approx(1.0, rel=1e-9)


def test_sinr_two_by_two_against_hand_computation():
    gain = [[3e-9, 4e-10], [2e-10, 5e-9]]
    power = [[2.0, 0.7], [1.1, 4.0]]
    noise = 1e-10
    snap = snapshot_from(gain, power, noise, [0, 1])
    for u, b in ((0, 0), (1, 1)):
        assert sinr(u, b, snap) == pytest.approx(sinr_by_hand(gain, power, noise, u, b), rel=1e-12)
    # user 0: 6e-9 / (2.8e-10 + 1e-10)
    assert sinr(0, 0, snap) == pytest.approx(6e-9 / 3.8e-10, rel=1e-12)


def test_sinr_needs_association():
    snap = snapshot_from([[1.0, 1.0]], [[1.0, 1.0]], 1.0, [0])
    with pytest.raises(StateError):
        sinr(0, 1, snap)


# ------------------------------------------------------------------ domain types

def test_station_defaults_by_tier():
    macro = BaseStation.default(0, "macro", (0, 0))
    small = BaseStation.default(1, "small", (1, 1))
    assert (macro.max_power_dbm, macro.coverage_radius) == (40.0, 300.0)
    assert (small.max_power_dbm, small.coverage_radius) == (17.0, 50.0)
    assert BaseStation.default(2, "small", (0, 0), coverage_radius=80.0).coverage_radius == 80.0


def test_station_needs_positive_capacity():
    with pytest.raises(DomainError):
        BaseStation(0, "macro", (0.0, 0.0), 40.0, 300.0, 0.0)


def test_user_weights_must_sum_to_one():
    req = {"throughput": 1.0, "delay": 0.01, "loss": 0.01}
    with pytest.raises(DomainError):
        UserEquipment(0, (0, 0), 1.0, req, {"throughput": 0.5, "delay": 0.2, "loss": 0.2}, DemandProfile(1.0))
    with pytest.raises(DomainError):
        UserEquipment(0, (0, 0), 1.0, {**req, "delay": 0.0}, {"throughput": 1.0, "delay": 0.0, "loss": 0.0},
                      DemandProfile(1.0))


def test_channel_needs_bandwidth():
    with pytest.raises(DomainError):
        ChannelModel(bandwidth_hz=0.0)


def test_fading_is_reproducible_with_unit_mean():
    a = ChannelModel(seed=11).fading(5, (40, 8))
    b = ChannelModel(seed=11).fading(5, (40, 8))
    assert np.array_equal(a, b)
    assert not np.array_equal(a, ChannelModel(seed=12).fading(5, (40, 8)))
    assert a.shape == (16, 40, 8)
    assert abs(a.mean() - 1.0) < 0.05


def test_zero_fading_draws_means_mean_gain():
    assert np.array_equal(ChannelModel(fading_draws=0).fading(0, (2, 3)), np.ones((1, 2, 3)))


# ------------------------------------------------------------------ dynamics

def test_step_is_deterministic_under_seed():
    cfg = tiny_config(8)
    a, b = Scenario(cfg), Scenario(cfg)
    for t in range(6):
        sa, sb = a.step(t), b.step(t)
    assert np.array_equal(sa.rate, sb.rate)
    assert np.array_equal(sa.gain, sb.gain)
    assert np.array_equal(sa.positions, sb.positions)
    other = Scenario(cfg.with_seed(4)).step(5)
    assert not np.array_equal(sa.rate, other.rate)


def test_step_guards():
    scn = Scenario(tiny_config(3))
    with pytest.raises(DomainError):
        scn.step(-1)
    scn.step(3)
    with pytest.raises(StateError):
        scn.step(2)
    with pytest.raises(StateError):
        Scenario(tiny_config(3)).evaluate(None)


def test_demand_follows_seasonal_profile_without_noise():
    cfg = tiny_config(4)
    cfg = dataclasses.replace(cfg, traffic=dataclasses.replace(cfg.traffic, noise_scale=0.0, weekly_amplitude=0.1))
    scn = Scenario(cfg)
    tr = cfg.traffic
    for t in (0, 7, 30):
        snap = scn.step(t)
        tt = t + scn.phase
        expected = scn.base_rate * (1 + tr.daily_amplitude * np.sin(2 * np.pi * tt / 24)
                                    + tr.weekly_amplitude * np.sin(2 * np.pi * tt / 168))
        assert np.allclose(snap.demand, expected, rtol=1e-12)


def test_demand_series_matches_profile_mean_when_noise_free():
    prof = DemandProfile(2.0, daily_amplitude=0.3, weekly_amplitude=0.1)
    t = np.arange(200)
    assert np.allclose(demand_series(prof, t), prof.mean(t))


def test_legacy_snapshots_respect_constraints():
    scn = Scenario(tiny_config(30))
    for t in range(4):
        snap = scn.step(t)
        assert check_constraints(snap, scn.pmax_mw, scn.slots) == []
        assert (snap.association.sum(axis=1) <= 1).all()
        assert (snap.power_mw >= 0).all()


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.lists(st.floats(0.0, 1.0), min_size=30, max_size=30))
def test_any_in_range_policy_is_feasible(seed, fractions):
    scn = Scenario(tiny_config(30))
    scn.step(0)
    rng = np.random.default_rng(seed)
    x = scn.potential_links()
    serving = np.array([rng.choice(np.flatnonzero(row)) if rng.random() > 0.1 else -1 for row in x])
    snap = scn.apply(Policy(serving=serving, power_fraction=np.array(fractions)))
    assert check_constraints(snap, scn.pmax_mw, scn.slots) == []
    assert (snap.rate[serving < 0] == 0).all()


def test_single_user_rate_matches_closed_form_without_fading():
    scn = Scenario(single_cell_config(1, fading_draws=0))
    snap = scn.step(0)
    k = scn.slots[0]
    g = scn.mean_gain()[0, 0]
    expected = scn.channel.bandwidth_hz / k * math.log2(1 + scn.pmax_mw[0] * g / scn.channel.noise_mw)
    assert snap.rate[0] == pytest.approx(expected, rel=1e-12)
    assert snap.sinr[0] == pytest.approx(sinr(0, 0, snap), rel=1e-9)


def test_stored_sinr_reproduces_mean_rate():
    scn = Scenario(tiny_config(10))
    snap = scn.step(0)
    served = snap.serving >= 0
    assert np.allclose(data_rate(snap.sinr[served], snap.bandwidth_hz[served]), snap.rate[served], rtol=1e-9)


# ------------------------------------------------------------------ traces

@pytest.fixture(scope="module")
def bundle():
    return generate_trace(Scenario(tiny_config(4)), 60, stl_periods=(24,))


def test_trace_timestamps_strictly_increase(bundle):
    for s in bundle.series.values():
        assert np.all(np.diff(s.timestamps) > 0)


def test_trace_keeps_clock_truth_separate(bundle):
    for (entity, _), s in bundle.series.items():
        truth = bundle.clock_truth[entity]
        assert np.allclose(truth.corrupt(bundle.true_times[entity]), s.timestamps, rtol=0, atol=1e-6)
        assert truth.skew != 0.0


def test_trace_needs_two_weeks_for_weekly_cycle():
    with pytest.raises(DomainError):
        generate_trace(Scenario(tiny_config(2, weekly=True)), 200)


def test_trace_needs_fresh_scenario():
    scn = Scenario(tiny_config(2))
    scn.step(0)
    with pytest.raises(StateError):
        generate_trace(scn, 30)


def test_short_trace_warns_about_stl_period():
    b = generate_trace(Scenario(tiny_config(2)), 30, stl_periods=(24, 168))
    assert b.warnings


def test_trace_round_trips_through_csv(bundle, tmp_path):
    write_trace_bundle(bundle, tmp_path)
    back = read_trace_bundle(tmp_path)
    assert set(back.series) == set(bundle.series)
    for key, s in bundle.series.items():
        assert np.array_equal(back.series[key].timestamps, s.timestamps)
        assert np.array_equal(back.series[key].values, s.values)
        assert np.array_equal(back.series[key].sequence, s.sequence)
    for entity, c in bundle.clock_truth.items():
        assert back.clock_truth[entity].offset_s == c.offset_s
        assert back.clock_truth[entity].skew == pytest.approx(c.skew, rel=1e-12)


def test_two_way_exchange_is_symmetric_for_a_perfect_clock():
    ex = two_way_exchange(ClockTruth(0.0, 0.0), 100.0, 0.002)
    assert ex.t_dev_rx - ex.t_con_tx == pytest.approx(0.002)
    assert ex.t_con_rx - ex.t_dev_tx == pytest.approx(0.002)
