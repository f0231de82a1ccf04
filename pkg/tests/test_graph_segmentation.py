import json
import warnings

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from hettwin.errors import DomainError
from hettwin.graph_segmentation import (ActivityGraph, AreaInputs, DemandModel, LoadState, Partition,
                                        area_efficiency, build_adjacency, fit_ar, identify_target_area,
                                        link_traffic, load_indicator, ratio_cut, ratio_cut_partition,
                                        segmentation_report, supply_violation, traffic_volume, update_adjacency,
                                        write_segmentation_report)
from support import area_eta_by_hand, best_area_by_hand, random_segment


# ------------------------------------------------------------------ traffic and load

def test_volume_of_unused_link_is_zero():
    serving = np.zeros((10, 2), dtype=int)
    assert traffic_volume(serving, np.ones((10, 2)), 0, 1, 9) == 0.0


def test_volume_of_constant_link():
    serving = np.zeros((10, 1), dtype=int)
    assert traffic_volume(serving, np.full((10, 1), 1e6), 0, 0, 9) == 10e6


def test_volume_matches_tick_loop():
    rng = np.random.default_rng(0)
    serving = rng.integers(-1, 3, (30, 4))
    rate = rng.random((30, 4))
    for user in range(4):
        for bs in range(3):
            by_hand = sum(rate[t, user] for t in range(21) if serving[t, user] == bs)
            assert traffic_volume(serving, rate, user, bs, 20) == pytest.approx(by_hand)
    cube = link_traffic(serving, rate, 3)
    assert traffic_volume(cube != 0, rate, 1, 2, 20) == pytest.approx(traffic_volume(serving, rate, 1, 2, 20))


def test_volume_horizon_checked():
    with pytest.raises(DomainError):
        traffic_volume(np.zeros((3, 1), int), np.ones((3, 1)), 0, 0, 3)


def test_load_indicator_examples():
    assert load_indicator(LoadState([0.0], [100.0], 0.8)).tolist() == [0]
    assert load_indicator(LoadState([80.0], [100.0], 0.8)).tolist() == [1]
    assert load_indicator(LoadState([79.0], [100.0], 0.8)).tolist() == [0]
    with pytest.raises(DomainError):
        LoadState([1.0], [0.0])
    with pytest.raises(DomainError):
        LoadState([1.0], [1.0], zeta=0.0)


def test_ar2_coefficients_recovered():
    rng = np.random.default_rng(3)
    x = np.zeros(2000)
    for t in range(2, 2000):
        x[t] = 0.5 * x[t - 1] + 0.3 * x[t - 2] + rng.standard_normal()
    assert np.allclose(fit_ar(x, 2), [0.5, 0.3], atol=0.1)


def test_demand_model_predicts_and_falls_back():
    hist = np.column_stack([2.0 ** np.arange(10), np.full(10, 7.0)])
    model = DemandModel.fit(hist, order=1)
    pred = model.predict(1)
    assert pred[0] == pytest.approx(2.0 ** 10)
    assert pred[1] == 7.0  # flat column keeps its last value
    with pytest.raises(DomainError):
        model.predict(0)


# ------------------------------------------------------------------ adjacency

def test_empty_potential_gives_zero_graph():
    g = build_adjacency(np.ones((5, 3, 2)), np.zeros((3, 2), bool))
    assert g.empty and not g.weights.any()


def test_single_active_link_is_normalized_to_one():
    traffic = np.zeros((6, 2, 2))
    traffic[:, 0, 1] = [1, 2, 3, 2, 3, 4]
    potential = np.zeros((2, 2), bool)
    potential[0, 1] = True
    g = build_adjacency(traffic, potential)
    assert g.weights[0, 1] == 1.0 and g.weights.sum() == 1.0


def test_overflowing_forecast_falls_back_to_persistence():
    traffic = np.full((8, 1, 1), 1e-300)
    traffic[-1] = 4.6447e4
    potential = np.ones((1, 1), bool)
    assert DemandModel.fit(traffic).predict(1)[0, 0] == 4.6447e4
    assert build_adjacency(traffic, potential).weights[0, 0] == 1.0


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, (8, 4, 3), elements=st.floats(0, 1e6)), arrays(bool, (4, 3)))
def test_adjacency_invariants(traffic, potential):
    g = build_adjacency(traffic, potential)
    A = g.matrix()
    assert np.array_equal(A, A.T)
    assert np.all(np.diag(A) == 0)
    assert np.all((g.weights >= 0) & (g.weights <= 1))
    assert np.all(g.weights[~potential] == 0)


def graph(weights, potential=None):
    w = np.asarray(weights, dtype=float)
    return ActivityGraph(w, np.ones(w.shape, bool) if potential is None else potential)


def test_update_with_zero_weight_keeps_graph():
    g = graph([[0.4, 0.2]])
    out = update_adjacency(g, [0], [0, 0], [0.5], [10.0, 10.0], [100.0, 100.0], 0.8, 0.0)
    assert np.array_equal(out.weights, g.weights)


def test_satisfied_user_on_loaded_bs_loses_the_edge():
    g = graph([[0.9]])
    out = update_adjacency(g, [1], [1], [1.0], [90.0], [100.0], 0.8, 1.0)
    assert out.weights[0, 0] == 0.0


def test_update_blend_arithmetic():
    # ratio 0.8 dominates the headroom 1 - 70/80 = 0.125
    out = update_adjacency(graph([[0.4]]), [0], [0], [0.8], [70.0], [100.0], 0.8, 0.5)
    assert out.weights[0, 0] == pytest.approx(0.6)


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, (3, 2), elements=st.floats(0, 1)), arrays(np.int64, 3, elements=st.integers(0, 1)),
       arrays(np.int64, 2, elements=st.integers(0, 1)), arrays(np.float64, 3, elements=st.floats(0, 1)),
       arrays(np.float64, 2, elements=st.floats(0, 80)))
def test_situation_term_is_bounded(prior, sat, loaded, ratio, load):
    out = update_adjacency(graph(prior), sat, loaded, ratio, load, [100.0, 100.0], 0.8, 1.0)
    assert np.all((out.weights >= 0) & (out.weights <= 1))
    assert np.all(out.weights[np.outer(sat, loaded) == 1] == 0)


# ------------------------------------------------------------------ ratio cut

def two_cliques():
    W = np.zeros((10, 10))
    W[:5, :5] = 1
    W[5:, 5:] = 1
    np.fill_diagonal(W, 0)
    return W


def test_disjoint_cliques_recovered():
    p = ratio_cut_partition(two_cliques(), 2)
    assert p.objective == 0.0
    assert len(set(p.labels[:5])) == 1 and len(set(p.labels[5:])) == 1 and p.labels[0] != p.labels[5]


def test_eigengap_picks_component_count():
    p = ratio_cut_partition(two_cliques(), None)
    assert p.n_segments == 2


def test_surplus_components_are_merged_with_warning():
    W = np.zeros((6, 6))
    for a, b in ((0, 1), (2, 3), (4, 5)):
        W[a, b] = W[b, a] = 1
    with pytest.warns(UserWarning, match="merged"):
        p = ratio_cut_partition(W, 2)
    assert p.warnings and sorted(np.bincount(p.labels).tolist()) == [2, 4]


def test_partition_guards():
    with pytest.raises(DomainError):
        ratio_cut_partition(np.ones((3, 3)), 4)
    with pytest.raises(DomainError):
        ratio_cut_partition(np.array([[0, 1], [0, 0]]), 2)


def random_graph(seed, n=9, density=0.5):
    rng = np.random.default_rng(seed)
    W = rng.random((n, n)) * (rng.random((n, n)) < density)
    W = np.triu(W, 1)
    return W + W.T


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 3))
def test_partition_is_a_locally_optimal_cover(seed, segments):
    W = random_graph(seed)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        p = ratio_cut_partition(W, segments, seed=seed)
    assert sorted(np.concatenate(p.segments).tolist()) == list(range(len(W)))
    assert p.objective == pytest.approx(ratio_cut(W, p.labels))
    if p.warnings:
        return
    for v in range(len(W)):
        for k in range(segments):
            if k == p.labels[v] or np.sum(p.labels == p.labels[v]) == 1:
                continue
            moved = p.labels.copy()
            moved[v] = k
            assert p.objective <= ratio_cut(W, moved) + 1e-9


def test_segmentation_report_json(tmp_path):
    p = Partition(np.array([0, 0, 1, 1, 1]), 2, 0.5)
    report = segmentation_report(p, 2, [1, 0], [])
    assert report["segments"] == [["bs00", "bs01"], ["ue000", "ue001", "ue002"]]
    assert report["load_flags"] == {"bs00": 1, "bs01": 0}
    write_segmentation_report(report, tmp_path / "seg.json")
    assert json.loads((tmp_path / "seg.json").read_text()) == report


# ------------------------------------------------------------------ target areas

def inputs_from(seg, adjacency=None):
    nu, nb = seg["sat"].shape[0], len(seg["capacity"])
    return AreaInputs(np.arange(nu), np.arange(nb), seg["sat"], seg["weights"], seg["potential"], seg["demand"],
                      seg["capacity"], seg["user_cost"], seg["bs_cost"], adjacency)


def test_all_satisfied_gives_empty_area():
    seg = random_segment(0)
    seg["sat"] = np.full_like(seg["sat"], 1.2)
    area = identify_target_area(inputs_from(seg))
    assert area.is_empty and area.eta == 0.0


def test_single_unsatisfied_user_and_free_bs():
    inputs = AreaInputs([0], [0], [[0.5, 1.0, 1.0]], [[1.0, 0.0, 0.0]], [[True]], [1.0], [100.0], [2.0], [1.0])
    area = identify_target_area(inputs)
    assert area.member_users.tolist() == [0] and area.member_bss.tolist() == [0]
    assert area.eta == pytest.approx(0.5 / 3.0)
    assert area.feasible


def test_unreachable_unsatisfied_user():
    inputs = AreaInputs([0], [0], [[0.5, 1, 1]], [[1, 0, 0]], [[False]], [1.0], [10.0], [1.0], [1.0])
    with pytest.raises(DomainError):
        identify_target_area(inputs)


@pytest.mark.parametrize("seed", range(6))
def test_greedy_close_to_exhaustive(seed):
    seg = random_segment(seed)
    area = identify_target_area(inputs_from(seg), strong_threshold=None)
    best = best_area_by_hand(**seg)
    if np.isfinite(best):
        assert area.eta >= 0.95 * best - 1e-12


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 100_000))
def test_area_keeps_unsatisfied_users_and_reports_eta(seed):
    seg = random_segment(seed)
    rng = np.random.default_rng(seed)
    inputs = inputs_from(seg, adjacency=rng.random(seg["potential"].shape) * seg["potential"])
    area = identify_target_area(inputs)
    unsat = np.any(seg["sat"] < 1.0, axis=1)
    assert np.all(area.y_user[unsat])
    if unsat.any():
        assert np.all(seg["potential"][unsat][:, area.y_bs].any(axis=1))
    by_hand = area_eta_by_hand(seg["sat"], seg["weights"], seg["user_cost"], seg["bs_cost"], area.y_user, area.y_bs)
    assert area.eta == pytest.approx(by_hand, rel=1e-12)
    assert area.eta == pytest.approx(area_efficiency(inputs, area.y_user, area.y_bs), rel=1e-12)
    assert area.feasible == (supply_violation(inputs, area.y_user, area.y_bs) <= 0)


def test_strong_neighbours_join_the_area():
    sat = [[0.5, 1, 1], [1.5, 1.5, 1.5]]
    adjacency = np.array([[0.9, 0.0], [0.0, 0.8]])
    potential = [[True, False], [False, True]]
    inputs = AreaInputs([0, 1], [0, 1], sat, [[1, 0, 0]] * 2, potential, [1, 1], [50, 50], [1, 1], [1, 1], adjacency)
    area = identify_target_area(inputs, strong_threshold=0.5)
    assert area.member_users.tolist() == [0]
    inputs.adjacency[1, 0] = 0.7
    area = identify_target_area(inputs, strong_threshold=0.5)
    assert area.member_users.tolist() == [0, 1] and area.expanded_users == [1]
    assert identify_target_area(inputs, strong_threshold=None).member_users.tolist() == [0]
