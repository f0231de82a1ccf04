"""One orchestration round: situation evaluation, target areas, twins, assignment, measurement."""

from __future__ import annotations

import contextlib
import logging
from dataclasses import dataclass, field

import numpy as np

from ..attribute_valuation import SampEnConfig, differentiate, evaluate_entity
from ..config import ScenarioConfig
from ..data_integration import KernelConfig, estimate_clock, gpr_resample
from ..errors import HettwinError, StageError
from ..graph_segmentation import (AreaInputs, DemandModel, LoadState, build_adjacency, identify_target_area,
                                  link_traffic, load_indicator, ratio_cut_partition, segmentation_report,
                                  update_adjacency)
from ..hetnet_sim import (ATTRIBUTES, HOUR, OBJECTIVES, QOS_METRICS, Policy, Scenario, _rng, award,
                          check_constraints, generate_trace, user_entity)
from ..twin_modeling import NarxConfig, mse, stl_narx
from .assignment import assign_with_capacity
from .awards import power_grid, predict_awards
from .ledger import CostModel, all_inclusive_ledger, efficiency, hierarchical_ledger
from .twins import TwinRegistry

log = logging.getLogger("hettwin.orchestration")

VARIANTS = ("hierarchical", "hierarchical_nosync", "all_inclusive")
DEMAND = "traffic_load"
_STREAM_COLLECTION = 7


@contextlib.contextmanager
def stage(name: str):
    try:
        yield
    except StageError:
        raise
    except (HettwinError, ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
        raise StageError(name, exc) from exc


@dataclass
class Situation:
    """What the coarse layer knows at the decision instant."""

    values: list
    levels: dict
    satisfaction: np.ndarray
    load: np.ndarray
    loaded: np.ndarray
    partition: object
    graph: object
    demand_forecast: np.ndarray
    load_forecast: np.ndarray
    areas: list
    area_bss: dict
    report: dict


@dataclass
class RoundContext:
    config: ScenarioConfig
    seed: int
    scenario: Scenario
    bundle: object
    t_u: int
    delays_h: dict
    situation: Situation | None = None
    registries: dict = field(default_factory=dict)


def prepare_round(config: ScenarioConfig, seed: int) -> RoundContext:
    """Simulates the trace up to the decision instant and draws per-device collection delays."""
    cfg = config.with_seed(seed)
    with stage("simulation"):
        scn = Scenario(cfg)
        bundle = generate_trace(scn, cfg.trace.duration_h, clock_corruption=True,
                                stl_periods=tuple(cfg.pipeline.stl_periods))
    t_u = cfg.trace.duration_h - 1
    rng = _rng(seed, _STREAM_COLLECTION)
    clk = cfg.clock
    delays = {u: float(rng.uniform(clk.collection_delay_min_h, clk.collection_delay_max_h))
              for u in range(scn.n_users)}
    return RoundContext(cfg, seed, scn, bundle, t_u, delays)


# ------------------------------------------------------------------ coarse layer

def evaluate_situation(ctx: RoundContext) -> Situation:
    if ctx.situation is not None:
        return ctx.situation
    cfg, scn, truth = ctx.config, ctx.scenario, ctx.bundle.truth
    pl = cfg.pipeline
    now = ctx.t_u - 1
    win = slice(ctx.t_u - pl.hdt_window_h, ctx.t_u)
    with stage("valuation"):
        sampen = SampEnConfig(pl.sampen_m, pl.sampen_r)
        values = []
        for i in range(scn.n_users):
            attrs = {a: truth[a][win, i] for a in ATTRIBUTES}
            objs = {OBJECTIVES[m]: truth[OBJECTIVES[m]][win, i] for m in QOS_METRICS}
            values += evaluate_entity(user_entity(i), attrs, objs, scn.weights[i], sampen, pl.granger_max_lag,
                                      pl.granger_alpha, pl.granger_trigger, pl.granger_floor)
        differentiate(values, k=pl.levels, seed=ctx.seed)
        levels = {i: {} for i in range(scn.n_users)}
        for v in values:
            levels[int(v.entity[2:])][v.attribute] = v.level
    with stage("segmentation"):
        sat = np.column_stack([truth[OBJECTIVES[m]][now] for m in QOS_METRICS])
        load = truth["bs_traffic_load"][now]
        loaded = load_indicator(LoadState(load, scn.capacity, pl.zeta))
        recent = slice(ctx.t_u - pl.demand_window_h, ctx.t_u)
        traffic = link_traffic(truth["serving"][recent], truth["rate"][recent], scn.n_bs)
        potential = scn.potential_links()
        graph = build_adjacency(traffic, potential, pl.demand_ar_order, tau=ctx.t_u)
        satisfied = np.all(sat >= 1.0, axis=1).astype(int)
        graph = update_adjacency(graph, satisfied, loaded, np.minimum(sat[:, 0], 1.0), load, scn.capacity,
                                 pl.zeta, pl.adjacency_weight)
        partition = ratio_cut_partition(graph.matrix(), pl.segments or None, seed=ctx.seed)
        demand_fc = DemandModel.fit(truth[DEMAND][recent], pl.demand_ar_order).predict(1)
        load_fc = np.maximum(DemandModel.fit(truth["bs_traffic_load"][recent], pl.demand_ar_order).predict(1), 0.0)
    with stage("target_area"):
        costs = CostModel.from_config(cfg.costs)
        M = scn.n_bs
        areas = []
        for k, seg in enumerate(partition.segments):
            users = seg[seg >= M] - M
            if len(users) == 0:
                continue
            unsat = np.any(sat[users] < 1.0, axis=1)
            bss = set((seg[seg < M]).tolist())
            for i in users[unsat]:
                bss.update(np.flatnonzero(potential[i]).tolist())
            bss = np.array(sorted(bss), dtype=int)
            if len(bss) == 0:
                continue
            inputs = AreaInputs(users, bss, sat[users], scn.weights[users], potential[np.ix_(users, bss)],
                                np.maximum(demand_fc[users], 0.0), scn.capacity[bss],
                                [costs.user_cost(levels[int(i)]) for i in users],
                                np.full(len(bss), costs.bs_cost()), graph.weights[np.ix_(users, bss)])
            area = identify_target_area(inputs, segment=k, strong_threshold=pl.strong_threshold)
            if not area.is_empty:
                areas.append(area)
        # the cell currently serving a member stays available, so re-orchestration can keep it in place
        current = scn.legacy_policy().serving
        area_bss = {a.segment: np.union1d(a.member_bss, current[a.member_users]).astype(int) for a in areas}
        report = segmentation_report(partition, M, loaded, areas)
        report["assignment_bss"] = {str(k): v.tolist() for k, v in area_bss.items()}
    ctx.situation = Situation(values, levels, sat, load, loaded, partition, graph, demand_fc, load_fc, areas,
                              area_bss, report)
    return ctx.situation


# ------------------------------------------------------------------ fine layer

def _available(ctx: RoundContext, user: int):
    """Demand samples of ``user`` that reached the controller by t_u."""
    entity = user_entity(user)
    series = ctx.bundle.get(entity, DEMAND)
    cutoff = (ctx.t_u - ctx.delays_h[user]) * HOUR
    keep = ctx.bundle.true_times[entity] <= cutoff
    return series, keep


def build_demand_twin(ctx: RoundContext, user: int, synchronized: bool):
    """Returns (t_last in hours, builder) for the demand twin of one user.

    With synchronization the device clock is estimated and removed before
    resampling; without it the device timestamps are taken at face value.
    """
    pl = ctx.config.pipeline
    series, keep = _available(ctx, user)
    stamps, values, seq = series.timestamps[keep], series.values[keep], series.sequence[keep]
    if synchronized:
        est = estimate_clock(stamps, series.beta_s, ctx.bundle.exchanges[series.entity], seq)
        stamps = est.correct(stamps)
    t_last = float(np.floor(stamps[-1] / HOUR + 1e-6))
    t_last = min(t_last, float(ctx.t_u))
    window = pl.twin_window_h

    def build():
        grid_h = np.arange(t_last - window + 1, t_last + 1)
        # observations a little beyond the window keep the GP anchored at its edges
        use = stamps >= (grid_h[0] - 6) * HOUR
        noise = 1e-4 * max(float(np.var(values[use])), 1e-12)
        resampled = gpr_resample(stamps[use] / HOUR, values[use], grid_h, KernelConfig(noise=noise)).values
        narx = NarxConfig(hidden=pl.narx.hidden, learning_rate=pl.narx.learning_rate, max_epochs=pl.narx.max_epochs,
                          patience=pl.narx.patience, batch_size=pl.narx.batch_size, val_fraction=pl.narx.val_fraction,
                          seed=ctx.seed * 100_003 + user)
        return stl_narx(resampled, (), tuple(pl.stl_periods), pl.narx.own_lags, pl.narx.exo_lags, narx, t_last=t_last)

    return t_last, build


def twin_registry(ctx: RoundContext, synchronized: bool, users) -> TwinRegistry:
    reg = ctx.registries.setdefault(synchronized, TwinRegistry(float(ctx.t_u)))
    for u in users:
        key = (user_entity(int(u)), DEMAND)
        if key not in reg:
            t_last, builder = build_demand_twin(ctx, int(u), synchronized)
            reg.register(key, t_last, builder)
    return reg


# ------------------------------------------------------------------ rounds

@dataclass
class RoundReport:
    variant: str
    seed: int
    n_users: int
    efficiency: float
    realized_award: float
    predicted_award: float
    mean_award: float
    forecast_mse: float
    ledger: dict
    pairs: list
    area_users: list
    area_bss: list
    satisfaction_before: dict
    satisfaction_after: dict
    bs_load: list
    constraint_violations: list
    hdt: dict

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def run_variant(ctx: RoundContext, variant: str) -> RoundReport:
    if variant not in VARIANTS:
        raise StageError("setup", ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}"))
    cfg, scn = ctx.config, ctx.scenario
    pl = cfg.pipeline
    costs = CostModel.from_config(cfg.costs)
    sit = evaluate_situation(ctx)
    with stage("ledger"):
        if variant == "all_inclusive":
            users = np.arange(scn.n_users)
            bss = np.arange(scn.n_bs)
            ledger = all_inclusive_ledger(costs, sit.levels, scn.n_bs)
        else:
            users = np.array(sorted({int(u) for a in sit.areas for u in a.member_users}), dtype=int)
            bss = np.array(sorted({int(b) for v in sit.area_bss.values() for b in v}), dtype=int)
            ledger = hierarchical_ledger(costs, sit.levels,
                                         {a.segment: (a.member_users.tolist(), sit.area_bss[a.segment].tolist())
                                          for a in sit.areas}, scn.n_bs)
    synchronized = variant != "hierarchical_nosync"
    with stage("twin_modeling"):
        reg = twin_registry(ctx, synchronized, users)
        demand_hat = np.array([reg.predict((user_entity(int(u)), DEMAND), compensate=synchronized) for u in users])
        demand_hat = np.maximum(demand_hat, 0.01 * scn.base_rate[users]) if len(users) else demand_hat
    legacy = scn.legacy_policy()
    before = scn.evaluate(legacy)
    with stage("assignment"):
        serving = legacy.serving.copy()
        fraction = legacy.power_fraction.copy()
        pairs = []
        predicted = 0.0
        if len(users) and len(bss):
            gain = scn.mean_gain()[users]
            counts = np.bincount(legacy.serving, minlength=scn.n_bs)
            share = np.minimum(1.0, scn.slots / np.maximum(counts, 1))[bss]
            awards = predict_awards(scn, users, bss, demand_hat, gain, sit.load_forecast,
                                    power_grid(pl.power_levels, pl.power_min_fraction), pl.award_cap,
                                    fading_samples=pl.fading_samples, tolerance=pl.power_tolerance, share=share,
                                    target=pl.power_target or None)
            outside = np.ones(scn.n_users, dtype=bool)
            outside[users] = False
            occupied = np.bincount(legacy.serving[outside], minlength=scn.n_bs)[bss]
            staying = np.bincount(legacy.serving[users], minlength=scn.n_bs)[bss]
            # free slots, but never fewer than the members already time-sharing the cell
            capacity = np.maximum(scn.slots[bss] - occupied, staying)
            sol = assign_with_capacity(awards.awards, capacity, pl.sentinel_margin)
            for r, c in sol.pairs:
                u, b = int(users[r]), int(bss[c])
                serving[u] = b
                fraction[u] = awards.power_fraction[r, c]
                pairs.append((u, b, float(awards.power_fraction[r, c])))
            predicted = sol.total_award
    with stage("measurement"):
        policy = Policy(serving=serving, power_fraction=fraction)
        after = scn.apply(policy)
        violations = check_constraints(after, scn.pmax_mw, scn.slots)
        realized = award(after.satisfaction, scn.weights, pl.award_cap)
        assigned = np.array([u for u, _, _ in pairs], dtype=int)
        numerator = float(realized[assigned].sum()) if len(assigned) else 0.0
        eff = efficiency([numerator], ledger)
        true_demand = after.demand[users]
        fc_err = mse(demand_hat / true_demand, np.ones(len(users))) if len(users) else 0.0
    sat_dict = lambda snap: {m: snap.satisfaction[m].tolist() for m in QOS_METRICS}  # noqa: E731
    return RoundReport(
        variant=variant, seed=ctx.seed, n_users=scn.n_users, efficiency=eff, realized_award=numerator,
        predicted_award=float(predicted), mean_award=float(realized.mean()), forecast_mse=float(fc_err),
        ledger=ledger.to_dict(), pairs=pairs, area_users=users.tolist(), area_bss=bss.tolist(),
        satisfaction_before=sat_dict(before), satisfaction_after=sat_dict(after), bs_load=after.load_bps.tolist(),
        constraint_violations=violations, hdt=sit.report)


def run_round(config: ScenarioConfig, seed: int, variant: str = "hierarchical") -> RoundReport:
    return run_variant(prepare_round(config, seed), variant)


def run_point(config: ScenarioConfig, seed: int, variants=VARIANTS) -> dict:
    """All requested variants on one shared simulated network (twins are shared where identical)."""
    ctx = prepare_round(config, seed)
    return {v: run_variant(ctx, v) for v in variants}
