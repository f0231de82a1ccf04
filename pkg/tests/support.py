"""Independent oracles and small fixtures shared by the test modules."""

from __future__ import annotations

import dataclasses
import itertools
import math

import numpy as np

from hettwin.config import ScenarioConfig
from hettwin.hetnet_sim import NetworkSnapshot


def tiny_config(n_users: int = 6, seed: int = 3, weekly: bool = False, **channel) -> ScenarioConfig:
    """Reference network with few users and no weekly cycle, so short traces are allowed."""
    cfg = ScenarioConfig().with_users(n_users).with_seed(seed)
    traffic = dataclasses.replace(cfg.traffic, weekly_amplitude=cfg.traffic.weekly_amplitude if weekly else 0.0)
    ch = dataclasses.replace(cfg.channel, **channel)
    return dataclasses.replace(cfg, traffic=traffic, channel=ch)


def single_cell_config(n_users: int = 1, **channel) -> ScenarioConfig:
    cfg = tiny_config(n_users, **channel)
    net = dataclasses.replace(cfg.network, macro_positions=[[400.0, 200.0]], small_positions=[],
                              hotspot_fraction=0.0, max_speed=0.0)
    return dataclasses.replace(cfg, network=net)


def snapshot_from(gain, power_mw, noise_mw, serving) -> NetworkSnapshot:
    """A snapshot carrying only what the SINR computation reads."""
    gain = np.asarray(gain, dtype=float)
    N, M = gain.shape
    assoc = np.zeros((N, M), dtype=np.int8)
    for i, j in enumerate(serving):
        if j >= 0:
            assoc[i, j] = 1
    z = np.zeros(N)
    return NetworkSnapshot(tick=0, gain=gain, association=assoc, power_mw=np.asarray(power_mw, dtype=float),
                           noise_mw=np.broadcast_to(np.asarray(noise_mw, dtype=float), (N,)).copy(),
                           bandwidth_hz=z, share=z, demand=z, sinr=z, rate=z, achieved={}, satisfaction={},
                           load_bps=np.zeros(M), utilization=np.zeros(M), positions=np.zeros((N, 2)), speed=z,
                           potential=np.ones((N, M), bool), serving=np.asarray(serving))


def sinr_by_hand(gain, power_mw, noise_mw, user, bs) -> float:
    signal = power_mw[user][bs] * gain[user][bs]
    interference = 0.0
    for other in range(len(gain[user])):
        if other != bs:
            interference += power_mw[user][other] * gain[user][other]
    return signal / (interference + noise_mw)


def sampen_by_loops(x, m: int = 2, r: float = 0.2) -> float:
    """Textbook double loop over template pairs; tolerance r * std."""
    x = [float(v) for v in x]
    n = len(x)
    mean = sum(x) / n
    sd = math.sqrt(sum((v - mean) ** 2 for v in x) / n)
    if sd == 0:
        return 0.0
    tol = r * sd
    b = a = 0
    count = n - m
    for u in range(count):
        for v in range(count):
            if u == v:
                continue
            if max(abs(x[u + k] - x[v + k]) for k in range(m)) < tol:
                b += 1
                if abs(x[u + m] - x[v + m]) < tol:
                    a += 1
    if a == 0 or b == 0:
        return math.inf
    return -math.log(a / b)


def best_permutation_total(awards) -> float:
    a = np.asarray(awards, dtype=float)
    n = len(a)
    return max(sum(a[i, p[i]] for i in range(n)) for p in itertools.permutations(range(n)))


def ratio_cut_by_hand(W, labels) -> float:
    total = 0.0
    for k in set(labels):
        inside = [v for v in range(len(W)) if labels[v] == k]
        outside = [v for v in range(len(W)) if labels[v] != k]
        total += sum(W[u][v] for u in inside for v in outside) / len(inside)
    return total


def best_bipartition(W) -> float:
    n = len(W)
    best = math.inf
    for bits in itertools.product((0, 1), repeat=n - 1):
        labels = (0,) + bits
        if len(set(labels)) < 2:
            continue
        best = min(best, ratio_cut_by_hand(W, labels))
    return best


def area_eta_by_hand(sat, weights, user_cost, bs_cost, y_user, y_bs) -> float:
    gain = 0.0
    cost = 0.0
    for i, inc in enumerate(y_user):
        if inc:
            cost += user_cost[i]
            for s, w in zip(sat[i], weights[i]):
                if s < 1.0:
                    gain += w * (1.0 - s)
    for j, inc in enumerate(y_bs):
        if inc:
            cost += bs_cost[j]
    return gain / cost if cost > 0 else 0.0


def area_feasible_by_hand(potential, demand, capacity, y_user, y_bs) -> bool:
    users = [i for i, v in enumerate(y_user) if v]
    bss = [j for j, v in enumerate(y_bs) if v]
    if not users:
        return True
    if not bss:
        return False
    lhs = 0.0
    for i in users:
        degree = sum(potential[i])
        inside = sum(potential[i][j] for j in bss)
        lhs += demand[i] * inside / degree if degree else 0.0
    rhs = sum(capacity[j] * sum(potential[i][j] for i in users) for j in bss) / (len(users) * len(bss))
    return lhs <= rhs + 1e-12


def best_area_by_hand(sat, weights, potential, demand, capacity, user_cost, bs_cost) -> float:
    nu, nb = len(sat), len(capacity)
    unsat = [any(s < 1.0 for s in row) for row in sat]
    best = -math.inf
    for yu in itertools.product((False, True), repeat=nu):
        if any(u and not y for u, y in zip(unsat, yu)):
            continue
        for yb in itertools.product((False, True), repeat=nb):
            if not any(yb):
                continue
            if any(yu[i] and unsat[i] and not any(potential[i][j] and yb[j] for j in range(nb)) for i in range(nu)):
                continue
            if not area_feasible_by_hand(potential, demand, capacity, yu, yb):
                continue
            best = max(best, area_eta_by_hand(sat, weights, user_cost, bs_cost, yu, yb))
    return best


def random_segment(seed: int, nu: int = 6, nb: int = 3):
    """Random 6-user/3-BS segment with at least one in-range BS per user."""
    rng = np.random.default_rng(seed)
    sat = rng.uniform(0.5, 1.5, (nu, 3))
    weights = rng.dirichlet(np.ones(3), nu)
    potential = rng.random((nu, nb)) < 0.6
    potential[np.arange(nu), rng.integers(nb, size=nu)] = True
    return dict(sat=sat, weights=weights, potential=potential, demand=rng.uniform(1, 3, nu),
                capacity=rng.uniform(10, 30, nb), user_cost=rng.uniform(1, 3, nu), bs_cost=rng.uniform(0.5, 2, nb))
