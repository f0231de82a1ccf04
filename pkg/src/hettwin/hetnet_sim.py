"""Discrete-time heterogeneous network simulator.

One tick is one simulated hour. Every tick the simulator moves users, draws
demand from a daily/weekly seasonal profile and evaluates rates and QoS under
an association/power policy. Within a tick, Rayleigh fading is redrawn
``fading_draws`` times and the hourly rate is the mean over those draws.

Each base station owns ``slots`` equal resource slots (bandwidth B/K, power
Pmax/K). A served user occupies one slot; when a cell has more users than
slots they time-share. Snapshot rows are stored time-averaged: the serving
entry holds the user's share of slot power, the other entries of the row hold
the interference power leaking into that share of spectrum, and the noise and
bandwidth are scaled the same way. A neighbor leaks Pmax/K scaled by its
utilization and by the mean power fraction it assigns to its own users. With this storage the plain SINR formula
applies directly and the per-BS power budget can be read off the matrix.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import ScenarioConfig
from .errors import DomainError, StateError

ATTRIBUTES = ("throughput", "delay", "traffic_load", "packet_loss", "mobility_speed", "channel_quality")
QOS_METRICS = ("throughput", "delay", "loss")
INVERTED_METRICS = frozenset({"delay", "loss"})
OBJECTIVES = {"throughput": "sat_throughput", "delay": "sat_delay", "loss": "sat_loss"}
BS_ATTRIBUTES = ("traffic_load",)
TIERS = ("macro", "small")
HOUR = 3600.0

# independent random streams, combined with (seed, tick) into a SeedSequence
_STREAM_LAYOUT, _STREAM_SHADOW, _STREAM_FADING, _STREAM_DEMAND, _STREAM_MOBILITY, _STREAM_TRACE = range(6)


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key)))


def dbm_to_mw(dbm):
    return np.power(10.0, np.asarray(dbm, dtype=float) / 10.0)


def mw_to_dbm(mw):
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(np.asarray(mw, dtype=float))


def path_loss(tier: str, distance):
    """Path loss in dB for a macro or small cell link at ``distance`` meters."""
    d = np.asarray(distance, dtype=float)
    if np.any(~(d > 0)):
        raise DomainError("path loss needs a positive distance")
    if tier == "macro":
        out = 15.3 + 37.6 * np.log10(d)
    elif tier == "small":
        out = 8.46 + 20.0 * np.log10(d) + 0.7 * d
    else:
        raise DomainError(f"unknown tier {tier!r}")
    return float(out) if out.ndim == 0 else out


def data_rate(sinr, bandwidth):
    """Shannon rate B*log2(1+sinr) in bits/s."""
    s = np.asarray(sinr, dtype=float)
    if np.any(s < 0):
        raise DomainError("sinr must be non-negative")
    out = np.asarray(bandwidth, dtype=float) * np.log2(1.0 + s)
    return float(out) if out.ndim == 0 else out


def qos_satisfaction(achieved, required, metric: str = "throughput"):
    """Satisfaction ratio; values >= 1 mean the requirement is met.

    Delay and loss are smaller-is-better, so they are scored as
    required/achieved.
    """
    req = np.asarray(required, dtype=float)
    if np.any(~(req > 0)):
        raise DomainError("QoS requirement must be positive")
    ach = np.asarray(achieved, dtype=float)
    if metric in INVERTED_METRICS:
        with np.errstate(divide="ignore"):
            out = np.where(ach > 0, req / np.where(ach > 0, ach, 1.0), np.inf)
    else:
        out = ach / req
    return float(out) if np.ndim(out) == 0 else out


def award(satisfaction: dict, weights: np.ndarray, cap: float = 2.0):
    """Weighted capped satisfaction, one value per user."""
    total = 0.0
    for n, metric in enumerate(QOS_METRICS):
        total = total + weights[..., n] * np.minimum(satisfaction[metric], cap)
    return total


@dataclass(frozen=True)
class BaseStation:
    id: int
    tier: str
    position: tuple
    max_power_dbm: float
    coverage_radius: float
    capacity_bps: float
    slots: int = 1

    def __post_init__(self):
        if self.tier not in TIERS:
            raise DomainError(f"unknown tier {self.tier!r}")
        if not self.capacity_bps > 0:
            raise DomainError("capacity must be positive")
        if self.slots < 1:
            raise DomainError("a base station needs at least one slot")

    @classmethod
    def default(cls, id: int, tier: str, position, **overrides) -> "BaseStation":
        base = {"macro": dict(max_power_dbm=40.0, coverage_radius=300.0, capacity_bps=60e6, slots=32),
                "small": dict(max_power_dbm=17.0, coverage_radius=50.0, capacity_bps=30e6, slots=16)}
        if tier not in base:
            raise DomainError(f"unknown tier {tier!r}")
        params = {**base[tier], **overrides}
        return cls(id=id, tier=tier, position=tuple(map(float, position)), **params)

    @property
    def max_power_mw(self) -> float:
        return float(dbm_to_mw(self.max_power_dbm))


@dataclass
class DemandProfile:
    base_rate: float
    daily_amplitude: float = 0.0
    weekly_amplitude: float = 0.0
    noise_scale: float = 0.0
    phase_h: float = 0.0

    def mean(self, t):
        t = np.asarray(t, dtype=float) + self.phase_h
        return self.base_rate * (1.0 + self.daily_amplitude * np.sin(2 * np.pi * t / 24.0)
                                 + self.weekly_amplitude * np.sin(2 * np.pi * t / 168.0))


@dataclass
class UserEquipment:
    """A user with static QoS targets.

    ``requirements['throughput']`` is the fraction of the instantaneous demand
    that must be carried; delay is in seconds and loss is a ratio.
    """

    id: int
    home: tuple
    roam_radius: float
    requirements: dict
    weights: dict
    demand: DemandProfile
    trajectory: list = field(default_factory=list)

    def __post_init__(self):
        if abs(sum(self.weights.values()) - 1.0) > 1e-9:
            raise DomainError("QoS weights must sum to 1")
        for metric, value in self.requirements.items():
            if not value > 0:
                raise DomainError(f"requirement for {metric} must be positive")


@dataclass
class ChannelModel:
    bandwidth_hz: float = 20e6
    noise_dbm: float = -104.0
    noise_figure_db: float = 5.0
    shadowing_std_db: float = 8.0
    seed: int = 0
    fading_draws: int = 16

    def __post_init__(self):
        if not self.bandwidth_hz > 0:
            raise DomainError("bandwidth must be positive")

    @property
    def noise_mw(self) -> float:
        return float(dbm_to_mw(self.noise_dbm + self.noise_figure_db))

    def shadowing_db(self, n_users: int, n_bs: int) -> np.ndarray:
        return self.shadowing_std_db * _rng(self.seed, _STREAM_SHADOW).standard_normal((n_users, n_bs))

    def fading(self, tick: int, shape) -> np.ndarray:
        """Rayleigh power gains with unit mean, ``fading_draws`` per tick (leading axis).

        With zero draws the channel is its mean gain: a single all-ones draw.
        """
        if self.fading_draws == 0:
            return np.ones((1,) + tuple(shape))
        return _rng(self.seed, _STREAM_FADING, tick).exponential(1.0, size=(self.fading_draws,) + tuple(shape))


@dataclass(frozen=True)
class Policy:
    """Serving BS per user (-1 for none) and slot power as a fraction of Pmax/K."""

    serving: np.ndarray
    power_fraction: np.ndarray


@dataclass(frozen=True)
class NetworkSnapshot:
    tick: int
    gain: np.ndarray
    association: np.ndarray
    power_mw: np.ndarray
    noise_mw: np.ndarray
    bandwidth_hz: np.ndarray
    share: np.ndarray
    demand: np.ndarray
    sinr: np.ndarray
    rate: np.ndarray
    achieved: dict
    satisfaction: dict
    load_bps: np.ndarray
    utilization: np.ndarray
    positions: np.ndarray
    speed: np.ndarray
    potential: np.ndarray
    serving: np.ndarray

    @property
    def power_dbm(self) -> np.ndarray:
        return mw_to_dbm(self.power_mw)

    @property
    def carried(self) -> np.ndarray:
        return np.minimum(self.rate, self.demand)

    def unsatisfied(self) -> np.ndarray:
        return np.any(np.stack([self.satisfaction[m] < 1.0 for m in QOS_METRICS]), axis=0)


def _freeze(*arrays):
    for a in arrays:
        if isinstance(a, np.ndarray):
            a.flags.writeable = False


def sinr(user: int, bs: int, snapshot: NetworkSnapshot) -> float:
    """Linear SINR of ``user`` on ``bs`` from the powers stored in ``snapshot``."""
    if not snapshot.association[user, bs]:
        raise StateError(f"user {user} is not associated with BS {bs}")
    row_p = snapshot.power_mw[user]
    row_g = snapshot.gain[user]
    signal = row_p[bs] * row_g[bs]
    mask = np.ones(row_p.shape, dtype=bool)
    mask[bs] = False
    interference = float(np.sum(row_p[mask] * row_g[mask]))
    return float(signal / (interference + snapshot.noise_mw[user]))


def qos_from_rate(rate, demand, traffic) -> dict:
    """Achieved throughput, delay and loss for the given rate and demand."""
    rate = np.asarray(rate, dtype=float)
    demand = np.asarray(demand, dtype=float)
    headroom = rate - demand
    with np.errstate(divide="ignore", invalid="ignore"):
        delay = np.where(headroom > 0, traffic.packet_bits / np.where(headroom > 0, headroom, 1.0), traffic.max_delay_s)
        excess = np.where(rate > 0, demand / np.where(rate > 0, rate, 1.0) - 1.0, 1.0)
    delay = np.minimum(delay, traffic.max_delay_s)
    loss = np.minimum(traffic.base_loss + np.clip(excess, 0.0, 1.0) * traffic.loss_scale, 1.0)
    return {"throughput": rate, "delay": delay, "loss": loss}


def satisfaction_from_rate(rate, demand, requirements: np.ndarray, traffic) -> dict:
    """Satisfaction per metric; ``requirements`` columns follow QOS_METRICS."""
    achieved = qos_from_rate(rate, demand, traffic)
    required_thr = requirements[..., 0] * np.maximum(demand, 1e-9)
    return {
        "throughput": qos_satisfaction(achieved["throughput"], required_thr, "throughput"),
        "delay": qos_satisfaction(achieved["delay"], requirements[..., 1], "delay"),
        "loss": qos_satisfaction(achieved["loss"], requirements[..., 2], "loss"),
    }


class Scenario:
    """Mutable simulator state; ``step`` is the only writer."""

    def __init__(self, config: ScenarioConfig | None = None, seed: int | None = None):
        self.config = config or ScenarioConfig()
        self.seed = int(self.config.seed if seed is None else seed)
        cfg = self.config
        self.channel = ChannelModel(cfg.channel.bandwidth_hz, cfg.channel.noise_dbm, cfg.channel.noise_figure_db,
                                    cfg.channel.shadowing_std_db, seed=self.seed,
                                    fading_draws=cfg.channel.fading_draws)
        self.traffic = cfg.traffic
        self.stations = self._build_stations()
        self.users = self._build_users()
        M, N = len(self.stations), len(self.users)
        self.bs_pos = np.array([s.position for s in self.stations], dtype=float)
        self.is_macro = np.array([s.tier == "macro" for s in self.stations])
        self.pmax_mw = np.array([s.max_power_mw for s in self.stations])
        self.slots = np.array([s.slots for s in self.stations], dtype=int)
        self.capacity = np.array([s.capacity_bps for s in self.stations], dtype=float)
        self.radius = np.array([s.coverage_radius for s in self.stations], dtype=float)
        self.homes = np.array([u.home for u in self.users], dtype=float).reshape(N, 2)
        self.roam = np.array([u.roam_radius for u in self.users], dtype=float)
        self.requirements = np.array([[u.requirements[m] for m in QOS_METRICS] for u in self.users]).reshape(N, 3)
        self.weights = np.array([[u.weights[m] for m in QOS_METRICS] for u in self.users]).reshape(N, 3)
        self.base_rate = np.array([u.demand.base_rate for u in self.users])
        self.phase = np.array([u.demand.phase_h for u in self.users])
        self.shadow_db = self.channel.shadowing_db(N, M)
        self.positions = self.homes.copy()
        self.waypoints = self.homes.copy()
        self.tick = -1
        self._draws = None
        self.snapshot: NetworkSnapshot | None = None

    @property
    def n_users(self) -> int:
        return len(self.users)

    @property
    def n_bs(self) -> int:
        return len(self.stations)

    def _build_stations(self) -> list:
        net = self.config.network
        out = []
        tiers = (("macro", net.macro_positions, net.macro), ("small", net.small_positions, net.small))
        for tier, positions, tier_cfg in tiers:
            for pos in positions:
                out.append(BaseStation(id=len(out), tier=tier, position=tuple(map(float, pos)),
                                       max_power_dbm=tier_cfg.max_power_dbm, coverage_radius=tier_cfg.coverage_radius,
                                       capacity_bps=tier_cfg.capacity_bps, slots=tier_cfg.slots))
        return out

    def _build_users(self) -> list:
        net, tr, qos = self.config.network, self.config.traffic, self.config.qos
        rng = _rng(self.seed, _STREAM_LAYOUT)
        width, height = net.arena
        smalls = np.array(net.small_positions, dtype=float).reshape(-1, 2)
        users = []
        for i in range(net.n_users):
            if len(smalls) and rng.random() < net.hotspot_fraction:
                centre = smalls[rng.integers(len(smalls))]
                home = centre + _disc(rng, net.hotspot_radius)
                roam = 0.5 * net.hotspot_radius
            else:
                home = np.array([rng.uniform(0, width), rng.uniform(0, height)])
                roam = net.roam_radius
            home = np.clip(home, [0.0, 0.0], [width, height])
            w = rng.dirichlet(np.full(3, qos.weight_concentration))
            w = w / w.sum()
            w[-1] = 1.0 - w[0] - w[1]
            users.append(UserEquipment(
                id=i, home=(float(home[0]), float(home[1])), roam_radius=float(roam),
                requirements={"throughput": 1.0,
                              "delay": float(rng.uniform(qos.delay_min_s, qos.delay_max_s)),
                              "loss": float(rng.uniform(qos.loss_min, qos.loss_max))},
                weights=dict(zip(QOS_METRICS, map(float, w))),
                demand=DemandProfile(base_rate=float(rng.uniform(tr.base_rate_min, tr.base_rate_max)),
                                     daily_amplitude=tr.daily_amplitude, weekly_amplitude=tr.weekly_amplitude,
                                     noise_scale=tr.noise_scale, phase_h=float(rng.uniform(-1.5, 1.5))),
            ))
        return users

    def distances(self, positions=None) -> np.ndarray:
        pos = self.positions if positions is None else positions
        d = np.linalg.norm(pos[:, None, :] - self.bs_pos[None, :, :], axis=2)
        return np.maximum(d, 1.0)

    def mean_gain(self, positions=None) -> np.ndarray:
        d = self.distances(positions)
        pl = np.where(self.is_macro[None, :], 15.3 + 37.6 * np.log10(d), 8.46 + 20.0 * np.log10(d) + 0.7 * d)
        return dbm_to_mw(-(pl + self.shadow_db))

    def potential_links(self, positions=None) -> np.ndarray:
        d = self.distances(positions)
        x = d <= self.radius[None, :]
        orphan = ~x.any(axis=1)
        if orphan.any():
            x[orphan, np.argmin(d[orphan], axis=1)] = True
        return x

    def demand_at(self, t: int, noise: np.ndarray | None = None) -> np.ndarray:
        tr = self.traffic
        tt = t + self.phase
        mean = self.base_rate * (1.0 + tr.daily_amplitude * np.sin(2 * np.pi * tt / 24.0)
                                 + tr.weekly_amplitude * np.sin(2 * np.pi * tt / 168.0))
        if noise is not None:
            mean = mean + self.base_rate * tr.noise_scale * noise
        return np.maximum(mean, 0.01 * self.base_rate)

    def legacy_policy(self, mean_gain=None, potential=None) -> Policy:
        """Strongest mean received power among in-range stations, full slot power."""
        g = self.mean_gain() if mean_gain is None else mean_gain
        x = self.potential_links() if potential is None else potential
        rx = np.where(x, self.pmax_mw[None, :] * g, -np.inf)
        serving = np.argmax(rx, axis=1)
        return Policy(serving=serving, power_fraction=np.ones(self.n_users))

    def _advance(self):
        t = self.tick + 1
        N = self.n_users
        rng = _rng(self.seed, _STREAM_MOBILITY, t)
        speed = rng.uniform(0.0, self.config.network.max_speed, size=N)
        target = self.waypoints
        gap = target - self.positions
        dist = np.linalg.norm(gap, axis=1)
        travel = speed * HOUR
        reached = travel >= dist
        frac = np.where(reached, 1.0, travel / np.maximum(dist, 1e-12))
        self.positions = self.positions + gap * frac[:, None]
        radius = self.roam * np.sqrt(rng.random(N))
        angle = rng.uniform(0.0, 2 * np.pi, N)
        fresh = self.homes + np.stack([radius * np.cos(angle), radius * np.sin(angle)], axis=1)
        self.waypoints = np.where(reached[:, None], fresh, self.waypoints)
        width, height = self.config.network.arena
        self.positions = np.clip(self.positions, [0.0, 0.0], [width, height])
        moved = np.where(reached, dist, travel) / HOUR
        fading = self.channel.fading(t, (N, self.n_bs))
        demand_noise = _rng(self.seed, _STREAM_DEMAND, t).standard_normal(N)
        self.tick = t
        self._draws = dict(speed=moved, fading=fading, demand=self.demand_at(t, demand_noise))
        self.snapshot = self.evaluate(None)
        for u, p in zip(self.users, self.positions):
            u.trajectory.append((float(p[0]), float(p[1])))

    def step(self, t: int) -> NetworkSnapshot:
        """Advance to tick ``t`` under the legacy policy and return its snapshot."""
        if t < 0:
            raise DomainError("tick must be non-negative")
        if t < self.tick:
            raise StateError(f"scenario already at tick {self.tick}; cannot rewind to {t}")
        while self.tick < t:
            self._advance()
        return self.snapshot

    def evaluate(self, policy: Policy | None) -> NetworkSnapshot:
        """Snapshot of the current tick under ``policy`` (legacy when None), same random draws."""
        if self._draws is None:
            raise StateError("call step() before evaluate()")
        mean_g = self.mean_gain()
        potential = self.potential_links()
        if policy is None:
            policy = self.legacy_policy(mean_g, potential)
        gain = mean_g[None] * self._draws["fading"]
        return build_snapshot(self, self.tick, gain, self._draws["demand"], policy, potential,
                              self.positions.copy(), self._draws["speed"])

    def apply(self, policy: Policy) -> NetworkSnapshot:
        snap = self.evaluate(policy)
        problems = check_constraints(snap, self.pmax_mw, self.slots)
        if problems:
            raise StateError("policy violates constraints: " + "; ".join(problems))
        return snap


def _disc(rng, radius):
    r = radius * math.sqrt(rng.random())
    a = rng.uniform(0, 2 * math.pi)
    return np.array([r * math.cos(a), r * math.sin(a)])


def build_snapshot(scn: Scenario, tick: int, gain: np.ndarray, demand: np.ndarray, policy: Policy,
                   potential: np.ndarray, positions: np.ndarray, speed: np.ndarray) -> NetworkSnapshot:
    """``gain`` is (N, M) or a stack of per-draw gains (F, N, M); rates are averaged over draws."""
    draws = np.asarray(gain, dtype=float)
    if draws.ndim == 2:
        draws = draws[None]
    _, N, M = draws.shape
    gain = draws.mean(axis=0)
    serving = np.asarray(policy.serving, dtype=int)
    frac = np.asarray(policy.power_fraction, dtype=float)
    served = serving >= 0
    srv = np.where(served, serving, 0)
    counts = np.bincount(serving[served], minlength=M)
    k_serv = scn.slots[srv].astype(float)
    share = np.where(served, np.minimum(1.0, k_serv / np.maximum(counts[srv], 1)), 0.0)
    load = np.bincount(serving[served], weights=demand[served], minlength=M).astype(float)
    util = np.clip(load / scn.capacity, 0.0, 1.0)
    # a BS radiates in proportion to its utilization and the mean power fraction of its users
    frac_sum = np.bincount(serving[served], weights=frac[served], minlength=M)
    activity = np.where(counts > 0, frac_sum / np.maximum(counts, 1), 1.0)
    leak = share[:, None] * (scn.pmax_mw * util * activity)[None, :] / k_serv[:, None]
    power = np.where(served[:, None], leak, 0.0)
    rows = np.flatnonzero(served)
    power[rows, srv[rows]] = share[rows] * frac[rows] * scn.pmax_mw[srv[rows]] / k_serv[rows]
    noise = np.where(served, share * scn.channel.noise_mw / k_serv, scn.channel.noise_mw)
    bandwidth = np.where(served, share * scn.channel.bandwidth_hz / k_serv, 0.0)
    received = power[None] * draws
    signal = np.where(served, received[:, np.arange(N), srv], 0.0)
    interference = received.sum(axis=2) - signal
    per_draw = np.where(served, signal / (interference + noise), 0.0)
    rate = np.mean(bandwidth * np.log2(1.0 + per_draw), axis=0)
    # SINR that would give the hour-average rate in one draw
    with np.errstate(divide="ignore", invalid="ignore"):
        sinr_v = np.where(served & (bandwidth > 0), np.exp2(rate / np.where(bandwidth > 0, bandwidth, 1.0)) - 1.0, 0.0)
    achieved = qos_from_rate(rate, demand, scn.traffic)
    sat = satisfaction_from_rate(rate, demand, scn.requirements, scn.traffic)
    assoc = np.zeros((N, M), dtype=np.int8)
    assoc[rows, srv[rows]] = 1
    snap = NetworkSnapshot(tick=tick, gain=gain, association=assoc, power_mw=power, noise_mw=noise,
                           bandwidth_hz=bandwidth, share=share, demand=np.asarray(demand, dtype=float).copy(),
                           sinr=sinr_v, rate=rate, achieved=achieved, satisfaction=sat, load_bps=load,
                           utilization=util, positions=positions, speed=np.asarray(speed, dtype=float).copy(),
                           potential=potential, serving=np.where(served, serving, -1))
    _freeze(gain, assoc, power, noise, bandwidth, share, snap.demand, sinr_v, rate, load, util, positions,
            snap.speed, potential, snap.serving, *achieved.values(), *sat.values())
    return snap


def check_constraints(snap: NetworkSnapshot, pmax_mw: np.ndarray, slots: np.ndarray) -> list[str]:
    """Returns descriptions of violated association/power constraints (empty when feasible)."""
    problems = []
    a = snap.association
    if not np.isin(a, (0, 1)).all():
        problems.append("association entries must be binary")
    if (a.sum(axis=1) > 1).any():
        problems.append("a user is associated with more than one BS")
    occupied = (a * snap.share[:, None]).sum(axis=0)
    if (occupied > slots + 1e-9).any():
        problems.append("a BS has more occupied slots than it owns")
    if (snap.power_mw < 0).any():
        problems.append("negative transmit power")
    used = (a * snap.power_mw).sum(axis=0)
    if (used > pmax_mw * (1 + 1e-9)).any():
        problems.append("per-BS power budget exceeded")
    return problems


def demand_series(profile: DemandProfile, ticks, seed: int = 0) -> np.ndarray:
    """Demand of a single profile over ``ticks`` with seeded Gaussian noise."""
    t = np.asarray(ticks, dtype=float)
    noise = _rng(seed, _STREAM_DEMAND).standard_normal(t.shape)
    d = profile.mean(t) + profile.base_rate * profile.noise_scale * noise
    return np.maximum(d, 0.01 * profile.base_rate)


# ---------------------------------------------------------------- traces

@dataclass
class AttributeSeries:
    entity: str
    attribute: str
    timestamps: np.ndarray
    values: np.ndarray
    beta_s: float
    sequence: np.ndarray

    def __post_init__(self):
        self.timestamps = np.asarray(self.timestamps, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        self.sequence = np.asarray(self.sequence, dtype=int)
        if self.timestamps.shape != self.values.shape or self.sequence.shape != self.values.shape:
            raise DomainError("timestamps, values and sequence must align")
        if len(self.timestamps) > 1 and not np.all(np.diff(self.timestamps) > 0):
            raise DomainError(f"timestamps of {self.entity}/{self.attribute} must be strictly increasing")

    def __len__(self):
        return len(self.values)

    def upto(self, limit_s: float) -> "AttributeSeries":
        keep = self.timestamps <= limit_s
        return AttributeSeries(self.entity, self.attribute, self.timestamps[keep], self.values[keep],
                               self.beta_s, self.sequence[keep])


@dataclass
class ClockTruth:
    skew: float
    offset_s: float

    def corrupt(self, t):
        return (1.0 + self.skew) * np.asarray(t, dtype=float) + self.offset_s


@dataclass
class ExchangeRecord:
    """Two-way timestamp exchange: controller send/receive and device receive/send."""

    t_con_tx: float
    t_dev_rx: float
    t_dev_tx: float
    t_con_rx: float


@dataclass
class TraceBundle:
    series: dict
    clock_truth: dict
    exchanges: dict
    beta_s: dict
    true_times: dict = field(default_factory=dict)
    truth: dict = field(default_factory=dict)
    duration_h: int = 0
    warnings: list = field(default_factory=list)

    def entities(self) -> list:
        return sorted({e for e, _ in self.series})

    def get(self, entity: str, attribute: str) -> AttributeSeries:
        return self.series[(entity, attribute)]


def user_entity(i: int) -> str:
    return f"ue{i:03d}"


def bs_entity(j: int) -> str:
    return f"bs{j:02d}"


def entity_index(entity: str) -> int:
    return int(entity[2:])


def simulate(scn: Scenario, duration: int) -> dict:
    """Runs ticks 0..duration-1 under the legacy policy and returns hourly truth arrays."""
    N, M = scn.n_users, scn.n_bs
    keys = ATTRIBUTES + tuple(OBJECTIVES.values())
    out = {k: np.empty((duration, N)) for k in keys}
    out["bs_traffic_load"] = np.empty((duration, M))
    out["serving"] = np.empty((duration, N), dtype=int)
    out["rate"] = np.empty((duration, N))
    for t in range(duration):
        s = scn.step(t)
        out["throughput"][t] = s.carried
        out["delay"][t] = s.achieved["delay"]
        out["traffic_load"][t] = s.demand
        out["packet_loss"][t] = s.achieved["loss"]
        out["mobility_speed"][t] = s.speed
        with np.errstate(divide="ignore"):
            out["channel_quality"][t] = 10 * np.log10(np.maximum(s.sinr, 1e-12))
        for metric, name in OBJECTIVES.items():
            out[name][t] = s.satisfaction[metric]
        out["bs_traffic_load"][t] = s.load_bps
        out["serving"][t] = s.serving
        out["rate"][t] = s.rate
    return out


def generate_trace(scn: Scenario, duration: int, clock_corruption: bool = True,
                   stl_periods=(24, 168)) -> TraceBundle:
    """Simulates ``duration`` hours and emits per-device series with corrupted clocks."""
    duration = int(duration)
    if scn.traffic.weekly_amplitude > 0 and duration < 2 * 168:
        raise DomainError("weekly seasonality needs a trace of at least two weeks (336 h)")
    if scn.tick >= 0:
        raise StateError("generate_trace needs a fresh scenario")
    truth = simulate(scn, duration)
    clk = scn.config.clock
    corrupt = clock_corruption and clk.enabled
    rng = _rng(scn.seed, _STREAM_TRACE)
    bundle = TraceBundle(series={}, clock_truth={}, exchanges={}, beta_s={}, truth=truth, duration_h=duration)
    if stl_periods and duration < max(stl_periods):
        bundle.warnings.append(f"trace of {duration} h is shorter than the longest STL period {max(stl_periods)} h")
    devices = [(user_entity(i), i, ATTRIBUTES + tuple(OBJECTIVES.values()), "user") for i in range(scn.n_users)]
    devices += [(bs_entity(j), j, BS_ATTRIBUTES, "bs") for j in range(scn.n_bs)]
    for entity, idx, attrs, kind in devices:
        beta_h = int(rng.choice(clk.sampling_intervals_h))
        start = int(rng.integers(beta_h))
        ticks = np.arange(start, duration, beta_h)
        seq = (ticks - start) // beta_h
        keep = rng.random(len(ticks)) >= clk.missing_prob
        keep[0] = True
        ticks, seq = ticks[keep], seq[keep]
        skew = rng.uniform(-clk.max_skew_ppm, clk.max_skew_ppm) * 1e-6 if corrupt else 0.0
        offset = rng.uniform(-clk.max_offset_s, clk.max_offset_s) if corrupt else 0.0
        truth_clock = ClockTruth(skew=float(skew), offset_s=float(offset))
        jitter = rng.uniform(-clk.jitter_s, clk.jitter_s, size=len(ticks)) if clk.jitter_s > 0 else 0.0
        true_t = ticks * HOUR
        stamps = truth_clock.corrupt(true_t) + jitter
        link = rng.uniform(clk.link_delay_min_s, clk.link_delay_max_s)
        bundle.exchanges[entity] = two_way_exchange(truth_clock, true_t[0], link)
        bundle.clock_truth[entity] = truth_clock
        bundle.beta_s[entity] = beta_h * HOUR
        bundle.true_times[entity] = true_t
        for attr in attrs:
            source = truth["bs_traffic_load"][:, idx] if kind == "bs" else truth[attr][:, idx]
            bundle.series[(entity, attr)] = AttributeSeries(entity, attr, stamps, source[ticks], beta_h * HOUR, seq)
    return bundle


def two_way_exchange(clock: ClockTruth, t_send: float, link_delay: float, turnaround: float = 1e-3,
                     jitter=(0.0, 0.0)) -> ExchangeRecord:
    """Simulated exchange over a symmetric link; ``jitter`` perturbs the two device stamps."""
    arrive = t_send + link_delay
    t_dev_rx = float(clock.corrupt(arrive)) + jitter[0]
    t_dev_tx = t_dev_rx + turnaround
    leave = arrive + turnaround / (1.0 + clock.skew)
    return ExchangeRecord(t_con_tx=float(t_send), t_dev_rx=t_dev_rx, t_dev_tx=t_dev_tx + jitter[1],
                          t_con_rx=float(leave + link_delay))


def write_trace_bundle(bundle: TraceBundle, directory) -> list:
    """One CSV per series plus ``clock_truth.json`` and ``manifest.json``. Returns written paths."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    manifest = {"duration_h": bundle.duration_h, "warnings": list(bundle.warnings), "series": [], "devices": {}}
    for (entity, attr), s in sorted(bundle.series.items()):
        path = out / f"{entity}__{attr}.csv"
        lines = ["entity_id,attribute,timestamp_s,value"]
        lines += [f"{entity},{attr},{t!r},{v!r}" for t, v in zip(s.timestamps.tolist(), s.values.tolist())]
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        written.append(path)
        manifest["series"].append({"entity_id": entity, "attribute": attr, "file": path.name,
                                   "sequence": s.sequence.tolist()})
    for entity in sorted(bundle.exchanges):
        ex = bundle.exchanges[entity]
        manifest["devices"][entity] = {"beta_s": bundle.beta_s[entity], "exchange": [ex.t_con_tx, ex.t_dev_rx,
                                                                                     ex.t_dev_tx, ex.t_con_rx]}
    truth = {e: {"skew_ppm": c.skew * 1e6, "offset_s": c.offset_s} for e, c in sorted(bundle.clock_truth.items())}
    for name, payload in (("clock_truth.json", truth), ("manifest.json", manifest)):
        path = out / name
        path.write_text(json.dumps(payload, sort_keys=True, indent=1) + "\n", encoding="utf-8")
        written.append(path)
    return written


def read_trace_bundle(directory) -> TraceBundle:
    import csv

    src = Path(directory)
    manifest = json.loads((src / "manifest.json").read_text(encoding="utf-8"))
    truth = json.loads((src / "clock_truth.json").read_text(encoding="utf-8"))
    bundle = TraceBundle(series={}, clock_truth={}, exchanges={}, beta_s={}, duration_h=manifest["duration_h"],
                         warnings=list(manifest["warnings"]))
    for entity, dev in manifest["devices"].items():
        bundle.beta_s[entity] = dev["beta_s"]
        bundle.exchanges[entity] = ExchangeRecord(*dev["exchange"])
    for entity, c in truth.items():
        bundle.clock_truth[entity] = ClockTruth(skew=c["skew_ppm"] * 1e-6, offset_s=c["offset_s"])
    for item in manifest["series"]:
        with open(src / item["file"], newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        stamps = [float(r["timestamp_s"]) for r in rows]
        values = [float(r["value"]) for r in rows]
        entity = item["entity_id"]
        bundle.series[(entity, item["attribute"])] = AttributeSeries(
            entity, item["attribute"], stamps, values, bundle.beta_s[entity], item["sequence"])
    return bundle


def synthetic_attributes(seed: int, hours: int = 696) -> dict:
    """Seeded stand-ins for four twin targets.

    Throughput, delay and loss follow a peaked daily pattern with a slow
    trend and AR(1) noise. ``load`` has no seasonal pattern but is driven by
    ``neighbor_load`` two hours earlier.
    """
    rng = np.random.default_rng(seed)
    t = np.arange(hours, dtype=float)
    phase = rng.uniform(0, 2 * np.pi)
    # peaked busy-hour profile (von Mises bump), scaled to zero mean and unit std
    bump = np.exp(2.0 * np.cos(2 * np.pi * t / 24.0 + phase))
    daily = (bump - bump.mean()) / bump.std()
    weekly = np.sin(2 * np.pi * t / 168.0 + rng.uniform(0, 2 * np.pi))

    def ar_noise(phi, sigma):
        e = rng.normal(0, sigma, hours)
        out = np.empty(hours)
        out[0] = e[0]
        for k in range(1, hours):
            out[k] = phi * out[k - 1] + e[k]
        return out

    thr = 10.0 + 0.002 * t + 3.0 * daily + 0.5 * weekly + ar_noise(0.5, 0.4)
    delay = 30.0 - 5.0 * daily + 1.0 * weekly + ar_noise(0.5, 0.8)
    loss = 0.01 + 0.004 * daily + ar_noise(0.3, 0.0008)
    neighbor = 5.0 + ar_noise(0.7, 1.0)
    load = np.empty(hours)
    e = rng.normal(0, 0.2, hours)
    load[:2] = neighbor[:2]
    for k in range(2, hours):
        load[k] = 1.0 + 0.3 * load[k - 1] + 0.6 * neighbor[k - 2] + e[k]
    return {"throughput": thr, "delay": delay, "loss": loss, "load": load, "neighbor_load": neighbor}
