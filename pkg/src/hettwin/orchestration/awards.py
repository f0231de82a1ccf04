"""Predicted assignment awards over a discrete power grid."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DomainError
from ..hetnet_sim import QOS_METRICS, satisfaction_from_rate


def power_grid(levels: int = 5, min_fraction: float = 0.1) -> np.ndarray:
    if levels < 1 or not 0 < min_fraction <= 1:
        raise DomainError("need at least one level and a minimum fraction in (0, 1]")
    return np.linspace(min_fraction, 1.0, levels) if levels > 1 else np.array([1.0])


@dataclass
class AwardMatrix:
    users: np.ndarray
    bss: np.ndarray
    awards: np.ndarray
    power_fraction: np.ndarray
    grid: np.ndarray
    satisfaction: dict

    def best_power(self, row: int, col: int) -> float:
        return float(self.power_fraction[row, col])


def fading_quantiles(samples: int) -> np.ndarray:
    """Equiprobable points of a unit-mean exponential (Rayleigh power) distribution."""
    if samples < 1:
        raise DomainError("need at least one fading sample")
    q = (np.arange(samples) + 0.5) / samples
    return -np.log1p(-q)


def link_rates(scn, users, bss, gain, load, fractions, activity=None, fading=None, share=None) -> np.ndarray:
    """Rate of each (user, BS, power level[, fading draw]) assuming one full slot per user.

    Interference from every other BS scales with its utilization
    load/capacity and its mean power fraction ``activity`` (1 when omitted),
    the same rule the simulator applies. ``fading`` multiplies the serving
    link gain and adds a trailing axis. ``share`` is the expected time share
    of a slot at each candidate BS (1 when omitted).
    """
    users = np.asarray(users, dtype=int)
    bss = np.asarray(bss, dtype=int)
    g = np.asarray(gain, dtype=float)
    util = np.clip(np.asarray(load, dtype=float) / scn.capacity, 0.0, 1.0)
    act = np.ones(scn.n_bs) if activity is None else np.asarray(activity, dtype=float)
    k = scn.slots[bss].astype(float)
    leak_all = g * (scn.pmax_mw * util * act)[None, :]
    total_leak = leak_all.sum(axis=1)
    own_leak = leak_all[:, bss]
    interference = (total_leak[:, None] - own_leak) / k[None, :]
    noise = scn.channel.noise_mw / k
    bw = scn.channel.bandwidth_hz / k
    if share is not None:
        bw = bw * np.asarray(share, dtype=float)
    signal = np.asarray(fractions, dtype=float)[None, None, :] * (scn.pmax_mw[bss] / k)[None, :, None] \
        * g[:, bss][:, :, None]
    sinr = signal / (interference + noise[None, :])[:, :, None]
    if fading is not None:
        sinr = sinr[..., None] * np.asarray(fading, dtype=float)
        return bw[None, :, None, None] * np.log2(1.0 + sinr)
    return bw[None, :, None] * np.log2(1.0 + sinr)


def predict_awards(scn, users, bss, demand, gain, load, grid, cap: float = 2.0, potential=None,
                   fading_samples: int = 0, tolerance: float = 0.0, activity=None, share=None,
                   target: float | None = None) -> AwardMatrix:
    """Award of each (user, BS) pair at its chosen power level.

    ``demand`` is the forecast per user, ``gain`` the (users x all BSs)
    link-gain estimate and ``load`` the forecast per BS. Each satisfaction
    is capped at ``cap``. With ``fading_samples`` > 0 the rate is the mean
    over that many equiprobable Rayleigh draws on the serving link. The
    chosen level is the lowest power whose award is within ``tolerance`` of
    the best one. Out-of-range pairs get -inf.
    """
    users = np.asarray(users, dtype=int)
    bss = np.asarray(bss, dtype=int)
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise DomainError("power grid is empty")
    if tolerance < 0:
        raise DomainError("tolerance must be non-negative")
    demand = np.asarray(demand, dtype=float)
    if demand.shape != users.shape:
        raise DomainError("one demand forecast per user is required")
    if not np.all(np.isfinite(demand)):
        raise DomainError("demand forecasts must be finite")
    x = scn.potential_links()[np.ix_(users, bss)] if potential is None else np.asarray(potential, dtype=bool)
    fading = fading_quantiles(fading_samples) if fading_samples else None
    rates = link_rates(scn, users, bss, gain, load, grid, activity, fading, share)
    if fading is not None:
        rates = rates.mean(axis=3)
    req = scn.requirements[users][:, None, None]
    d = np.broadcast_to(demand[:, None, None], rates.shape)
    sat = satisfaction_from_rate(rates, d, np.broadcast_to(req, rates.shape + (3,)), scn.traffic)
    w = scn.weights[users]
    total = np.zeros(rates.shape)
    for n, metric in enumerate(QOS_METRICS):
        total += w[:, n, None, None] * np.minimum(sat[metric], cap)
    best = total.max(axis=2)
    # first level within tolerance (and rounding) of the best award: the cheapest adequate power
    level = np.argmax(total >= best[:, :, None] - tolerance - 1e-12, axis=2)
    if target is not None:
        meets = np.all(np.stack([sat[m] >= target for m in QOS_METRICS]), axis=0)
        level = np.where(meets.any(axis=2), np.argmax(meets, axis=2), level)
    chosen_award = np.take_along_axis(total, level[:, :, None], axis=2)[:, :, 0]
    awards = np.where(x, chosen_award, -np.inf)
    fraction = np.where(x, grid[level], 0.0)
    chosen = {m: np.take_along_axis(sat[m], level[:, :, None], axis=2)[:, :, 0] for m in QOS_METRICS}
    return AwardMatrix(users=users, bss=bss, awards=awards, power_fraction=fraction, grid=grid, satisfaction=chosen)
