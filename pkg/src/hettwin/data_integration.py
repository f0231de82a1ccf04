"""Device-level data integration: normalization, clock correction and GP resampling."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .errors import DomainError, NumericalError
from .hetnet_sim import AttributeSeries, ExchangeRecord


@dataclass(frozen=True)
class Normalized:
    values: np.ndarray
    mean: float
    std: float

    def inverse(self, z=None) -> np.ndarray:
        z = self.values if z is None else np.asarray(z, dtype=float)
        return z * self.std + self.mean


def normalize(series) -> Normalized:
    x = np.asarray(series, dtype=float)
    mu = float(x.mean())
    sd = float(x.std())
    if not sd > 0:
        raise DomainError("cannot normalize a zero-variance series")
    return Normalized(values=(x - mu) / sd, mean=mu, std=sd)


@dataclass(frozen=True)
class ClockEstimate:
    """Affine device clock model t' = (1 + skew) t + offset."""

    skew: float = 0.0
    offset: float = 0.0
    window: tuple = (0.0, 0.0)

    def error(self, t):
        return self.skew * np.asarray(t, dtype=float) + self.offset

    def corrupt(self, t):
        return np.asarray(t, dtype=float) + self.error(t)

    def correct(self, t_device):
        return (np.asarray(t_device, dtype=float) - self.offset) / (1.0 + self.skew)


def estimate_clock(timestamps, beta_s: float, exchange: ExchangeRecord, sequence=None) -> ClockEstimate:
    """Skew from the span of the device timestamps, offset from a two-way exchange.

    ``sequence`` holds the nominal sample indices; missing samples are
    handled by dividing the span by the index difference rather than the
    sample count.
    """
    t = np.asarray(timestamps, dtype=float)
    if len(t) < 2:
        raise DomainError("clock estimation needs at least two timestamps")
    seq = np.arange(len(t)) if sequence is None else np.asarray(sequence)
    steps = int(seq[-1] - seq[0])
    if t[-1] == t[0] or steps <= 0:
        raise DomainError("degenerate timestamp span")
    skew = (t[-1] - t[0]) / (beta_s * steps) - 1.0
    raw = ((exchange.t_dev_rx - exchange.t_con_tx) + (exchange.t_dev_tx - exchange.t_con_rx)) / 2.0
    # the exchange measures the error at its own midpoint; refer it back to t = 0
    midpoint = (exchange.t_con_tx + exchange.t_con_rx) / 2.0
    offset = raw - skew * midpoint
    return ClockEstimate(skew=float(skew), offset=float(offset), window=(float(t[0]), float(t[-1])))


def compensate(series: AttributeSeries, estimate: ClockEstimate) -> AttributeSeries:
    """Replaces device timestamps by controller time; values are untouched."""
    return AttributeSeries(series.entity, series.attribute, estimate.correct(series.timestamps), series.values.copy(),
                           series.beta_s, series.sequence.copy())


@dataclass(frozen=True)
class KernelConfig:
    variance: float | None = None
    length_scale: float | None = None
    noise: float = 0.0
    jitter: float = 1e-10
    max_jitter: float = 1e-4


@dataclass
class ResampledSeries:
    entity: str
    attribute: str
    times: np.ndarray
    values: np.ndarray
    variance: np.ndarray
    kernel_variance: float
    length_scale: float
    noise: float


def se_kernel(a, b, variance: float, length_scale: float) -> np.ndarray:
    d = np.asarray(a, dtype=float)[:, None] - np.asarray(b, dtype=float)[None, :]
    return variance * np.exp(-0.5 * (d / length_scale) ** 2)


def _factor(K: np.ndarray, jitter: float, max_jitter: float):
    scale = max(float(np.mean(np.diag(K))), 1e-300)
    eye = np.eye(len(K))
    j = jitter
    while True:
        try:
            c, low = linalg.cho_factor(K + j * scale * eye, lower=True, check_finite=False)
            # a singular matrix can factor with a pivot that is pure rounding residue
            if np.min(np.diag(c)) ** 2 < 1e-13 * scale:
                raise linalg.LinAlgError("numerically singular")
            return c, low
        except linalg.LinAlgError:
            if j >= max_jitter:
                cond = np.linalg.cond(K)
                raise NumericalError(f"kernel matrix not positive definite after jitter {j:g}; "
                                     f"condition estimate {cond:.3g}") from None
            j = j * 10 if j > 0 else 1e-12


def gpr_resample(times, values, targets, cfg: KernelConfig | None = None, entity: str = "", attribute: str = ""):
    """Gaussian-process posterior mean and variance at ``targets``.

    The prior mean is the sample mean. Length-scale defaults to the median
    spacing of the observations; signal variance defaults to the sample
    variance.
    """
    cfg = cfg or KernelConfig()
    t = np.asarray(times, dtype=float)
    y = np.asarray(values, dtype=float)
    ts = np.asarray(targets, dtype=float)
    if len(t) < 3:
        raise DomainError("GP resampling needs at least 3 observations")
    if cfg.noise < 0:
        raise DomainError("noise variance must be non-negative")
    ell = cfg.length_scale if cfg.length_scale is not None else float(np.median(np.diff(np.sort(t))))
    if not ell > 0:
        raise DomainError("length-scale must be positive")
    mu = float(y.mean())
    var = cfg.variance if cfg.variance is not None else float(y.var())
    if not var > 0:
        var = 1.0
    K = se_kernel(t, t, var, ell) + cfg.noise * np.eye(len(t))
    factor = _factor(K, cfg.jitter, cfg.max_jitter)
    Ks = se_kernel(t, ts, var, ell)
    alpha = linalg.cho_solve(factor, y - mu, check_finite=False)
    mean = mu + Ks.T @ alpha
    v = linalg.solve_triangular(factor[0], Ks, lower=True, check_finite=False)
    post = var - np.einsum("ij,ij->j", v, v)
    post = np.clip(post, 0.0, var)
    return ResampledSeries(entity=entity, attribute=attribute, times=ts, values=mean, variance=post,
                           kernel_variance=var, length_scale=ell, noise=cfg.noise)


def log_marginal_likelihood(times, values, variance: float, length_scale: float, noise: float) -> float:
    t = np.asarray(times, dtype=float)
    y = np.asarray(values, dtype=float) - np.mean(values)
    K = se_kernel(t, t, variance, length_scale) + (noise + 1e-10 * variance) * np.eye(len(t))
    try:
        c, low = linalg.cho_factor(K, lower=True, check_finite=False)
    except linalg.LinAlgError:
        return -np.inf
    alpha = linalg.cho_solve((c, low), y, check_finite=False)
    return float(-0.5 * y @ alpha - np.log(np.diag(c)).sum() - 0.5 * len(t) * np.log(2 * np.pi))


def select_length_scale(times, values, candidates, noise: float = 0.0) -> float:
    """Grid search of the length-scale by marginal likelihood."""
    var = float(np.var(values)) or 1.0
    scores = [log_marginal_likelihood(times, values, var, ell, noise) for ell in candidates]
    return float(candidates[int(np.argmax(scores))])


def default_grid(series_list, step: float | None = None) -> np.ndarray:
    """Regular grid over the union span at the finest device rate."""
    starts = [s.timestamps[0] for s in series_list if len(s)]
    ends = [s.timestamps[-1] for s in series_list if len(s)]
    if not starts:
        raise DomainError("no samples to build a grid from")
    if step is None:
        step = min(s.beta_s for s in series_list)
    return np.arange(min(starts), max(ends) + 0.5 * step, step)


def integrate_series(series: AttributeSeries, grid, estimate: ClockEstimate | None = None,
                     cfg: KernelConfig | None = None) -> ResampledSeries:
    """Clock-compensates (when an estimate is given) and resamples onto ``grid``."""
    s = compensate(series, estimate) if estimate is not None else series
    if cfg is None:
        cfg = KernelConfig(noise=1e-6 * max(float(np.var(s.values)), 1e-12))
    return gpr_resample(s.timestamps, s.values, grid, cfg, s.entity, s.attribute)


def write_resampled(original: AttributeSeries, resampled: ResampledSeries, path) -> None:
    """Trace CSV schema plus ``value_resampled`` and ``variance`` columns.

    Rows are the target grid; ``value`` carries the raw observation when one
    falls on the grid instant and is empty otherwise.
    """
    raw = dict(zip(np.round(original.timestamps, 6).tolist(), original.values.tolist()))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["entity_id", "attribute", "timestamp_s", "value", "value_resampled", "variance"])
        for t, v, var in zip(resampled.times.tolist(), resampled.values.tolist(), resampled.variance.tolist()):
            obs = raw.get(round(t, 6))
            w.writerow([original.entity, original.attribute, repr(t), "" if obs is None else repr(obs), repr(v),
                        repr(var)])
