"""Loess smoothing and multi-period seasonal-trend decomposition."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from ..errors import DomainError


def _tricube(u):
    u = np.clip(np.abs(u), 0.0, 1.0)
    return (1.0 - u ** 3) ** 3


def _windows(x: np.ndarray, xe: np.ndarray, q: int) -> np.ndarray:
    """Start index of the q nearest points (a contiguous run, since x is sorted)."""
    n = len(x)
    start = np.clip(np.searchsorted(x, xe) - q // 2, 0, n - q)
    for _ in range(q):
        left_far = (start > 0) & (xe - x[np.maximum(start - 1, 0)] < x[np.minimum(start + q - 1, n - 1)] - xe)
        right_far = (start < n - q) & (x[np.minimum(start + q, n - 1)] - xe < xe - x[start])
        if not (left_far.any() or right_far.any()):
            break
        start = start - left_far + right_far
    return start


def loess(series, window: int, degree: int = 1, x=None, weights=None, x_eval=None) -> np.ndarray:
    """Locally weighted polynomial regression with tricube weights.

    Each evaluation point uses its ``window`` nearest samples. The distance
    scale is the largest distance in the neighbourhood stretched by
    (window+1)/(window-1), so the outermost points keep a small positive
    weight. ``x_eval`` may lie outside the data (local extrapolation).
    """
    y = np.asarray(series, dtype=float)
    n = len(y)
    if degree not in (0, 1, 2):
        raise DomainError("loess degree must be 0, 1 or 2")
    if window % 2 == 0 or window < degree + 2:
        raise DomainError(f"loess window must be odd and at least degree+2, got {window}")
    if window > n:
        clamped = n if n % 2 else n - 1
        if clamped < degree + 2:
            raise DomainError("series too short for the requested loess degree")
        warnings.warn(f"loess window {window} exceeds series length {n}; clamped to {clamped}", stacklevel=2)
        window = clamped
    xs = np.arange(n, dtype=float) if x is None else np.asarray(x, dtype=float)
    xe = xs if x_eval is None else np.atleast_1d(np.asarray(x_eval, dtype=float))
    start = _windows(xs, xe, window)
    idx = start[:, None] + np.arange(window)[None, :]
    dx = xs[idx] - xe[:, None]
    lam = np.abs(dx).max(axis=1) * (window + 1) / (window - 1)
    lam[lam == 0] = 1.0
    u = dx / lam[:, None]
    w = _tricube(u)
    if weights is not None:
        w = w * np.asarray(weights, dtype=float)[idx]
    yy = y[idx]
    powers = np.stack([u ** k for k in range(degree + 1)], axis=2)
    A = np.einsum("nq,nqk,nql->nkl", w, powers, powers)
    b = np.einsum("nq,nqk,nq->nk", w, powers, yy)
    try:
        coef = np.linalg.solve(A, b[..., None])[..., 0]
    except np.linalg.LinAlgError:
        coef = np.stack([np.linalg.lstsq(A[i], b[i], rcond=None)[0] for i in range(len(A))])
    return coef[:, 0]


def boundary_line(series, window: int):
    """Local-linear fit anchored at the last sample: returns (level, slope per step)."""
    y = np.asarray(series, dtype=float)
    n = len(y)
    q = min(window, n)
    seg = y[n - q:]
    dx = np.arange(-(q - 1), 1, dtype=float)
    lam = float(q + 1)
    w = _tricube(dx / lam)
    sw, sx, sxx = w.sum(), (w * dx).sum(), (w * dx * dx).sum()
    sy, sxy = (w * seg).sum(), (w * dx * seg).sum()
    det = sw * sxx - sx * sx
    if det <= 0:
        return float(seg[-1]), 0.0
    slope = (sw * sxy - sx * sy) / det
    level = (sy - slope * sx) / sw
    return float(level), float(slope)


def _moving_average(x: np.ndarray, p: int) -> np.ndarray:
    """Centred moving average (2xp when p is even); edges filled by linear extrapolation."""
    kernel = np.ones(p) / p
    if p % 2 == 0:
        kernel = np.convolve(kernel, [0.5, 0.5])
    k = len(kernel)
    half = k // 2
    out = np.full(len(x), np.nan)
    if len(x) >= k:
        out[half:len(x) - half] = np.convolve(x, kernel, mode="valid")
    valid = np.flatnonzero(~np.isnan(out))
    if len(valid) == 0:
        return np.full(len(x), float(np.mean(x)))
    span = min(len(valid), max(p, 2))
    for side, gaps in ((valid[:span], np.arange(0, valid[0])), (valid[-span:], np.arange(valid[-1] + 1, len(x)))):
        if len(side) >= 2:
            slope, icpt = np.polyfit(side.astype(float), out[side], 1)
        else:
            slope, icpt = 0.0, out[side[0]]
        out[gaps] = icpt + slope * gaps
    return out


def _cycle_subseries(detr: np.ndarray, p: int, window, weights) -> np.ndarray:
    n = len(detr)
    out = np.empty(n)
    w_all = np.ones(n) if weights is None else weights
    for phase in range(p):
        sub = detr[phase::p]
        w = w_all[phase::p]
        if window is None:
            total = w.sum()
            out[phase::p] = (w * sub).sum() / total if total > 0 else sub.mean()
        else:
            win = min(window, len(sub) if len(sub) % 2 else len(sub) - 1)
            if win >= 2:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore")
                    out[phase::p] = loess(sub, win, 0 if win < 3 else 1, weights=w)
            else:
                out[phase::p] = sub.mean()
    return out


def default_trend_window(period: int, seasonal_window=None) -> int:
    if seasonal_window is None:
        nt = 1.5 * period
    else:
        nt = 1.5 * period / (1.0 - 1.5 / seasonal_window)
    nt = int(np.ceil(nt))
    return nt if nt % 2 else nt + 1


@dataclass
class STLComponents:
    trend: np.ndarray
    seasonal: dict
    residual: np.ndarray
    periods: tuple
    seasonal_window: int | None
    trend_windows: dict
    inner: int
    outer: int
    robustness: np.ndarray | None = field(default=None, repr=False)

    @property
    def seasonal_total(self) -> np.ndarray:
        total = np.zeros_like(self.trend)
        for s in self.seasonal.values():
            total = total + s
        return total

    def reconstruct(self) -> np.ndarray:
        return self.trend + self.seasonal_total + self.residual


def stl_decompose(series, periods=(24, 168), seasonal_window: int | None = None, trend_window: int | None = None,
                  inner: int = 2, outer: int = 0) -> STLComponents:
    """Sequential STL: the shortest period first, each later period on the deseasonalized remainder.

    ``seasonal_window=None`` gives the periodic variant, where every
    cycle-subseries is replaced by its mean. The residual is defined as
    whatever trend and seasonals leave over, so the components always add
    back to the input.
    """
    x = np.asarray(series, dtype=float)
    periods = tuple(sorted(int(p) for p in periods))
    if not periods or min(periods) < 2:
        raise DomainError("periods must be integers >= 2")
    if len(x) < 2 * max(periods):
        raise DomainError(f"series of length {len(x)} is shorter than two cycles of period {max(periods)}")
    if inner < 1 or outer < 0:
        raise DomainError("need inner >= 1 and outer >= 0")
    rob = None
    for _ in range(outer + 1):
        remainder = x.copy()
        seasonals, windows = {}, {}
        trend = None
        for p in periods:
            tw = trend_window or default_trend_window(p, seasonal_window)
            tw = min(tw, len(x) if len(x) % 2 else len(x) - 1)
            windows[p] = tw
            trend = _moving_average(remainder, p)
            sea = np.zeros_like(x)
            for _k in range(inner):
                c = _cycle_subseries(remainder - trend, p, seasonal_window, rob)
                if seasonal_window is None:
                    sea = c - c[:p].mean()
                else:
                    low = _moving_average(_moving_average(_moving_average(c, p), p), 3)
                    sea = c - low
                trend = loess(remainder - sea, tw, 1, weights=rob)
            seasonals[p] = sea
            remainder = remainder - sea
        resid = x - trend - sum(seasonals.values())
        mad = np.median(np.abs(resid))
        if mad > 0:
            u = np.clip(np.abs(resid) / (6.0 * mad), 0.0, 1.0)
            rob = (1.0 - u ** 2) ** 2
        else:
            rob = None
    return STLComponents(trend=trend, seasonal=seasonals, residual=resid, periods=periods,
                         seasonal_window=seasonal_window, trend_windows=windows, inner=inner, outer=outer,
                         robustness=rob if outer else None)


def extend_seasonal(seasonal: np.ndarray, period: int, horizon: int) -> np.ndarray:
    """Repeats the last fitted cycle for steps 1..horizon after the series end."""
    n = len(seasonal)
    steps = np.arange(1, horizon + 1)
    idx = n - 1 + steps - period * np.ceil(steps / period).astype(int)
    return seasonal[idx]
