"""ARIMA(p, d, 0) by conditional least squares."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DomainError, NumericalError


@dataclass
class ArimaFit:
    order: tuple
    intercept: float
    phi: np.ndarray
    levels: list
    tail: np.ndarray
    fitted_last: float
    sigma2: float

    def forecast(self, horizon: int) -> np.ndarray:
        p, d, _ = self.order
        w = list(self.tail)
        diffs = []
        for _ in range(horizon):
            nxt = self.intercept + sum(self.phi[k] * w[-1 - k] for k in range(p))
            w.append(nxt)
            diffs.append(nxt)
        path = np.asarray(diffs, dtype=float)
        # integrate back through each differencing level, innermost first
        for last in reversed(self.levels):
            path = last + np.cumsum(path)
        return path


def arima_fit(series, order=(2, 2, 0)) -> ArimaFit:
    """Differences ``d`` times and fits AR(p) with intercept by least squares.

    The minimum-norm solution is used when the design is rank deficient
    (e.g. an exactly quadratic input), which keeps polynomial inputs exact.
    """
    p, d, q = (int(v) for v in order)
    if q != 0:
        raise DomainError("only pure autoregressive orders (q = 0) are supported")
    x = np.asarray(series, dtype=float)
    if len(x) < 30:
        raise DomainError("ARIMA needs at least 30 samples")
    levels = []
    w = x
    for _ in range(d):
        levels.append(float(w[-1]))
        w = np.diff(w)
    n = len(w) - p
    if n < p + 2:
        raise DomainError("series too short after differencing")
    design = np.column_stack([np.ones(n)] + [w[p - k:p - k + n] for k in range(1, p + 1)])
    coef, *_ = np.linalg.lstsq(design, w[p:], rcond=None)
    intercept, phi = float(coef[0]), np.asarray(coef[1:], dtype=float)
    if p:
        roots = np.roots(np.concatenate([[1.0], -phi]))
        if np.any(np.abs(roots) >= 1.0):
            raise NumericalError(f"unstable AR fit: characteristic roots {np.abs(roots).round(4).tolist()}")
    resid = w[p:] - design @ coef
    fitted_w = float(design[-1] @ coef)
    # one-step fitted value of the last observation, integrated with the previous levels
    fitted_last = fitted_w + sum(np.diff(x[:-1], n=k)[-1] for k in range(d))
    return ArimaFit(order=(p, d, q), intercept=intercept, phi=phi, levels=levels, tail=w[-p:] if p else np.array([]),
                    fitted_last=float(fitted_last), sigma2=float(resid @ resid / max(len(resid), 1)))
