"""Forecasting twins: ARIMA and NARX baselines and the STL-NARX composite."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from ..errors import DomainError
from .arima import ArimaFit, arima_fit
from .narx import NarxConfig, NarxModel, narx_fit, narx_one_step, narx_predict
from .stl import STLComponents, boundary_line, default_trend_window, extend_seasonal, loess, stl_decompose

__all__ = [
    "ArimaModel", "ForecastModel", "NarxForecaster", "StlNarxModel", "arima_fit", "benchmark_methods",
    "boundary_line", "extend_seasonal", "fit_arima", "fit_narx", "loess", "mse", "narx_fit", "narx_predict",
    "stl_decompose", "stl_narx", "NarxConfig", "NarxModel", "STLComponents",
]


def mse(forecast, truth) -> float:
    f = np.asarray(forecast, dtype=float).ravel()
    t = np.asarray(truth, dtype=float).ravel()
    if f.shape != t.shape:
        raise DomainError(f"length mismatch: {len(f)} forecasts vs {len(t)} truths")
    if len(f) == 0:
        raise DomainError("mse of an empty series is undefined")
    d = f - t
    return float(d @ d / len(d))


@dataclass
class ForecastModel:
    """Common interface: ``t_last`` is the instant (hours) of the last training sample."""

    variant: str
    t_last: float
    step_h: float = 1.0

    @property
    def fitted_last(self) -> float:
        raise NotImplementedError

    def forecast(self, horizon: int) -> np.ndarray:
        raise NotImplementedError

    def value_at(self, horizon_h: float) -> float:
        """Prediction ``horizon_h`` hours after ``t_last``; fractional horizons interpolate."""
        if horizon_h < 0:
            raise DomainError(f"negative forecast horizon {horizon_h}")
        k = horizon_h / self.step_h
        if k == 0:
            return self.fitted_last
        n = int(math.ceil(k - 1e-9))
        path = np.concatenate([[self.fitted_last], self.forecast(n)])
        return float(np.interp(k, np.arange(n + 1), path))

    def predict_at(self, t_u: float) -> float:
        if t_u < self.t_last:
            raise DomainError(f"utilization instant {t_u} precedes the last data instant {self.t_last}")
        return self.value_at(t_u - self.t_last)

    def to_dict(self) -> dict:
        return {"variant": self.variant, "t_last": self.t_last, "step_h": self.step_h}


@dataclass
class ArimaModel(ForecastModel):
    fit: ArimaFit | None = None

    @property
    def fitted_last(self) -> float:
        return self.fit.fitted_last

    def forecast(self, horizon: int) -> np.ndarray:
        return self.fit.forecast(horizon)

    def to_dict(self) -> dict:
        return {**super().to_dict(), "order": list(self.fit.order), "intercept": self.fit.intercept,
                "phi": self.fit.phi.tolist(), "sigma2": self.fit.sigma2}


@dataclass
class NarxForecaster(ForecastModel):
    model: NarxModel | None = None
    history: np.ndarray = field(default_factory=lambda: np.array([]))
    exogenous: tuple = ()
    exogenous_future: tuple = ()

    @property
    def fitted_last(self) -> float:
        return float(narx_one_step(self.model, self.history, self.exogenous)[-1])

    def forecast(self, horizon: int) -> np.ndarray:
        return narx_predict(self.model, self.history, horizon, self.exogenous, self.exogenous_future)

    def to_dict(self) -> dict:
        return {**super().to_dict(), "narx": self.model.to_dict()}


@dataclass
class StlNarxModel(ForecastModel):
    components: STLComponents | None = None
    trend_level: float = 0.0
    trend_slope: float = 0.0
    residual: NarxForecaster | None = None

    @property
    def fitted_last(self) -> float:
        c = self.components
        return float(c.trend[-1] + c.seasonal_total[-1] + self.residual.fitted_last)

    def trend_forecast(self, horizon: int) -> np.ndarray:
        return self.trend_level + self.trend_slope * np.arange(1, horizon + 1)

    def seasonal_forecast(self, horizon: int) -> np.ndarray:
        out = np.zeros(horizon)
        for p, s in self.components.seasonal.items():
            out += extend_seasonal(s, p, horizon)
        return out

    def forecast(self, horizon: int) -> np.ndarray:
        return self.trend_forecast(horizon) + self.seasonal_forecast(horizon) + self.residual.forecast(horizon)

    def to_dict(self) -> dict:
        c = self.components
        return {**super().to_dict(), "periods": list(c.periods), "trend_windows": {str(k): v for k, v in
                                                                                    c.trend_windows.items()},
                "trend_level": self.trend_level, "trend_slope": self.trend_slope,
                "residual": self.residual.to_dict()}


def fit_arima(series, order=(2, 2, 0), t_last: float | None = None) -> ArimaModel:
    x = np.asarray(series, dtype=float)
    return ArimaModel(variant=f"ARIMA{tuple(order)}", t_last=float(len(x) - 1 if t_last is None else t_last),
                      fit=arima_fit(x, order))


def _quiet_fit(target, exogenous, own_lags, exo_lags, cfg):
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", message="NARX training window")
        return narx_fit(target, exogenous, own_lags, exo_lags, cfg)


def fit_narx(target, exogenous=(), own_lags: int = 10, exo_lags=10, cfg: NarxConfig | None = None,
             t_last: float | None = None, exogenous_future=()) -> NarxForecaster:
    y = np.asarray(target, dtype=float)
    exo = tuple(np.asarray(x, dtype=float) for x in exogenous)
    model = _quiet_fit(y, exo, own_lags, exo_lags, cfg)
    return NarxForecaster(variant="NARX", t_last=float(len(y) - 1 if t_last is None else t_last), model=model,
                          history=y, exogenous=exo, exogenous_future=tuple(exogenous_future))


def stl_narx(target, exogenous=(), periods=(24, 168), own_lags: int = 10, exo_lags=10,
             cfg: NarxConfig | None = None, t_last: float | None = None, exogenous_future=(),
             seasonal_window: int | None = None) -> StlNarxModel:
    """Trend by local-linear extrapolation, seasonals by repeating the last cycle, residual by NARX.

    Exogenous inputs enter the residual network as raw (aligned) series.
    """
    y = np.asarray(target, dtype=float)
    comps = stl_decompose(y, periods, seasonal_window=seasonal_window)
    window = default_trend_window(min(comps.periods), seasonal_window)
    level, slope = boundary_line(comps.trend, window)
    resid = fit_narx(comps.residual, exogenous, own_lags, exo_lags, cfg, exogenous_future=exogenous_future)
    return StlNarxModel(variant="STL-NARX", t_last=float(len(y) - 1 if t_last is None else t_last),
                        components=comps, trend_level=level, trend_slope=slope, residual=resid)


def benchmark_methods(seed: int, hours: int = 696, train_h: int = 504, horizon: int = 24, origins: int = 4,
                      cfg: NarxConfig | None = None) -> dict:
    """Out-of-sample forecast MSE of ARIMA(2,2,0), NARX and STL-NARX on seeded synthetic attributes.

    Each method is refitted at ``origins`` forecast origins spaced one
    horizon apart; the reported value is the MSE pooled over all of them.
    The load attribute gives both NARX variants its neighbour load as an
    exogenous input; ARIMA never sees it.
    """
    from ..hetnet_sim import synthetic_attributes

    data = synthetic_attributes(seed, hours)
    if train_h + origins * horizon > hours:
        raise DomainError("benchmark window does not fit in the synthetic series")
    cfg = cfg or NarxConfig(seed=seed)
    out = {}
    for attr in ("throughput", "delay", "loss", "load"):
        series = data[attr]
        exo_full = (data["neighbor_load"],) if attr == "load" else ()
        preds = {"ARIMA": [], "NARX": [], "STL-NARX": []}
        truth = []
        for k in range(origins):
            end = train_h + k * horizon
            window = series[end - train_h:end]
            exo = tuple(x[end - train_h:end] for x in exo_full)
            truth.append(series[end:end + horizon])
            preds["ARIMA"].append(fit_arima(window).forecast(horizon))
            preds["NARX"].append(fit_narx(window, exo, cfg=cfg).forecast(horizon))
            preds["STL-NARX"].append(stl_narx(window, exo, cfg=cfg).forecast(horizon))
        y = np.concatenate(truth)
        out[attr] = {name: mse(np.concatenate(p), y) for name, p in preds.items()}
    return out
