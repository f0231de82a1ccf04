"""NARX forecaster: one tanh hidden layer over lagged target and exogenous values."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from ..errors import DomainError, NumericalError


@dataclass(frozen=True)
class NarxConfig:
    hidden: int = 15
    learning_rate: float = 1e-3
    max_epochs: int = 2000
    patience: int = 20
    batch_size: int = 32
    val_fraction: float = 0.2
    seed: int = 0


@dataclass
class NarxModel:
    own_lags: int
    exo_lags: tuple
    hidden: int
    params: dict
    y_mean: float
    y_std: float
    x_mean: tuple
    x_std: tuple
    learning_rate: float
    history: list = field(default_factory=list)
    noise_std: float = 0.0
    epochs: int = 0

    @property
    def n_inputs(self) -> int:
        return self.own_lags + sum(self.exo_lags)

    @property
    def max_lag(self) -> int:
        return max((self.own_lags,) + tuple(self.exo_lags))

    @property
    def n_weights(self) -> int:
        return sum(int(np.size(v)) for v in self.params.values())

    def to_dict(self) -> dict:
        return {"own_lags": self.own_lags, "exo_lags": list(self.exo_lags), "hidden": self.hidden,
                "learning_rate": self.learning_rate, "y_mean": self.y_mean, "y_std": self.y_std,
                "x_mean": list(self.x_mean), "x_std": list(self.x_std), "noise_std": self.noise_std,
                "epochs": self.epochs, "weights": {k: np.asarray(v).tolist() for k, v in self.params.items()}}


def weight_count(own_lags: int, exo_lags, hidden: int) -> int:
    return (own_lags + sum(exo_lags) + 1) * hidden + (hidden + 1)


def init_params(n_inputs: int, hidden: int, rng: np.random.Generator) -> dict:
    return {"W1": rng.normal(0.0, 1.0 / np.sqrt(max(n_inputs, 1)), (n_inputs, hidden)),
            "b1": np.zeros(hidden),
            "W2": rng.normal(0.0, 1.0 / np.sqrt(hidden), hidden),
            "b2": np.zeros(())}


def forward(params: dict, X: np.ndarray) -> np.ndarray:
    return np.tanh(X @ params["W1"] + params["b1"]) @ params["W2"] + params["b2"]


def loss_and_grad(params: dict, X: np.ndarray, y: np.ndarray):
    """Mean squared error and its gradient with respect to every parameter."""
    h = np.tanh(X @ params["W1"] + params["b1"])
    out = h @ params["W2"] + params["b2"]
    err = out - y
    n = len(y)
    loss = float(err @ err) / n
    d_out = 2.0 * err / n
    d_h = np.outer(d_out, params["W2"]) * (1.0 - h * h)
    grads = {"W1": X.T @ d_h, "b1": d_h.sum(axis=0), "W2": h.T @ d_out, "b2": np.asarray(d_out.sum())}
    return loss, grads


def _design(y: np.ndarray, exo: list, own_lags: int, exo_lags: tuple, start: int) -> np.ndarray:
    """Regressor rows for targets y[start:], each using only strictly earlier samples."""
    n = len(y) - start
    cols = [y[start - k:start - k + n] for k in range(1, own_lags + 1)]
    for x, r in zip(exo, exo_lags):
        cols += [x[start - k:start - k + n] for k in range(1, r + 1)]
    return np.column_stack(cols) if cols else np.empty((n, 0))


def _scale(v):
    v = np.asarray(v, dtype=float)
    m, s = float(v.mean()), float(v.std())
    return m, (s if s > 0 else 1.0)


def narx_fit(target, exogenous=(), own_lags: int = 10, exo_lags=10, cfg: NarxConfig | None = None) -> NarxModel:
    """Teacher-forced training with Adam and early stopping on the validation tail."""
    cfg = cfg or NarxConfig()
    y = np.asarray(target, dtype=float)
    exo = [np.asarray(x, dtype=float) for x in exogenous]
    if isinstance(exo_lags, int):
        exo_lags = (exo_lags,) * len(exo)
    exo_lags = tuple(int(r) for r in exo_lags)
    if len(exo_lags) != len(exo):
        raise DomainError("one lag count per exogenous input is required")
    if any(len(x) != len(y) for x in exo):
        raise DomainError("exogenous inputs must align with the target")
    if own_lags < 1 or any(r < 1 for r in exo_lags):
        raise DomainError("lags must be >= 1")
    lag = max((own_lags,) + exo_lags)
    n = len(y) - lag
    if n < 10:
        raise DomainError(f"need more than {lag + 10} samples to fit NARX with lag {lag}")
    n_w = weight_count(own_lags, exo_lags, cfg.hidden)
    if n < 10 * n_w:
        warnings.warn(f"NARX training window ({n}) is below 10x the parameter count ({n_w})", stacklevel=2)
    y_mean, y_std = _scale(y)
    scales = [_scale(x) for x in exo]
    yz = (y - y_mean) / y_std
    xz = [(x - m) / s for x, (m, s) in zip(exo, scales)]
    X = _design(yz, xz, own_lags, exo_lags, lag)
    T = yz[lag:]
    n_val = max(1, int(round(cfg.val_fraction * n)))
    n_tr = n - n_val
    if n_tr < 1:
        raise DomainError("not enough samples left for training after the validation split")
    Xtr, Ttr, Xva, Tva = X[:n_tr], T[:n_tr], X[n_tr:], T[n_tr:]
    rng = np.random.default_rng(cfg.seed)
    params = init_params(X.shape[1], cfg.hidden, rng)
    m1 = {k: np.zeros_like(v) for k, v in params.items()}
    m2 = {k: np.zeros_like(v) for k, v in params.items()}
    b1, b2, eps = 0.9, 0.999, 1e-8
    lr = cfg.learning_rate

    def val_loss(p):
        e = forward(p, Xva) - Tva
        return float(e @ e) / len(e)

    initial = val_loss(params)
    best, best_params, wait = initial, {k: v.copy() for k, v in params.items()}, 0
    history = []
    step = 0
    epoch = 0
    bs = max(1, cfg.batch_size)
    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(n_tr)
        train_total = 0.0
        for lo in range(0, n_tr, bs):
            idx = order[lo:lo + bs]
            loss, grads = loss_and_grad(params, Xtr[idx], Ttr[idx])
            train_total += loss * len(idx)
            step += 1
            c1 = 1.0 - b1 ** step
            c2 = 1.0 - b2 ** step
            for k, g in grads.items():
                m1[k] = b1 * m1[k] + (1 - b1) * g
                m2[k] = b2 * m2[k] + (1 - b2) * g * g
                params[k] = params[k] - lr * (m1[k] / c1) / (np.sqrt(m2[k] / c2) + eps)
        v = val_loss(params)
        history.append((train_total / n_tr, v))
        if not np.isfinite(v) or v > 10.0 * initial + 1e-12:
            raise NumericalError(f"NARX training diverged at epoch {epoch}: validation MSE {v:.4g} "
                                 f"vs initial {initial:.4g} (lr {lr}, hidden {cfg.hidden})")
        if v < best - 1e-12:
            best, wait = v, 0
            best_params = {k: val.copy() for k, val in params.items()}
        else:
            wait += 1
            if wait >= cfg.patience:
                break
    resid = (forward(best_params, X) - T) * y_std
    return NarxModel(own_lags=own_lags, exo_lags=exo_lags, hidden=cfg.hidden, params=best_params,
                     y_mean=y_mean, y_std=y_std, x_mean=tuple(m for m, _ in scales), x_std=tuple(s for _, s in scales),
                     learning_rate=lr, history=history, noise_std=float(resid.std()), epochs=epoch)


def narx_one_step(model: NarxModel, target, exogenous=()) -> np.ndarray:
    """Teacher-forced predictions for every index from the maximum lag on."""
    yz = (np.asarray(target, dtype=float) - model.y_mean) / model.y_std
    xz = [(np.asarray(x, dtype=float) - m) / s for x, m, s in zip(exogenous, model.x_mean, model.x_std)]
    X = _design(yz, xz, model.own_lags, model.exo_lags, model.max_lag)
    return forward(model.params, X) * model.y_std + model.y_mean


def narx_predict(model: NarxModel, history, horizon: int, exogenous_history=(), exogenous_future=()) -> np.ndarray:
    """Closed-loop forecast of the next ``horizon`` steps.

    Exogenous values at future instants come from ``exogenous_future``
    (one array per input); when omitted the last observed value is held.
    """
    if horizon < 0:
        raise DomainError("horizon must be non-negative")
    y = list((np.asarray(history, dtype=float) - model.y_mean) / model.y_std)
    if len(y) < model.own_lags:
        raise DomainError(f"history of {len(y)} samples does not cover {model.own_lags} lags")
    exo_hist = list(exogenous_history)
    if len(exo_hist) != len(model.exo_lags):
        raise DomainError(f"model expects {len(model.exo_lags)} exogenous histories")
    xs = []
    for k, (x, r) in enumerate(zip(exo_hist, model.exo_lags)):
        x = np.asarray(x, dtype=float)
        if len(x) < r:
            raise DomainError(f"exogenous history {k} does not cover {r} lags")
        fut = np.asarray(exogenous_future[k], dtype=float) if k < len(exogenous_future) else np.array([])
        if len(fut) < horizon:
            fut = np.concatenate([fut, np.full(horizon - len(fut), x[-1] if len(fut) == 0 else fut[-1])])
        xs.append(list((np.concatenate([x, fut]) - model.x_mean[k]) / model.x_std[k]))
    base = [len(np.asarray(x)) for x in exo_hist]
    out = np.empty(horizon)
    W1, b1, W2, b2 = model.params["W1"], model.params["b1"], model.params["W2"], model.params["b2"]
    for h in range(horizon):
        feats = y[-1:-model.own_lags - 1:-1]
        for k, r in enumerate(model.exo_lags):
            end = base[k] + h
            feats = feats + xs[k][end - 1:end - r - 1 if end - r - 1 >= 0 else None:-1]
        val = float(np.tanh(np.asarray(feats) @ W1 + b1) @ W2 + b2)
        y.append(val)
        out[h] = val
    return out * model.y_std + model.y_mean
