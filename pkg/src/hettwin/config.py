"""Scenario configuration: typed sections, TOML loading and validation.

Every field carries an optional ``range`` in its metadata. ``load_config``
collects all violations before raising, so a broken file is reported in one
pass with the dotted path (and line, when found) of every offending key.
"""

from __future__ import annotations

import dataclasses
import re
import sys
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError


def _f(default, lo=None, hi=None, *, factory=False, doc=""):
    meta = {"range": (lo, hi), "doc": doc}
    if factory:
        return field(default_factory=default, metadata=meta)
    return field(default=default, metadata=meta)


@dataclass
class TierConfig:
    max_power_dbm: float = _f(40.0, -30.0, 60.0)
    coverage_radius: float = _f(300.0, 1.0, 10_000.0)
    slots: int = _f(32, 1, 4096)
    capacity_bps: float = _f(60e6, 1.0, None)


def _macro():
    return TierConfig(40.0, 300.0, 32, 60e6)


def _small():
    return TierConfig(17.0, 50.0, 16, 60e6)


@dataclass
class NetworkConfig:
    arena: list = _f(lambda: [800.0, 400.0], factory=True)
    macro_positions: list = _f(lambda: [[200.0, 200.0], [600.0, 200.0]], factory=True)
    small_positions: list = _f(
        lambda: [[120.0, 110.0], [300.0, 300.0], [420.0, 120.0],
                 [520.0, 300.0], [680.0, 110.0], [700.0, 320.0]],
        factory=True,
    )
    n_users: int = _f(50, 1, 100_000)
    hotspot_fraction: float = _f(0.6, 0.0, 1.0)
    hotspot_radius: float = _f(35.0, 0.0, None)
    roam_radius: float = _f(60.0, 0.0, None)
    max_speed: float = _f(1.5, 0.0, 100.0)
    macro: TierConfig = _f(_macro, factory=True)
    small: TierConfig = _f(_small, factory=True)


@dataclass
class ChannelConfig:
    bandwidth_hz: float = _f(20e6, 1.0, None)
    noise_dbm: float = _f(-104.0, -200.0, 0.0)
    noise_figure_db: float = _f(5.0, 0.0, 30.0)
    shadowing_std_db: float = _f(8.0, 0.0, 30.0)
    fading_draws: int = _f(16, 0, 4096, doc="Rayleigh draws averaged per tick; 0 uses the mean gain")


@dataclass
class TrafficConfig:
    base_rate_min: float = _f(0.6e6, 0.0, None)
    base_rate_max: float = _f(2.4e6, 0.0, None)
    daily_amplitude: float = _f(0.5, 0.0, 0.99)
    weekly_amplitude: float = _f(0.15, 0.0, 0.99)
    noise_scale: float = _f(0.05, 0.0, 1.0)
    packet_bits: float = _f(12_000.0, 1.0, None)
    max_delay_s: float = _f(1.0, 1e-6, None)
    base_loss: float = _f(1e-4, 0.0, 1.0)
    loss_scale: float = _f(1.0, 0.0, 1.0)


@dataclass
class QosConfig:
    delay_min_s: float = _f(0.01, 1e-6, None)
    delay_max_s: float = _f(0.05, 1e-6, None)
    loss_min: float = _f(0.005, 1e-9, 1.0)
    loss_max: float = _f(0.02, 1e-9, 1.0)
    weight_concentration: float = _f(4.0, 0.01, None)


@dataclass
class ClockConfig:
    enabled: bool = True
    max_skew_ppm: float = _f(200.0, 0.0, 1e5)
    max_offset_s: float = _f(1800.0, 0.0, None)
    sampling_intervals_h: list = _f(lambda: [1, 2], factory=True)
    missing_prob: float = _f(0.02, 0.0, 0.5)
    link_delay_min_s: float = _f(1e-3, 0.0, None)
    link_delay_max_s: float = _f(5e-3, 0.0, None)
    jitter_s: float = _f(0.0, 0.0, None)
    collection_delay_min_h: float = _f(2.0, 0.0, None)
    collection_delay_max_h: float = _f(8.0, 0.0, None)


@dataclass
class TraceConfig:
    duration_h: int = _f(510, 2, None)


@dataclass
class NarxSettings:
    own_lags: int = _f(10, 1, 500)
    exo_lags: int = _f(10, 1, 500)
    hidden: int = _f(15, 1, 1000)
    learning_rate: float = _f(1e-3, 1e-8, 1.0)
    max_epochs: int = _f(2000, 1, 1_000_000)
    patience: int = _f(20, 1, None)
    batch_size: int = _f(32, 1, None)
    val_fraction: float = _f(0.2, 0.01, 0.9)


@dataclass
class PipelineConfig:
    segments: int = _f(4, 0, None, doc="0 selects the eigengap heuristic")
    levels: int = _f(4, 1, 16)
    zeta: float = _f(0.8, 1e-9, 1.0)
    adjacency_weight: float = _f(0.3, 0.0, 1.0)
    strong_threshold: float = _f(0.5, 0.0, 1.0)
    sampen_m: int = _f(2, 1, 20)
    sampen_r: float = _f(0.2, 1e-9, None)
    granger_trigger: float = _f(0.3, 0.0, 1.0)
    granger_floor: float = _f(0.3, 0.0, 1.0)
    granger_alpha: float = _f(0.05, 1e-9, 1.0)
    granger_max_lag: int = _f(2, 1, 50)
    hdt_window_h: int = _f(168, 8, None)
    demand_window_h: int = _f(24, 1, None)
    demand_ar_order: int = _f(2, 1, 50)
    twin_window_h: int = _f(336, 8, None)
    stl_periods: list = _f(lambda: [24, 168], factory=True)
    power_levels: int = _f(5, 1, 100)
    power_min_fraction: float = _f(0.1, 1e-6, 1.0)
    award_cap: float = _f(2.0, 1.0, None)
    fading_samples: int = _f(16, 0, 1000, doc="0 predicts awards from the mean gain only")
    power_tolerance: float = _f(0.0, 0.0, None)
    power_target: float = _f(1.0, 0.0, None, doc="0 disables the satisfaction target for power selection")
    sentinel_margin: float = _f(1.0, 1e-9, None)
    narx: NarxSettings = _f(NarxSettings, factory=True)


@dataclass
class CostConfig:
    samples_per_window: int = _f(168, 1, None)
    bytes_per_sample: float = _f(8.0, 1e-9, None)
    transport_weight: float = _f(1.0, 1e-9, None)
    level_multipliers: list = _f(lambda: [0.5, 1.0, 1.5, 2.0], factory=True)
    hdt_fraction: float = _f(0.01, 0.0, 1.0)


@dataclass
class ScenarioConfig:
    name: str = "reference"
    seed: int = _f(1, 0, None)
    network: NetworkConfig = _f(NetworkConfig, factory=True)
    channel: ChannelConfig = _f(ChannelConfig, factory=True)
    traffic: TrafficConfig = _f(TrafficConfig, factory=True)
    qos: QosConfig = _f(QosConfig, factory=True)
    clock: ClockConfig = _f(ClockConfig, factory=True)
    trace: TraceConfig = _f(TraceConfig, factory=True)
    pipeline: PipelineConfig = _f(PipelineConfig, factory=True)
    costs: CostConfig = _f(CostConfig, factory=True)

    def with_users(self, n_users: int) -> "ScenarioConfig":
        cfg = dataclasses.replace(self, network=dataclasses.replace(self.network, n_users=int(n_users)))
        return cfg

    def with_seed(self, seed: int) -> "ScenarioConfig":
        return dataclasses.replace(self, seed=int(seed))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _locate(text: str, path: str) -> int | None:
    """Best-effort line number of a dotted key inside TOML text."""
    if not text:
        return None
    parts = path.split(".")
    key = parts[-1]
    section = ".".join(parts[:-1])
    current = ""
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        header = re.match(r"^\[\s*([^\]]+?)\s*\]$", stripped)
        if header:
            current = header.group(1)
            continue
        if current == section and re.match(rf"^{re.escape(key)}\s*=", stripped):
            return lineno
    for lineno, line in enumerate(text.splitlines(), start=1):
        if re.match(rf"^\s*\[\s*{re.escape(path)}\s*\]", line):
            return lineno
    return None


def _type_ok(value, tp) -> bool:
    if tp is bool:
        return isinstance(value, bool)
    if tp is int:
        return isinstance(value, int) and not isinstance(value, bool)
    if tp is float:
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if tp is str:
        return isinstance(value, str)
    if tp is list:
        return isinstance(value, list)
    return True


def _build(cls, data: dict, prefix: str, diags: list, text: str):
    if not isinstance(data, dict):
        diags.append(_diag(prefix, f"expected a table, got {type(data).__name__}", text))
        return cls()
    hints = typing.get_type_hints(cls)
    known = {f.name: f for f in dataclasses.fields(cls)}
    for key in data:
        if key not in known:
            diags.append(_diag(_join(prefix, key), "unknown field", text))
    kwargs = {}
    for name, fld in known.items():
        if name not in data:
            continue
        path = _join(prefix, name)
        value = data[name]
        tp = hints[name]
        if dataclasses.is_dataclass(tp):
            kwargs[name] = _build(tp, value, path, diags, text)
            continue
        if not _type_ok(value, tp):
            diags.append(_diag(path, f"expected {tp.__name__}, got {type(value).__name__}", text))
            continue
        if tp is float:
            value = float(value)
        lo, hi = fld.metadata.get("range", (None, None))
        if tp in (int, float) and (lo is not None and value < lo or hi is not None and value > hi):
            diags.append(_diag(path, f"value {value!r} outside expected range [{_fmt(lo)}, {_fmt(hi)}]", text))
            continue
        kwargs[name] = value
    return cls(**kwargs)


def _join(prefix, key):
    return f"{prefix}.{key}" if prefix else key


def _fmt(x):
    return "unbounded" if x is None else repr(x)


def _diag(path: str, message: str, text: str) -> str:
    line = _locate(text, path)
    where = f"{path} (line {line})" if line else path
    return f"{where}: {message}"


def _positions_ok(value) -> bool:
    return isinstance(value, list) and all(
        isinstance(p, list) and len(p) == 2 and all(_type_ok(c, float) for c in p) for p in value
    )


def cross_check(cfg: ScenarioConfig, text: str = "") -> list[str]:
    """Checks that span several fields."""
    diags = []
    net, tr, pl, clk, qos, costs = cfg.network, cfg.traffic, cfg.pipeline, cfg.clock, cfg.qos, cfg.costs
    if not (isinstance(net.arena, list) and len(net.arena) == 2 and all(_type_ok(a, float) and a > 0 for a in net.arena)):
        diags.append(_diag("network.arena", "expected [width, height] with positive entries", text))
    for key in ("macro_positions", "small_positions"):
        if not _positions_ok(getattr(net, key)):
            diags.append(_diag(f"network.{key}", "expected a list of [x, y] pairs", text))
    if not net.macro_positions and not net.small_positions:
        diags.append(_diag("network.macro_positions", "at least one base station is required", text))
    if tr.base_rate_min > tr.base_rate_max:
        diags.append(_diag("traffic.base_rate_min", "must not exceed traffic.base_rate_max", text))
    if tr.daily_amplitude + tr.weekly_amplitude >= 1.0:
        diags.append(_diag("traffic.daily_amplitude", "daily + weekly amplitude must stay below 1", text))
    if qos.delay_min_s > qos.delay_max_s:
        diags.append(_diag("qos.delay_min_s", "must not exceed qos.delay_max_s", text))
    if qos.loss_min > qos.loss_max:
        diags.append(_diag("qos.loss_min", "must not exceed qos.loss_max", text))
    intervals = clk.sampling_intervals_h
    if not intervals or not all(isinstance(b, int) and not isinstance(b, bool) and b >= 1 for b in intervals):
        diags.append(_diag("clock.sampling_intervals_h", "expected a non-empty list of positive integers", text))
    if clk.link_delay_min_s > clk.link_delay_max_s:
        diags.append(_diag("clock.link_delay_min_s", "must not exceed clock.link_delay_max_s", text))
    if clk.collection_delay_min_h > clk.collection_delay_max_h:
        diags.append(_diag("clock.collection_delay_min_h", "must not exceed clock.collection_delay_max_h", text))
    periods = pl.stl_periods
    if not periods or not all(isinstance(p, int) and not isinstance(p, bool) and p >= 2 for p in periods):
        diags.append(_diag("pipeline.stl_periods", "expected a non-empty list of integers >= 2", text))
    else:
        need = 2 * max(periods)
        if pl.twin_window_h < need:
            diags.append(_diag("pipeline.twin_window_h", f"must cover two of the longest STL period ({need} h)", text))
        if cfg.trace.duration_h < need + clk.collection_delay_max_h + 1:
            diags.append(_diag("trace.duration_h",
                               f"must exceed {need} h plus the maximum collection delay", text))
    if tr.weekly_amplitude > 0 and cfg.trace.duration_h < 336:
        diags.append(_diag("trace.duration_h", "weekly seasonality needs at least 336 h", text))
    if pl.hdt_window_h > cfg.trace.duration_h:
        diags.append(_diag("pipeline.hdt_window_h", "longer than trace.duration_h", text))
    if pl.twin_window_h > cfg.trace.duration_h:
        diags.append(_diag("pipeline.twin_window_h", "longer than trace.duration_h", text))
    mult = costs.level_multipliers
    if not (isinstance(mult, list) and len(mult) == pl.levels and all(_type_ok(m, float) and m > 0 for m in mult)):
        diags.append(_diag("costs.level_multipliers", f"expected {pl.levels} positive numbers", text))
    if pl.hdt_window_h <= pl.sampen_m + 2:
        diags.append(_diag("pipeline.hdt_window_h", "too short for the sample-entropy embedding", text))
    return diags


def config_from_dict(data: dict, text: str = "") -> ScenarioConfig:
    diags: list[str] = []
    cfg = _build(ScenarioConfig, data, "", diags, text)
    if not diags:
        diags.extend(cross_check(cfg, text))
    if diags:
        raise ConfigError(diags)
    return cfg


def load_config(path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError([f"{path}: cannot read file ({exc.strerror})"]) from exc
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError([f"{path}: {exc}"]) from exc
    return config_from_dict(data, text)


def validate_file(path) -> list[str]:
    """Returns the list of diagnostics for a scenario file (empty when valid)."""
    try:
        load_config(path)
    except ConfigError as exc:
        return exc.diagnostics
    return []
