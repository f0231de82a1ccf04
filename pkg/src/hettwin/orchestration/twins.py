"""Registry of forecasting twins and virtual-physical delay compensation."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

from ..errors import DomainError


@dataclass
class TwinEntry:
    """A twin is built on first use; ``t_last`` (hours) is known before building."""

    key: tuple
    t_last: float
    builder: Callable
    t_m: float | None = None
    model: object = None

    def get(self, t_m: float):
        if self.model is None:
            self.model = self.builder()
            self.t_m = float(t_m)
        return self.model


@dataclass
class TwinRegistry:
    t_u: float
    entries: dict = field(default_factory=dict)

    def register(self, key: tuple, t_last: float, builder: Callable) -> None:
        if t_last > self.t_u:
            raise DomainError(f"twin {key} has data after the utilization instant")
        self.entries[key] = TwinEntry(key, float(t_last), builder)

    def __contains__(self, key) -> bool:
        return key in self.entries

    def __len__(self) -> int:
        return len(self.entries)

    def model(self, key):
        if key not in self.entries:
            raise DomainError(f"no twin registered for {key[0]}/{key[1]}")
        return self.entries[key].get(self.t_u)

    def built(self) -> list:
        return [k for k, e in self.entries.items() if e.model is not None]

    def predict(self, key, compensate: bool = True) -> float:
        """Twin output referred to ``t_u`` (compensated) or its own last instant."""
        horizon = vpd_compensate(self, self.t_u, [key])[key] if compensate else 0.0
        return float(self.model(key).value_at(horizon))


def vpd_compensate(registry: TwinRegistry, t_u: float, keys=None) -> dict:
    """Horizon t_u - t_last of each twin, so every output refers to the same instant."""
    out = {}
    for key in registry.entries if keys is None else keys:
        entry = registry.entries[key]
        if t_u < entry.t_last:
            raise DomainError(f"utilization instant {t_u} precedes the last data of {key} ({entry.t_last})")
        out[key] = float(t_u - entry.t_last)
    return out
