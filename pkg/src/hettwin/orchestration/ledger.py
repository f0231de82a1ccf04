"""Modeling-cost accounting and orchestration efficiency."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..attribute_valuation import LEVEL_NAMES
from ..errors import DomainError

SELECTED_LEVELS = ("L1", "L2", "L3")


@dataclass(frozen=True)
class CostModel:
    """Per-attribute twin cost: samples x bytes x transport weight x level multiplier."""

    samples_per_window: int = 168
    bytes_per_sample: float = 8.0
    transport_weight: float = 1.0
    level_multipliers: tuple = (0.5, 1.0, 1.5, 2.0)
    hdt_fraction: float = 0.01

    @classmethod
    def from_config(cls, costs) -> "CostModel":
        return cls(costs.samples_per_window, costs.bytes_per_sample, costs.transport_weight,
                   tuple(costs.level_multipliers), costs.hdt_fraction)

    @property
    def base(self) -> float:
        return self.samples_per_window * self.bytes_per_sample * self.transport_weight

    def cost(self, level: str) -> float:
        return self.base * self.level_multipliers[LEVEL_NAMES.index(level)]

    def user_cost(self, levels: dict, selected=SELECTED_LEVELS) -> float:
        """Sum over the user's attributes whose level is selected."""
        return float(sum(self.cost(lv) for lv in levels.values() if lv in selected))

    def bs_cost(self) -> float:
        return self.cost("L1")

    @property
    def full_fidelity(self) -> float:
        """Cost of one attribute modeled without differentiation, at the finest level."""
        return self.base * max(self.level_multipliers)


@dataclass
class CostLedger:
    hdt: float
    areas: dict = field(default_factory=dict)
    selections: dict = field(default_factory=dict)

    @property
    def ldt(self) -> float:
        return float(sum(self.areas.values()))

    @property
    def total(self) -> float:
        return self.hdt + self.ldt

    def hdt_is_small(self, ratio: float = 0.1) -> bool:
        return self.hdt < ratio * self.ldt

    def scaled(self, factor: float) -> "CostLedger":
        return CostLedger(self.hdt * factor, {k: v * factor for k, v in self.areas.items()}, dict(self.selections))

    def to_dict(self) -> dict:
        return {"hdt": self.hdt, "ldt": self.ldt, "total": self.total,
                "areas": {str(k): v for k, v in self.areas.items()}}


def hierarchical_ledger(model: CostModel, levels: dict, areas: dict, n_bs: int) -> CostLedger:
    """HDT pays a fraction of every L1 attribute; each area pays its members' L1-L3 attributes.

    ``levels`` maps user -> {attribute: level}; ``areas`` maps an area id to
    (users, bss).
    """
    l1 = sum(model.user_cost(lv, ("L1",)) for lv in levels.values()) + n_bs * model.bs_cost()
    ledger = CostLedger(hdt=model.hdt_fraction * l1)
    for key, (users, bss) in areas.items():
        cost = sum(model.user_cost(levels[u]) for u in users) + len(bss) * model.bs_cost()
        ledger.areas[key] = float(cost)
        ledger.selections[key] = {u: [k for k, lv in levels[u].items() if lv in SELECTED_LEVELS] for u in users}
    return ledger


def all_inclusive_ledger(model: CostModel, levels: dict, n_bs: int) -> CostLedger:
    """Every attribute of every user and every BS at full fidelity; no HDT.

    Without a coarse layer there is no differentiation to exploit, so each
    series is modeled as finely as the costliest level.
    """
    n_series = sum(len(lv) for lv in levels.values()) + n_bs
    cost = n_series * model.full_fidelity
    ledger = CostLedger(hdt=0.0, areas={"all": float(cost)})
    ledger.selections["all"] = {u: sorted(lv) for u, lv in levels.items()}
    return ledger


def efficiency(realized_awards, ledger: CostLedger) -> float:
    """Sum of realized awards over assigned pairs per unit of twin cost."""
    total = ledger.total
    if not total > 0:
        raise DomainError("efficiency is undefined for a zero-cost ledger")
    return float(np.sum(np.asarray(realized_awards, dtype=float))) / total
