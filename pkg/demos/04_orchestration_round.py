"""One orchestration round per variant on the same simulated network.

The hierarchical variant only builds fine twins for its target areas, so
its ledger is much smaller than the all-inclusive one; the unsynchronized
variant uses stale twin outputs and predicts awards less accurately.
"""
import warnings

from hettwin.config import load_config
from hettwin.orchestration import run_point

warnings.simplefilter("ignore")
reports = run_point(load_config("scenarios/ref.toml").with_users(50), seed=2)

print(f"{'variant':22s}{'users':>6s}{'award':>9s}{'ledger':>10s}{'efficiency':>12s}{'fc mse':>9s}")
for name, rep in reports.items():
    print(f"{name:22s}{len(rep.area_users):6d}{rep.realized_award:9.2f}{rep.ledger['total']:10.0f}"
          f"{rep.efficiency:12.3e}{rep.forecast_mse:9.4f}")

hier = reports["hierarchical"]
print("\nreassigned users (user, cell, power fraction):")
for u, b, p in hier.pairs[:10]:
    print(f"  {u:3d} -> {b}  {p:.2f}")
print("constraint violations:", hier.constraint_violations or "none")
