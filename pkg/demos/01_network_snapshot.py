"""A day in the reference network under the legacy strongest-cell policy.

Prints hourly cell loads and how many users miss at least one QoS target.
Run from the repository root: python demos/01_network_snapshot.py
"""
import numpy as np

from hettwin.config import load_config
from hettwin.hetnet_sim import QOS_METRICS, Scenario

cfg = load_config("scenarios/ref.toml").with_users(50)
scn = Scenario(cfg)
print(f"{scn.n_bs} cells ({int(scn.is_macro.sum())} macro), {scn.n_users} users")

print("\nhour  macro load (Mb/s)   small load (Mb/s)   unsatisfied users")
for hour in range(24):
    snap = scn.step(hour)
    if hour % 3:
        continue
    sat = np.column_stack([snap.satisfaction[m] for m in QOS_METRICS])
    unsat = int(np.any(sat < 1.0, axis=1).sum())
    macro = snap.load_bps[scn.is_macro].sum() / 1e6
    small = snap.load_bps[~scn.is_macro].sum() / 1e6
    print(f"{hour:4d}  {macro:17.1f}   {small:17.1f}   {unsat:17d}")

# users outside every small cell fall back to a macro
served = snap.serving[snap.serving >= 0]
print("\nusers per cell at the last hour:", np.bincount(served, minlength=scn.n_bs).tolist())
