"""What the coarse twin layer sees: attribute levels, segments and target areas."""
import collections
import warnings

import numpy as np

from hettwin.config import load_config
from hettwin.orchestration import evaluate_situation, prepare_round

warnings.simplefilter("ignore")
ctx = prepare_round(load_config("scenarios/ref.toml").with_users(50), seed=3)
sit = evaluate_situation(ctx)

print("attribute levels across users")
table = collections.defaultdict(collections.Counter)
for per_user in sit.levels.values():
    for attr, level in per_user.items():
        table[attr][level] += 1
for attr, counts in table.items():
    print(f"  {attr:16s}", "  ".join(f"{lv}:{counts.get(lv, 0):2d}" for lv in ("L1", "L2", "L3", "L4")))

M = ctx.scenario.n_bs
print(f"\n{sit.partition.n_segments} segments, ratio-cut objective {sit.partition.objective:.3f}")
for k, seg in enumerate(sit.partition.segments):
    print(f"  segment {k}: {int((seg < M).sum())} cells, {int((seg >= M).sum())} users")

unsat = np.any(sit.satisfaction < 1.0, axis=1)
print(f"\n{int(unsat.sum())} unsatisfied users, {len(sit.areas)} target areas")
for area in sit.areas:
    print(f"  segment {area.segment}: users {area.member_users.tolist()} cells {area.member_bss.tolist()} "
          f"eta={area.eta:.2e}")
