"""Forecast error of the three twin models on seeded synthetic attributes, plus one decomposition."""
import warnings

import numpy as np

from hettwin.hetnet_sim import synthetic_attributes
from hettwin.twin_modeling import benchmark_methods, stl_decompose

warnings.simplefilter("ignore")

scores = benchmark_methods(seed=1)
print(f"{'attribute':12s}{'ARIMA':>12s}{'NARX':>12s}{'STL-NARX':>12s}")
for attr, by_method in scores.items():
    print(f"{attr:12s}" + "".join(f"{by_method[m]:12.4g}" for m in ("ARIMA", "NARX", "STL-NARX")))

data = synthetic_attributes(1, 24 * 21)
parts = stl_decompose(data["throughput"], (24, 168))
print("\nthroughput decomposition (variance share)")
total = np.var(data["throughput"])
for name, comp in [("trend", parts.trend), *((f"seasonal {p} h", s) for p, s in parts.seasonal.items()),
                   ("residual", parts.residual)]:
    print(f"  {name:16s}{np.var(comp) / total:6.1%}")
