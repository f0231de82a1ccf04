"""Command-line experiment runner.

    hettwin run --scenario scenarios/ref.toml --seeds 1..5 --sweep users=25,50,100 --out out/
    hettwin --validate --scenario scenarios/ref.toml
    hettwin --list-attributes

Exit codes: 0 on success, 2 for an invalid scenario, 1 when a pipeline stage
fails. ``HETTWIN_LOG`` sets the log level (DEBUG, INFO, WARNING, ...).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .attribute_valuation import DEFAULT_LEVELS
from .config import ScenarioConfig, load_config, validate_file
from .errors import ConfigError, DomainError, StageError
from .hetnet_sim import ATTRIBUTES, QOS_METRICS
from .orchestration.pipeline import VARIANTS, prepare_round, run_variant
from .twin_modeling import benchmark_methods

log = logging.getLogger("hettwin")

SCHEMA_VERSION = 1
COLUMNS = ("schema_version", "variant", "scale", "seed", "efficiency", "mean_satisfaction", "forecast_mse",
           "realized_award", "ledger_total", "area_users")
_INT_COLUMNS = {"schema_version", "scale", "seed", "area_users"}
_FLOAT_COLUMNS = {"efficiency", "mean_satisfaction", "forecast_mse", "realized_award", "ledger_total"}


def parse_seeds(text: str) -> list[int]:
    """``"1..5"``, ``"1,3,7"`` or a mix such as ``"1..3,9"``."""
    seeds = []
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        if ".." in part:
            lo, hi = (int(x) for x in part.split("..", 1))
            if hi < lo:
                raise ValueError(f"empty seed range {part!r}")
            seeds.extend(range(lo, hi + 1))
        else:
            seeds.append(int(part))
    if not seeds:
        raise ValueError("no seeds given")
    return seeds


def parse_sweep(text: str | None) -> tuple[str, list[int]] | None:
    if text is None:
        return None
    axis, _, values = text.partition("=")
    if axis.strip() != "users":
        raise ValueError(f"unsupported sweep axis {axis!r}; only users=<list> is available")
    return "users", [int(v) for v in values.split(",") if v.strip()]


@dataclass
class ExperimentPlan:
    scenario: Path | None
    variants: tuple
    seeds: list
    scales: list
    out: Path
    workers: int = 1

    def __post_init__(self):
        if not self.seeds:
            raise DomainError("at least one seed is required")
        if any(s <= 0 for s in self.scales):
            raise DomainError("sweep values must be positive")
        unknown = [v for v in self.variants if v not in VARIANTS]
        if unknown:
            raise DomainError(f"unknown variant(s) {unknown}; expected {VARIANTS}")

    def points(self) -> list[tuple[int, int]]:
        return [(n, s) for n in self.scales for s in self.seeds]


@dataclass
class ResultTable:
    rows: list = field(default_factory=list)
    schema_version: int = SCHEMA_VERSION

    def add(self, variant: str, scale: int, seed: int, report, cap: float = 2.0) -> None:
        """``mean_satisfaction`` averages every user's metrics after capping each at ``cap``."""
        sat = report.satisfaction_after
        mean_s = float(np.mean([np.minimum(sat[m], cap) for m in QOS_METRICS]))
        self.rows.append({"schema_version": self.schema_version, "variant": variant, "scale": int(scale),
                          "seed": int(seed), "efficiency": float(report.efficiency), "mean_satisfaction": mean_s,
                          "forecast_mse": float(report.forecast_mse), "realized_award": float(report.realized_award),
                          "ledger_total": float(report.ledger["total"]), "area_users": len(report.area_users)})

    def validate(self) -> None:
        seen = set()
        for row in self.rows:
            if tuple(row) != COLUMNS:
                raise DomainError(f"row columns {tuple(row)} do not match the schema")
            if row["schema_version"] != self.schema_version:
                raise DomainError("mixed schema versions")
            if row["variant"] not in VARIANTS:
                raise DomainError(f"unknown variant {row['variant']!r}")
            for c in _FLOAT_COLUMNS:
                if not math.isfinite(row[c]):
                    raise DomainError(f"non-finite {c} in row {row['variant']}/{row['scale']}/{row['seed']}")
            key = (row["variant"], row["scale"], row["seed"])
            if key in seen:
                raise DomainError(f"duplicate row {key}")
            seen.add(key)

    def to_csv(self) -> str:
        self.validate()
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=COLUMNS, lineterminator="\r\n", quoting=csv.QUOTE_MINIMAL)
        writer.writeheader()
        for row in self.rows:
            writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
        return buf.getvalue()

    def write(self, path) -> None:
        Path(path).write_text(self.to_csv(), encoding="utf-8", newline="")

    @classmethod
    def read(cls, path) -> "ResultTable":
        with open(path, encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh)
            if tuple(reader.fieldnames or ()) != COLUMNS:
                raise DomainError(f"{path}: unexpected header {reader.fieldnames}")
            rows = []
            for raw in reader:
                row = {}
                for c in COLUMNS:
                    row[c] = int(raw[c]) if c in _INT_COLUMNS else float(raw[c]) if c in _FLOAT_COLUMNS else raw[c]
                rows.append(row)
        table = cls(rows, rows[0]["schema_version"] if rows else SCHEMA_VERSION)
        table.validate()
        return table


# ------------------------------------------------------------------ running

def run_point(config: ScenarioConfig, scale: int, seed: int, variants) -> tuple:
    """One (scale, seed) point; all variants share one simulated network."""
    cfg = config.with_users(scale)
    ctx = prepare_round(cfg, seed)
    reports = {v: run_variant(ctx, v) for v in variants}
    decomposition = None
    registry = ctx.registries.get(True)
    if registry is not None and registry.built():
        key = sorted(registry.built())[0]
        model = registry.model(key)
        comps = model.components
        decomposition = {"entity": key[0], "attribute": key[1], "t_last": model.t_last,
                         "observed": comps.reconstruct().tolist(), "trend": comps.trend.tolist(),
                         "seasonal": {str(p): s.tolist() for p, s in comps.seasonal.items()},
                         "residual": comps.residual.tolist()}
    return scale, seed, reports, decomposition


def _round_json(report) -> str:
    return json.dumps(report.to_dict(), indent=1, sort_keys=True, default=_jsonable) + "\n"


def _jsonable(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"cannot serialise {type(x).__name__}")


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\r\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in row])


def write_decomposition(path: Path, decomposition: dict | None) -> None:
    header = ["entity_id", "attribute", "hour", "observed", "trend"]
    if decomposition is None:
        _write_csv(path, header + ["residual"], [])
        return
    periods = sorted(decomposition["seasonal"], key=int)
    header += [f"seasonal_{p}" for p in periods] + ["residual"]
    n = len(decomposition["trend"])
    start = decomposition["t_last"] - n + 1
    rows = []
    for k in range(n):
        rows.append([decomposition["entity"], decomposition["attribute"], float(start + k),
                     decomposition["observed"][k], decomposition["trend"][k]]
                    + [decomposition["seasonal"][p][k] for p in periods] + [decomposition["residual"][k]])
    _write_csv(path, header, rows)


def write_method_mse(path: Path, seeds) -> None:
    rows = []
    for seed in seeds:
        for attr, by_method in benchmark_methods(seed).items():
            for method, value in by_method.items():
                rows.append([seed, attr, method, value])
    _write_csv(path, ["seed", "attribute", "method", "mse"], rows)


def write_efficiency_summary(path: Path, table: ResultTable) -> None:
    groups = {}
    for row in table.rows:
        groups.setdefault((row["variant"], row["scale"]), []).append(row["efficiency"])
    rows = []
    for (variant, scale), vals in sorted(groups.items(), key=lambda kv: (kv[0][1], VARIANTS.index(kv[0][0]))):
        v = np.asarray(vals)
        rows.append([variant, scale, len(v), float(v.mean()), float(v.std())])
    _write_csv(path, ["variant", "scale", "n_seeds", "efficiency_mean", "efficiency_std"], rows)


def run_plan(plan: ExperimentPlan, config: ScenarioConfig, figures: bool = True) -> ResultTable:
    out = plan.out
    (out / "rounds").mkdir(parents=True, exist_ok=True)
    points = plan.points()
    if plan.workers > 1:
        with ProcessPoolExecutor(max_workers=plan.workers) as pool:
            futures = [pool.submit(run_point, config, n, s, plan.variants) for n, s in points]
            results = [f.result() for f in futures]
    else:
        results = [run_point(config, n, s, plan.variants) for n, s in points]
    table = ResultTable()
    first_decomposition = None
    for scale, seed, reports, decomposition in results:
        for variant in plan.variants:
            table.add(variant, scale, seed, reports[variant], config.pipeline.award_cap)
            path = out / "rounds" / f"{variant}_u{scale}_s{seed}.json"
            path.write_text(_round_json(reports[variant]), encoding="utf-8")
            log.info("%s users=%d seed=%d efficiency=%.6g", variant, scale, seed, reports[variant].efficiency)
        if first_decomposition is None:
            first_decomposition = decomposition
    table.write(out / "results.csv")
    if ResultTable.read(out / "results.csv").rows != table.rows:
        raise DomainError("results.csv does not round-trip")
    if figures:
        write_decomposition(out / "fig8_decomposition.csv", first_decomposition)
        write_method_mse(out / "fig9_method_mse.csv", plan.seeds)
        write_efficiency_summary(out / "fig10_efficiency.csv", table)
    return table


# ------------------------------------------------------------------ entry point

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hettwin", description="Hierarchical twin orchestration experiments.")
    ap.add_argument("command", nargs="?", choices=("run", "validate"), default="run")
    ap.add_argument("--scenario", type=Path, help="scenario TOML file (defaults apply when omitted)")
    ap.add_argument("--variant", default="all",
                    help=f"one of {', '.join(VARIANTS)}, a comma list, or 'all' (default)")
    ap.add_argument("--seeds", default="1", help="seed range such as 1..5 or 1,2,7")
    ap.add_argument("--sweep", help="users=<comma list> of network scales")
    ap.add_argument("--out", type=Path, default=Path("out"))
    ap.add_argument("--workers", type=int, default=1, help="parallel sweep points")
    ap.add_argument("--no-figures", action="store_true", help="skip the plot-data CSV files")
    ap.add_argument("--validate", action="store_true", help="check the scenario file and exit")
    ap.add_argument("--list-attributes", action="store_true", help="print attribute names and default levels")
    return ap


def _setup_logging() -> None:
    level = os.environ.get("HETTWIN_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    if args.list_attributes:
        for name in ATTRIBUTES:
            print(f"{name}\t{DEFAULT_LEVELS[name]}")
        return 0
    if args.validate or args.command == "validate":
        if args.scenario is None:
            print("error: --validate needs --scenario", file=sys.stderr)
            return 2
        diags = validate_file(args.scenario)
        for d in diags:
            print(d, file=sys.stderr)
        if diags:
            return 2
        print(f"{args.scenario}: ok")
        return 0
    try:
        config = load_config(args.scenario) if args.scenario else ScenarioConfig()
    except ConfigError as exc:
        for d in exc.diagnostics:
            print(d, file=sys.stderr)
        return 2
    try:
        variants = VARIANTS if args.variant == "all" else tuple(v.strip() for v in args.variant.split(","))
        sweep = parse_sweep(args.sweep)
        scales = sweep[1] if sweep else [config.network.n_users]
        plan = ExperimentPlan(args.scenario, variants, parse_seeds(args.seeds), scales, args.out, args.workers)
    except (ValueError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        table = run_plan(plan, config, figures=not args.no_figures)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (DomainError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {len(table.rows)} rows to {plan.out / 'results.csv'}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
