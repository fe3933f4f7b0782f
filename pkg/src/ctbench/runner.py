"""Run orchestration: execute every (task, model, split) cell, aggregate by
calendar year, and write the output tree.

Output layout (all numeric artifacts are byte-deterministic for a fixed
config and seed; wall-clock timings live in their own file):

    out/
      manifest.json     resolved config, hash, data summary, cell outcomes
      timings.json      per-cell fit/call wall-clock and yearly means
      metrics/*.json    one report per (model, task, strategy, fee, year)
      metrics/all.csv   the same reports as one flat table
      equity/*.csv      chained equity per (model, task, strategy, fee)
      equity/*.svg      log-scaled line chart of the same curve
      ranks/*.csv       per-(task, year) model ranks across metrics

A split belongs to the calendar year its test window starts in; equity is
chained multiplicatively across consecutive test windows (each window starts
from the previous window's final equity), and the year "all" covers the whole
period. Cells that fail are recorded and skipped, never fatal; cells whose
model lacks the required mode are recorded as skipped.
"""

from __future__ import annotations

import concurrent.futures
import dataclasses
import hashlib
import json
import logging
import re
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .config import BenchConfig, TaskSettings
from .errors import CtbenchError, EmptyYear
from .market_data import WindowSplit, iter_splits, load_ohlc, log_returns
from .metrics import (
    RANKED_METRICS,
    MetricsReport,
    RankTable,
    error_metrics,
    rank_metrics,
    rank_models,
    risk_metrics,
    trading_metrics,
)
from .strategies import EquityCurve, equity_to_csv, equity_to_svg
from .tasks import (
    PREDICTIVE_UTILITY,
    TaskResult,
    run_predictive_utility,
    run_stat_arb,
)
from .tsg import make_model

logger = logging.getLogger(__name__)

YEAR_ALL = "all"


def derive_seed(*parts) -> int:
    """Stable 63-bit seed from arbitrary labelled parts."""
    digest = hashlib.sha256(repr(parts).encode()).digest()
    return int.from_bytes(digest[:8], "little") >> 1


def sanitize(label: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", label).strip("_") or "x"


def fee_label(fee: float) -> str:
    basis_points = round(fee * 10_000, 6)
    if basis_points == int(basis_points):
        basis_points = int(basis_points)
    return f"fee{basis_points}bp"


def _json_value(value):
    if value is None:
        return None
    value = float(value)
    if np.isnan(value):
        return "NaN"
    if np.isinf(value):
        return "Infinity" if value > 0 else "-Infinity"
    return value


def _csv_value(value) -> str:
    if value is None:
        return ""
    value = float(value)
    if np.isnan(value):
        return "NaN"
    if np.isinf(value):
        return "Infinity" if value > 0 else "-Infinity"
    return repr(value)


def parse_numeric(text: str) -> float:
    if text == "" or text == "NaN":
        return float("nan")
    if text == "Infinity":
        return float("inf")
    if text == "-Infinity":
        return float("-inf")
    return float(text)


# -- cell execution -------------------------------------------------------------

@dataclass
class CellOutcome:
    task: str
    model_spec: str
    model_id: str
    tau: int
    status: str                     # ok | failed | skipped
    result: TaskResult | None = None
    detail: str = ""


def _run_cell(settings: TaskSettings, model_spec: str, split: WindowSplit,
              config: BenchConfig) -> CellOutcome:
    try:
        model = make_model(model_spec)
    except CtbenchError as exc:
        return CellOutcome(settings.task, model_spec, sanitize(model_spec), split.tau,
                           "failed", detail=f"{type(exc).__name__}: {exc}")
    needs_generate = settings.task == PREDICTIVE_UTILITY
    if needs_generate and not model.supports_generate:
        return CellOutcome(settings.task, model_spec, model.model_id, split.tau,
                           "skipped", detail="model does not support generation")
    if not needs_generate and not model.supports_reconstruct:
        return CellOutcome(settings.task, model_spec, model.model_id, split.tau,
                           "skipped", detail="model does not support reconstruction")

    seed = derive_seed(config.seed, settings.task, model_spec, split.tau)
    try:
        if settings.task == PREDICTIVE_UTILITY:
            result = run_predictive_utility(
                split, model,
                forecaster=settings.forecaster,
                strategies=settings.strategies,
                fees=config.fees,
                seed=seed,
                initial=config.initial_capital,
            )
        else:
            result = run_stat_arb(
                split, model,
                gamma=settings.gamma,
                fees=config.fees,
                seed=seed,
                initial=config.initial_capital,
            )
    except Exception as exc:  # crash isolation: one bad cell never stops the run
        logger.warning("cell failed: %s/%s tau=%d: %s",
                       settings.task, model.model_id, split.tau, exc)
        return CellOutcome(settings.task, model_spec, model.model_id, split.tau,
                           "failed", detail=f"{type(exc).__name__}: {exc}")
    return CellOutcome(settings.task, model_spec, model.model_id, split.tau, "ok", result)


# -- aggregation ------------------------------------------------------------------

def chain_curves(curves: list[EquityCurve], initial: float, fee: float) -> EquityCurve:
    """Chain consecutive test-window curves into one continuous curve."""
    growth = np.concatenate([c.growth for c in curves])
    turnover = np.concatenate([c.turnover for c in curves])
    timestamps = np.concatenate([np.asarray(c.timestamps) for c in curves])
    return EquityCurve(initial, fee, timestamps, growth, turnover)


def result_year(result: TaskResult) -> str:
    return str(result.test_start.astype("datetime64[Y]"))


def aggregate_yearly(
    results: list[TaskResult],
    strategies_fees: list[tuple[str, float]],
    initial: float,
    year: str | None = None,
) -> list[MetricsReport]:
    """Score a model/task result list, grouped by calendar year of the test
    window start plus the pooled group "all"; pass `year` to restrict."""
    if not results:
        raise EmptyYear("no results to aggregate")
    results = sorted(results, key=lambda r: r.tau)
    groups: dict[str, list[TaskResult]] = {YEAR_ALL: list(results)}
    for result in results:
        groups.setdefault(result_year(result), []).append(result)
    if year is not None:
        if year not in groups:
            raise EmptyYear(f"no split's test window starts in {year}")
        groups = {year: groups[year]}

    reports: list[MetricsReport] = []
    for group_year, group in sorted(groups.items()):
        actual = np.concatenate([r.actual[:, r.valid_from:] for r in group], axis=1)
        predicted = np.concatenate([r.predicted[:, r.valid_from:] for r in group], axis=1)
        mse, mae = error_metrics(actual, predicted)
        ranks = rank_metrics(actual, predicted)
        for strategy, fee in strategies_fees:
            chained = chain_curves([r.curves[(strategy, fee)] for r in group], initial, fee)
            cagr, sharpe = trading_metrics(chained)
            mdd, var95, es95 = risk_metrics(chained)
            reports.append(MetricsReport(
                model=group[0].model_id,
                task=group[0].task,
                strategy=strategy,
                fee=fee,
                year=group_year,
                splits=len(group),
                mse=mse, mae=mae,
                ic=ranks.ic, ir=ranks.ir,
                cagr=cagr, sharpe=sharpe,
                mdd=mdd, var95=var95, es95=es95,
                ic_hours=ranks.used_hours,
                ic_skipped=ranks.skipped_hours,
            ))
    return reports


def _yearly_timings(results: list[TaskResult]) -> dict[str, dict[str, float]]:
    groups: dict[str, list[TaskResult]] = {YEAR_ALL: list(results)}
    for result in results:
        groups.setdefault(result_year(result), []).append(result)
    out = {}
    for year, group in sorted(groups.items()):
        fits = [r.timings.get("fit_s") for r in group]
        calls = [s for r in group for s in r.timings.get("model_calls_s", [])]
        out[year] = {
            "train_time_s": float(np.mean([f for f in fits if f is not None])),
            "infer_time_s": float(np.mean(calls)) if calls else None,
        }
    return out


# -- output writing ----------------------------------------------------------------

_CSV_COLUMNS = (
    "task", "model", "strategy", "fee", "year", "splits",
    "mse", "mae", "ic", "ir", "cagr", "sharpe", "mdd", "var95", "es95",
    "ic_hours", "ic_skipped",
)


def _report_row(report: MetricsReport) -> str:
    cells = [
        report.task, report.model, report.strategy, repr(report.fee), report.year,
        str(report.splits),
        _csv_value(report.mse), _csv_value(report.mae),
        _csv_value(report.ic), _csv_value(report.ir),
        _csv_value(report.cagr), _csv_value(report.sharpe),
        _csv_value(report.mdd), _csv_value(report.var95), _csv_value(report.es95),
        str(report.ic_hours), str(report.ic_skipped),
    ]
    return ",".join(cells)


def write_reports(reports: list[MetricsReport], out_dir: Path) -> list[str]:
    metrics_dir = out_dir / "metrics"
    metrics_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for report in reports:
        name = "__".join([
            sanitize(report.model), report.task, sanitize(report.strategy),
            fee_label(report.fee), report.year,
        ]) + ".json"
        payload = {
            "model": report.model,
            "task": report.task,
            "strategy": report.strategy,
            "fee": report.fee,
            "year": report.year,
            "splits": report.splits,
            "ic_hours": report.ic_hours,
            "ic_skipped": report.ic_skipped,
            "metrics": {
                metric: _json_value(report.metric_value(metric))
                for metric in ("mse", "mae", "ic", "ir", "cagr", "sharpe",
                               "mdd", "var95", "es95")
            },
        }
        (metrics_dir / name).write_text(
            json.dumps(payload, sort_keys=True, indent=2, allow_nan=False) + "\n"
        )
        paths.append(f"metrics/{name}")

    rows = sorted(
        _report_row(r)
        for r in reports
    )
    (metrics_dir / "all.csv").write_text(
        ",".join(_CSV_COLUMNS) + "\n" + "\n".join(rows) + ("\n" if rows else "")
    )
    paths.append("metrics/all.csv")
    return paths


def write_rank_tables(tables: list[RankTable], out_dir: Path) -> list[str]:
    ranks_dir = out_dir / "ranks"
    ranks_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for table in tables:
        lines = ["model," + ",".join(RANKED_METRICS)]
        for model in table.models:
            cells = [model]
            for metric in RANKED_METRICS:
                rank = table.ranks.get(metric, {}).get(model)
                cells.append("" if rank is None else repr(rank))
            lines.append(",".join(cells))
        name = f"{table.task}__{table.year}.csv"
        (ranks_dir / name).write_text("\n".join(lines) + "\n")
        paths.append(f"ranks/{name}")
    return paths


# -- the run ------------------------------------------------------------------------

@dataclass
class RunSummary:
    out_dir: Path
    ok_cells: int = 0
    failed: list[dict] = field(default_factory=list)
    skipped: list[dict] = field(default_factory=list)
    reports: list[MetricsReport] = field(default_factory=list)

    @property
    def all_ok(self) -> bool:
        return not self.failed


def run_benchmark(config: BenchConfig, out_dir: str | Path, jobs: int = 1) -> RunSummary:
    """Execute the full benchmark grid and write the output tree."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    summary = RunSummary(out_dir=out_dir)

    prices = load_ohlc(config.data_dir, config.start, config.end)
    returns = log_returns(prices)
    logger.info("loaded %d assets x %d hourly returns", returns.n_assets, returns.n_hours)

    cells: list[tuple[TaskSettings, str, WindowSplit]] = []
    task_plans: dict[str, dict] = {}
    for settings in config.tasks:
        splits = iter_splits(returns, config.window_hours, settings.step_hours)
        task_plans[settings.task] = {
            "window_hours": config.window_hours,
            "step_hours": settings.step_hours,
            "offsets": [s.tau for s in splits],
        }
        for model_spec in settings.models:
            for split in splits:
                cells.append((settings, model_spec, split))

    started = time.perf_counter()
    if jobs > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(
                lambda cell: _run_cell(cell[0], cell[1], cell[2], config), cells
            ))
    else:
        outcomes = [_run_cell(s, m, sp, config) for s, m, sp in cells]
    wall_s = time.perf_counter() - started

    by_model_task: dict[tuple[str, str], list[TaskResult]] = {}
    grid_of: dict[str, TaskSettings] = {t.task: t for t in config.tasks}
    for outcome in outcomes:
        key = {"task": outcome.task, "model": outcome.model_id, "tau": outcome.tau,
               "detail": outcome.detail}
        if outcome.status == "ok":
            summary.ok_cells += 1
            by_model_task.setdefault((outcome.task, outcome.model_id), []).append(outcome.result)
        elif outcome.status == "skipped":
            summary.skipped.append(key)
        else:
            summary.failed.append(key)

    artifacts: list[str] = []
    reports: list[MetricsReport] = []
    timings: dict = {"wall_s": wall_s, "cells": [], "yearly": {}}
    equity_dir = out_dir / "equity"
    equity_dir.mkdir(parents=True, exist_ok=True)

    for (task, model_id), results in sorted(by_model_task.items()):
        settings = grid_of[task]
        if task == PREDICTIVE_UTILITY:
            strategies_fees = [(s, f) for s in settings.strategies for f in config.fees]
        else:
            strategies_fees = [("stat_arb", f) for f in config.fees]
        reports.extend(aggregate_yearly(results, strategies_fees, config.initial_capital))

        results = sorted(results, key=lambda r: r.tau)
        for strategy, fee in strategies_fees:
            chained = chain_curves([r.curves[(strategy, fee)] for r in results],
                                   config.initial_capital, fee)
            stem = "__".join([sanitize(model_id), task, sanitize(strategy), fee_label(fee)])
            equity_to_csv(chained, equity_dir / f"{stem}.csv")
            equity_to_svg(chained, equity_dir / f"{stem}.svg",
                          title=f"{model_id} / {task} / {strategy} / {fee_label(fee)}")
            artifacts += [f"equity/{stem}.csv", f"equity/{stem}.svg"]

        for result in results:
            timings["cells"].append({
                "task": task, "model": model_id, "tau": result.tau,
                "fit_s": result.timings.get("fit_s"),
                "model_calls_s": result.timings.get("model_calls_s", []),
                "forecast_s": result.timings.get("forecast_s"),
            })
        timings["yearly"][f"{model_id}__{task}"] = _yearly_timings(results)

    artifacts += write_reports(reports, out_dir)
    ranked = [dataclasses.replace(r) for r in reports]
    _join_timings(ranked, timings["yearly"])
    artifacts += write_rank_tables(build_rank_tables(ranked), out_dir)
    summary.reports = reports

    (out_dir / "timings.json").write_text(json.dumps(timings, sort_keys=True, indent=2) + "\n")

    manifest = {
        "version": __version__,
        "config": config.resolved_dict(),
        "config_hash": config.config_hash(),
        "data": {
            "assets": list(returns.assets),
            "hours": returns.n_hours,
            "start": str(returns.timestamps[0]),
            "end": str(returns.timestamps[-1]),
        },
        "task_plans": task_plans,
        "cells": {
            "ok": summary.ok_cells,
            "failed": summary.failed,
            "skipped": summary.skipped,
        },
        "artifacts": sorted(artifacts),
    }
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=2) + "\n"
    )
    return summary


def _join_timings(reports: list[MetricsReport], yearly: dict) -> None:
    """Attach yearly timing means so the rank tables can cover efficiency."""
    for report in reports:
        entry = yearly.get(f"{report.model}__{report.task}", {}).get(report.year)
        if entry:
            report.train_time_s = entry.get("train_time_s")
            report.infer_time_s = entry.get("infer_time_s")


def build_rank_tables(reports: list[MetricsReport]) -> list[RankTable]:
    """Rank models per (task, year), using only models that cover the whole
    strategy/fee grid of the group; groups with fewer than two such models
    are skipped."""
    groups: dict[tuple[str, str], list[MetricsReport]] = {}
    for report in reports:
        groups.setdefault((report.task, report.year), []).append(report)

    tables = []
    for (task, year), group in sorted(groups.items()):
        grids: dict[str, set] = {}
        for report in group:
            grids.setdefault(report.model, set()).add((report.strategy, report.fee))
        full = max(grids.values(), key=len) if grids else set()
        usable = {m for m, g in grids.items() if g == full}
        if len(usable) < 2:
            continue
        subset = [r for r in group if r.model in usable]
        tables.extend(rank_models(subset))
    return tables


# -- re-ranking from a finished run ---------------------------------------------------

def load_reports_csv(path: str | Path) -> list[MetricsReport]:
    lines = Path(path).read_text().strip().splitlines()
    header = lines[0].split(",")
    if tuple(header) != _CSV_COLUMNS:
        raise CtbenchError(f"{path}: unexpected columns {header}")
    reports = []
    for line in lines[1:]:
        cells = line.split(",")
        row = dict(zip(header, cells))
        reports.append(MetricsReport(
            model=row["model"], task=row["task"], strategy=row["strategy"],
            fee=float(row["fee"]), year=row["year"], splits=int(row["splits"]),
            mse=parse_numeric(row["mse"]), mae=parse_numeric(row["mae"]),
            ic=parse_numeric(row["ic"]), ir=parse_numeric(row["ir"]),
            cagr=parse_numeric(row["cagr"]), sharpe=parse_numeric(row["sharpe"]),
            mdd=parse_numeric(row["mdd"]), var95=parse_numeric(row["var95"]),
            es95=parse_numeric(row["es95"]),
            ic_hours=int(row["ic_hours"]), ic_skipped=int(row["ic_skipped"]),
        ))
    return reports


def rerank(run_dir: str | Path) -> list[str]:
    """Rebuild ranks/*.csv from a finished run's metrics/all.csv (and
    timings.json when present, for the efficiency columns)."""
    run_dir = Path(run_dir)
    reports = load_reports_csv(run_dir / "metrics" / "all.csv")
    timings_path = run_dir / "timings.json"
    if timings_path.is_file():
        _join_timings(reports, json.loads(timings_path.read_text()).get("yearly", {}))
    return write_rank_tables(build_rank_tables(reports), run_dir)
