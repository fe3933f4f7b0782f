"""Financial evaluation suite: error, rank, trading, risk, and timing metrics.

Conventions, fixed here and used everywhere:

* One year is 8760 hours; CAGR = (V_end / V_0) ** (8760 / hours) - 1 and the
  Sharpe ratio annualizes with sqrt(8760) at zero risk-free rate.
* Standard deviations are population (divide by N).
* VaR(95) negates the 5% quantile of hourly equity returns, taken with the
  interpolated-inverted-CDF convention (position p*n on the 1-based sorted
  sample, linear between order statistics), so the 5th percentile of 100
  returns is exactly the 5th worst. ES(95) is the mean of returns at or
  below -VaR.
* Undefined values (zero-volatility Sharpe, an information ratio with zero
  IC dispersion, short samples for VaR/ES) are explicit non-finite sentinels
  and are excluded from rankings with a footnote count, never dropped
  silently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields

import numpy as np
from scipy.stats import rankdata

from .errors import InconsistentGrouping, MissingPhase, ShapeMismatch
from .strategies import EquityCurve

HOURS_PER_YEAR = 8760

HIGHER_BETTER = ("ic", "ir", "cagr", "sharpe")
LOWER_BETTER = ("mse", "mae", "mdd", "var95", "es95", "train_time_s", "infer_time_s")
RANKED_METRICS = ("mse", "mae", "ic", "ir", "cagr", "sharpe", "mdd", "var95", "es95",
                  "train_time_s", "infer_time_s")


# -- error metrics ----------------------------------------------------

def error_metrics(actual: np.ndarray, predicted: np.ndarray) -> tuple[float, float]:
    """Mean squared and mean absolute error over all (split, hour, asset) cells."""
    actual = np.asarray(actual, dtype=np.float64)
    predicted = np.asarray(predicted, dtype=np.float64)
    if actual.shape != predicted.shape:
        raise ShapeMismatch(f"actual {actual.shape} vs predicted {predicted.shape}")
    if actual.size == 0:
        return float("nan"), float("nan")
    diff = actual - predicted
    return float(np.mean(diff * diff)), float(np.mean(np.abs(diff)))


# -- rank metrics -----------------------------------------------------

def spearman(x: np.ndarray, y: np.ndarray) -> float | None:
    """Spearman correlation with average-rank ties; None when either input
    is constant."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    rx = rankdata(x, method="average")
    ry = rankdata(y, method="average")
    sx = rx - rx.mean()
    sy = ry - ry.mean()
    den = math.sqrt(float(sx @ sx) * float(sy @ sy))
    if den == 0.0:
        return None
    return float(sx @ sy) / den


@dataclass(frozen=True)
class RankMetrics:
    ic: float
    ir: float
    per_hour: np.ndarray = field(repr=False)
    used_hours: int
    skipped_hours: int


def _ratio_sentinel(mean: float, std: float) -> float:
    if std > 0.0:
        return mean / std
    if mean > 0.0:
        return float("inf")
    if mean < 0.0:
        return float("-inf")
    return float("nan")


def rank_metrics(
    actual: np.ndarray, predicted: np.ndarray, min_assets: int = 3
) -> RankMetrics:
    """Per-hour Spearman between prediction and realization cross-sections.

    Hours with a constant vector, non-finite entries, or fewer than
    `min_assets` valid pairs are skipped and counted. IC is the mean per-hour
    correlation, IR its mean over (population) standard deviation.
    """
    actual = np.asarray(actual, dtype=np.float64)
    predicted = np.asarray(predicted, dtype=np.float64)
    if actual.shape != predicted.shape:
        raise ShapeMismatch(f"actual {actual.shape} vs predicted {predicted.shape}")
    per_hour: list[float] = []
    skipped = 0
    for t in range(actual.shape[1]):
        a, p = actual[:, t], predicted[:, t]
        valid = np.isfinite(a) & np.isfinite(p)
        if valid.sum() < min_assets:
            skipped += 1
            continue
        rho = spearman(a[valid], p[valid])
        if rho is None:
            skipped += 1
            continue
        per_hour.append(rho)
    series = np.array(per_hour)
    if series.size == 0:
        return RankMetrics(float("nan"), float("nan"), series, 0, skipped)
    ic = float(series.mean())
    ir = _ratio_sentinel(ic, float(series.std()))
    return RankMetrics(ic, ir, series, int(series.size), skipped)


# -- trading metrics ----------------------------------------------------

def trading_metrics(curve: EquityCurve, hours: int | None = None) -> tuple[float, float]:
    """Compound annual growth rate and annualized Sharpe ratio of a curve."""
    hours = curve.n_hours if hours is None else hours
    if hours < 2:
        raise ValueError("need at least 2 hourly observations")
    ratio = curve.final / curve.initial
    cagr = ratio ** (HOURS_PER_YEAR / hours) - 1.0
    rets = curve.hourly_returns
    sharpe = _ratio_sentinel(float(rets.mean()), float(rets.std()))
    if np.isfinite(sharpe):
        sharpe *= math.sqrt(HOURS_PER_YEAR)
    return float(cagr), float(sharpe)


# -- risk metrics ---------------------------------------------------

def quantile_sorted(sorted_values: np.ndarray, q: float) -> float:
    """Interpolated inverted CDF quantile of an ascending-sorted sample."""
    n = len(sorted_values)
    position = q * n  # 1-based
    if position <= 1.0:
        return float(sorted_values[0])
    if position >= n:
        return float(sorted_values[-1])
    lower = int(math.floor(position))
    frac = position - lower
    return float(sorted_values[lower - 1] + frac * (sorted_values[lower] - sorted_values[lower - 1]))


def risk_metrics(curve: EquityCurve, min_hours: int = 20) -> tuple[float, float, float]:
    """Maximum drawdown plus 95% VaR and expected shortfall of hourly returns.

    VaR/ES need at least `min_hours` observations and come back as NaN
    sentinels otherwise. MDD is measured on the path including the starting
    capital.
    """
    path = np.concatenate([[curve.initial], curve.equity])
    peaks = np.maximum.accumulate(path)
    mdd = float(np.max((peaks - path) / peaks))

    rets = curve.hourly_returns
    if len(rets) < min_hours:
        return mdd, float("nan"), float("nan")
    ordered = np.sort(rets)
    var95 = -quantile_sorted(ordered, 0.05)
    tail = ordered[ordered <= -var95]
    es95 = -float(tail.mean())
    return mdd, float(var95), es95


# -- timing metrics -----------------------------------------------------

def timing_metrics(fit_seconds: float | None, call_seconds: list[float]) -> tuple[float, float]:
    """Training wall-clock and mean per-call generate/reconstruct wall-clock."""
    if fit_seconds is None:
        raise MissingPhase("no fit phase recorded")
    if not call_seconds:
        raise MissingPhase("no generate/reconstruct call recorded")
    return float(fit_seconds), float(np.mean(call_seconds))


# -- report + ranking ---------------------------------------------------------------

@dataclass
class MetricsReport:
    """One scored cell: (model, task, strategy, fee, year)."""

    model: str
    task: str
    strategy: str
    fee: float
    year: str
    splits: int
    mse: float = float("nan")
    mae: float = float("nan")
    ic: float = float("nan")
    ir: float = float("nan")
    cagr: float = float("nan")
    sharpe: float = float("nan")
    mdd: float = float("nan")
    var95: float = float("nan")
    es95: float = float("nan")
    ic_hours: int = 0
    ic_skipped: int = 0
    train_time_s: float | None = None
    infer_time_s: float | None = None

    def metric_value(self, name: str) -> float:
        value = getattr(self, name)
        return float("nan") if value is None else float(value)


METRIC_FIELDS = tuple(
    f.name for f in fields(MetricsReport)
    if f.name in ("mse", "mae", "ic", "ir", "cagr", "sharpe", "mdd", "var95", "es95")
)


@dataclass(frozen=True)
class RankTable:
    """Per-metric model ranks (1 = best, average ranks on ties) for one group."""

    task: str
    year: str
    models: tuple[str, ...]
    ranks: dict[str, dict[str, float]]      # metric -> model -> rank
    values: dict[str, dict[str, float]]     # metric -> model -> averaged value
    excluded: dict[str, int]                # metric -> models excluded (undefined value)


def rank_values(values: dict[str, float], higher_better: bool) -> dict[str, float]:
    """Average-rank models on one metric; non-finite values are excluded."""
    usable = {m: v for m, v in values.items() if np.isfinite(v)}
    if not usable:
        return {}
    models = sorted(usable)
    data = np.array([usable[m] for m in models])
    oriented = -data if higher_better else data
    ranks = rankdata(oriented, method="average")
    return {m: float(r) for m, r in zip(models, ranks)}


def rank_models(reports: list[MetricsReport], metrics: tuple[str, ...] = RANKED_METRICS,
                ) -> list[RankTable]:
    """Aggregate reports into per-(task, year) rank tables.

    Metric values are first averaged per model over strategies and fee
    scenarios, then ranked across models. Groups need at least two models;
    every model in a group must cover the same (strategy, fee) grid.
    """
    groups: dict[tuple[str, str], list[MetricsReport]] = {}
    for report in reports:
        groups.setdefault((report.task, report.year), []).append(report)

    tables = []
    for (task, year), group in sorted(groups.items()):
        by_model: dict[str, list[MetricsReport]] = {}
        for report in group:
            by_model.setdefault(report.model, []).append(report)
        if len(by_model) < 2:
            raise InconsistentGrouping(
                f"ranking {task}/{year} needs >= 2 models, got {len(by_model)}"
            )
        grids = {
            model: sorted((r.strategy, r.fee) for r in model_reports)
            for model, model_reports in by_model.items()
        }
        reference = next(iter(grids.values()))
        if any(grid != reference for grid in grids.values()):
            raise InconsistentGrouping(
                f"ranking {task}/{year}: models cover different strategy/fee grids"
            )

        values: dict[str, dict[str, float]] = {}
        ranks: dict[str, dict[str, float]] = {}
        excluded: dict[str, int] = {}
        for metric in metrics:
            per_model = {}
            for model, model_reports in by_model.items():
                vals = np.array([r.metric_value(metric) for r in model_reports])
                per_model[model] = float(vals.mean()) if np.all(np.isfinite(vals)) else float("nan")
            values[metric] = per_model
            ranks[metric] = rank_values(per_model, metric in HIGHER_BETTER)
            excluded[metric] = len(per_model) - len(ranks[metric])
        tables.append(RankTable(task, year, tuple(sorted(by_model)), ranks, values, excluded))
    return tables
