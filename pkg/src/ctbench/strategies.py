"""Portfolio construction rules and the hourly rebalanced equity simulator.

Weight conventions: every rule emits portfolio fractions with gross exposure
at most 1 (flat hours are all-zero). Ranks are taken on predicted next-hour
returns, descending, with ties broken by ascending asset id. Weights derived
from the prediction for hour t are applied to the realized returns of hour t,
i.e. the position is entered at the end of hour t-1 and held over (t-1, t].

The simulator converts log-returns to simple returns, applies portfolio
growth, then charges a proportional fee on turnover (the book starts empty,
so the first hour pays full entry costs):

    g_t   = 1 + sum_i w[i,t] * (exp(r[i,t]) - 1)
    T_t   = sum_i |w[i,t] - w[i,t-1]|          (w[:,-1] = 0)
    V_t   = V_{t-1} * g_t * (1 - fee * T_t)
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import Bankruptcy, DegeneratePredictions, TooFewAssets
from .market_data import ReturnMatrix

DEFAULT_INITIAL_CAPITAL = 10_000.0


@dataclass(frozen=True, eq=False)
class WeightMatrix:
    """Hourly portfolio fractions: (n assets, T hours), gross exposure <= 1."""

    assets: tuple[str, ...]
    timestamps: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        if self.values.shape != (len(self.assets), len(self.timestamps)):
            raise ValueError("weight matrix shape mismatch")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("weights must be finite")
        gross = np.abs(self.values).sum(axis=0)
        if np.any(gross > 1.0 + 1e-12):
            raise ValueError(f"gross exposure exceeds 1: max {gross.max()}")


@dataclass(frozen=True, eq=False)
class EquityCurve:
    """Simulated equity path; `growth` holds net per-hour factors V_t / V_{t-1}."""

    initial: float
    fee: float
    timestamps: np.ndarray
    growth: np.ndarray
    turnover: np.ndarray

    @property
    def equity(self) -> np.ndarray:
        return self.initial * np.cumprod(self.growth)

    @property
    def hourly_returns(self) -> np.ndarray:
        return self.growth - 1.0

    @property
    def pnl(self) -> np.ndarray:
        eq = self.equity
        return np.diff(eq, prepend=self.initial)

    @property
    def final(self) -> float:
        return float(self.initial * self.growth.prod())

    @property
    def n_hours(self) -> int:
        return len(self.growth)


def _rank_order(predictions: np.ndarray, assets: tuple[str, ...] | None) -> np.ndarray:
    """Indices sorted by descending prediction; ties by ascending asset id."""
    predictions = np.asarray(predictions, dtype=np.float64)
    if assets is not None:
        tiebreak = np.argsort(np.argsort(np.asarray(assets)))
    else:
        tiebreak = np.arange(len(predictions))
    return np.lexsort((tiebreak, -predictions))


def weights_csm(predictions: np.ndarray, assets: tuple[str, ...] | None = None) -> np.ndarray:
    """Cross-sectional momentum: long the top decile, short the bottom decile."""
    n = len(predictions)
    if n < 10:
        raise TooFewAssets(f"cross-sectional momentum needs >= 10 assets, got {n}")
    q = math.ceil(n / 10)
    order = _rank_order(predictions, assets)
    weights = np.zeros(n)
    weights[order[:q]] = 0.5 / q
    weights[order[n - q:]] = -0.5 / q
    return weights


def weights_lotq(predictions: np.ndarray, assets: tuple[str, ...] | None = None) -> np.ndarray:
    """Long-only top quintile, equally weighted."""
    n = len(predictions)
    if n < 5:
        raise TooFewAssets(f"top-quintile rule needs >= 5 assets, got {n}")
    q = math.ceil(n / 5)
    order = _rank_order(predictions, assets)
    weights = np.zeros(n)
    weights[order[:q]] = 1.0 / q
    return weights


def weights_pw(predictions: np.ndarray, assets: tuple[str, ...] | None = None) -> np.ndarray:
    """Proportional weighting, normalized by the absolute prediction sum.

    Identical to dividing by the plain sum whenever predictions share one
    sign; the absolute normalization keeps mixed-sign hours bounded instead
    of exploding when the plain sum crosses zero.
    """
    predictions = np.asarray(predictions, dtype=np.float64)
    denom = np.abs(predictions).sum()
    if denom == 0.0:
        raise DegeneratePredictions("all predictions are zero")
    return predictions / denom


def weights_half_ls(predictions: np.ndarray, assets: tuple[str, ...] | None = None) -> np.ndarray:
    """Dollar-neutral book: long the top half, short the bottom half."""
    n = len(predictions)
    if n < 2:
        raise TooFewAssets(f"half long-short needs >= 2 assets, got {n}")
    half = n // 2
    order = _rank_order(predictions, assets)
    weights = np.zeros(n)
    weights[order[:half]] = 0.5 / half
    weights[order[n - half:]] = -0.5 / half
    return weights


STRATEGIES = {
    "csm": weights_csm,
    "lotq": weights_lotq,
    "pw": weights_pw,
    "half_ls": weights_half_ls,
}


def simulate(
    weights: WeightMatrix | np.ndarray,
    test_returns: ReturnMatrix | np.ndarray,
    fee: float = 0.0,
    initial: float = DEFAULT_INITIAL_CAPITAL,
) -> EquityCurve:
    """Run the hourly rebalanced portfolio on realized log-returns."""
    w = weights.values if isinstance(weights, WeightMatrix) else np.asarray(weights, float)
    if isinstance(test_returns, ReturnMatrix):
        r = test_returns.values
        timestamps = test_returns.timestamps
    else:
        r = np.asarray(test_returns, dtype=np.float64)
        timestamps = np.arange(r.shape[1])
    if w.shape != r.shape:
        raise ValueError(f"weights {w.shape} vs returns {r.shape}")
    if fee < 0.0:
        raise ValueError("fee must be >= 0")
    if initial <= 0.0:
        raise ValueError("initial capital must be > 0")

    simple = np.expm1(r)
    gross_growth = 1.0 + np.einsum("it,it->t", w, simple)
    previous = np.concatenate([np.zeros((w.shape[0], 1)), w[:, :-1]], axis=1)
    turnover = np.abs(w - previous).sum(axis=0)
    net_growth = gross_growth * (1.0 - fee * turnover)
    if np.any(net_growth <= 0.0):
        hour = int(np.argmax(net_growth <= 0.0))
        raise Bankruptcy(f"equity wiped out at hour {hour}")
    return EquityCurve(float(initial), float(fee), timestamps, net_growth, turnover)


# -- exports -------------------------------------------------------------------

def equity_to_csv(curve: EquityCurve, path: str | Path) -> None:
    """CSV export: timestamp,equity,pnl,turnover (one row per test hour)."""
    equity = curve.equity
    pnl = curve.pnl
    lines = ["timestamp,equity,pnl,turnover"]
    for i in range(curve.n_hours):
        stamp = curve.timestamps[i]
        if isinstance(stamp, np.datetime64):
            stamp = np.datetime_as_string(stamp.astype("datetime64[s]"), timezone="naive") + "Z"
        lines.append(
            f"{stamp},{float(equity[i])!r},{float(pnl[i])!r},{float(curve.turnover[i])!r}"
        )
    Path(path).write_text("\n".join(lines) + "\n")


def equity_to_svg(curve: EquityCurve, path: str | Path, title: str = "") -> None:
    """Minimal log-scaled line chart of the equity path."""
    width, height, pad = 860, 420, 54
    eq = np.concatenate([[curve.initial], curve.equity])
    logs = np.log10(eq)
    lo, hi = float(logs.min()), float(logs.max())
    if hi - lo < 1e-9:
        lo, hi = lo - 0.5, hi + 0.5
    xs = pad + (width - 2 * pad) * np.arange(len(eq)) / max(len(eq) - 1, 1)
    ys = height - pad - (height - 2 * pad) * (logs - lo) / (hi - lo)
    points = " ".join(f"{x:.2f},{y:.2f}" for x, y in zip(xs, ys))

    def _label(value: float) -> str:
        return f"{value:,.0f}" if value >= 10 else f"{value:.3g}"

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.0f}" y="22" text-anchor="middle" '
        f'font-family="sans-serif" font-size="14">{title}</text>',
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" '
        'stroke="black" stroke-width="1"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" '
        'stroke="black" stroke-width="1"/>',
        f'<text x="{pad - 6}" y="{height - pad + 4}" text-anchor="end" '
        f'font-family="sans-serif" font-size="11">{_label(10 ** lo)}</text>',
        f'<text x="{pad - 6}" y="{pad + 4}" text-anchor="end" '
        f'font-family="sans-serif" font-size="11">{_label(10 ** hi)}</text>',
        f'<text x="{width - pad}" y="{height - pad + 16}" text-anchor="end" '
        f'font-family="sans-serif" font-size="11">{curve.n_hours} h, '
        f'final {_label(curve.final)} (log scale)</text>',
        f'<polyline fill="none" stroke="#1f77b4" stroke-width="1.5" points="{points}"/>',
        "</svg>",
    ]
    Path(path).write_text("\n".join(parts) + "\n")
