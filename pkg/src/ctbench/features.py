"""Feature tensor: technical indicators and cross-sectional factors on log-returns.

All features are computed from the return matrix only; where a price level is
needed (moving-average ratios, RSI, Bollinger bands) the cumulative log-return
series is used as the log-price, so real and synthetic inputs get identical
treatment. Every feature is causal: the value at hour t depends only on
columns <= t. Cells inside a feature's warm-up window hold the feature's
neutral value, never NaN.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np
from scipy.stats import rankdata

from .errors import UnknownFeature, WindowTooLong
from .market_data import ReturnMatrix


@dataclass(frozen=True)
class FeatureSpec:
    name: str
    windows: tuple[int, ...]
    family: str
    neutral_value: float
    description: str


@dataclass(frozen=True, eq=False)
class FeatureTensor:
    """(n assets, l hours, d features), finite everywhere."""

    assets: tuple[str, ...]
    timestamps: np.ndarray
    names: tuple[str, ...]
    values: np.ndarray  # (n, l, d) float64

    def __post_init__(self):
        shape = (len(self.assets), len(self.timestamps), len(self.names))
        if self.values.shape != shape:
            raise ValueError(f"feature tensor shape {self.values.shape} != {shape}")
        if len(set(self.names)) != len(self.names):
            raise ValueError("feature names must be unique")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("feature tensor must be finite")


def _rolling_sum(x: np.ndarray, window: int) -> np.ndarray:
    """Causal rolling sum over the trailing `window` columns (valid from t = window-1).

    Prefix-sum based, so truncating the input to its first t columns leaves
    the first t outputs bit-identical.
    """
    cs = np.cumsum(x, axis=1)
    out = np.empty_like(cs)
    out[:, : window - 1] = np.nan
    out[:, window - 1] = cs[:, window - 1]
    out[:, window:] = cs[:, window:] - cs[:, :-window]
    return out


def _rolling_mean(x: np.ndarray, window: int) -> np.ndarray:
    return _rolling_sum(x, window) / window


def _rolling_std(x: np.ndarray, window: int) -> np.ndarray:
    mean = _rolling_mean(x, window)
    mean_sq = _rolling_mean(x * x, window)
    var = np.maximum(mean_sq - mean * mean, 0.0)
    return np.sqrt(var)


def _ema(x: np.ndarray, span: int) -> np.ndarray:
    alpha = 2.0 / (span + 1.0)
    out = np.empty_like(x)
    out[:, 0] = x[:, 0]
    for t in range(1, x.shape[1]):
        out[:, t] = out[:, t - 1] + alpha * (x[:, t] - out[:, t - 1])
    return out


def _fill_warmup(values: np.ndarray, first_valid: int, neutral: float) -> np.ndarray:
    values[:, :first_valid] = neutral
    return np.nan_to_num(values, nan=neutral, posinf=neutral, neginf=neutral)


def _sma_ratio(returns: np.ndarray, logp: np.ndarray, window: int) -> np.ndarray:
    price = np.exp(logp)
    out = price / _rolling_mean(price, window)
    return _fill_warmup(out, window - 1, 1.0)


def _ema_ratio(returns: np.ndarray, logp: np.ndarray, span: int) -> np.ndarray:
    price = np.exp(logp)
    out = price / _ema(price, span)
    return _fill_warmup(out, span - 1, 1.0)


def _momentum(returns: np.ndarray, logp: np.ndarray, window: int) -> np.ndarray:
    return _fill_warmup(_rolling_sum(returns, window), window - 1, 0.0)


def _volatility(returns: np.ndarray, logp: np.ndarray, window: int) -> np.ndarray:
    return _fill_warmup(_rolling_std(returns, window), window - 1, 0.0)


def _rsi(returns: np.ndarray, logp: np.ndarray, period: int) -> np.ndarray:
    """Wilder RSI on hourly log-price changes (the returns themselves)."""
    gains = np.maximum(returns, 0.0)
    losses = np.maximum(-returns, 0.0)
    n, l = returns.shape
    out = np.full((n, l), 50.0)
    if l < period:
        return out
    avg_gain = gains[:, :period].mean(axis=1)
    avg_loss = losses[:, :period].mean(axis=1)
    for t in range(period - 1, l):
        if t >= period:
            avg_gain = (avg_gain * (period - 1) + gains[:, t]) / period
            avg_loss = (avg_loss * (period - 1) + losses[:, t]) / period
        denom = avg_gain + avg_loss
        col = np.where(denom > 0.0, 100.0 * avg_gain / np.where(denom > 0, denom, 1.0), 50.0)
        out[:, t] = col
    return out


def _bollinger_pctb(returns: np.ndarray, logp: np.ndarray, window: int, k: float = 2.0) -> np.ndarray:
    mid = _rolling_mean(logp, window)
    sd = _rolling_std(logp, window)
    width = 2.0 * k * sd
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(width > 0.0, (logp - (mid - k * sd)) / np.where(width > 0, width, 1.0), 0.5)
    out[np.isnan(mid)] = np.nan
    return _fill_warmup(out, window - 1, 0.5)


def _zscore(returns: np.ndarray, logp: np.ndarray, window: int) -> np.ndarray:
    mean = _rolling_mean(returns, window)
    sd = _rolling_std(returns, window)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(sd > 0.0, (returns - mean) / np.where(sd > 0, sd, 1.0), 0.0)
    out[np.isnan(mean)] = np.nan
    return _fill_warmup(out, window - 1, 0.0)


def _xrank(base: np.ndarray) -> np.ndarray:
    """Cross-sectional average rank of each column, scaled to [0, 1]."""
    n = base.shape[0]
    if n == 1:
        return np.full_like(base, 0.5)
    ranks = rankdata(base, method="average", axis=0)
    return (ranks - 1.0) / (n - 1.0)


def _xrank_momentum(returns: np.ndarray, logp: np.ndarray, window: int) -> np.ndarray:
    return _xrank(_momentum(returns, logp, window))


def _xrank_volatility(returns: np.ndarray, logp: np.ndarray, window: int) -> np.ndarray:
    return _xrank(_volatility(returns, logp, window))


def _lag(returns: np.ndarray, logp: np.ndarray, lag: int) -> np.ndarray:
    out = np.zeros_like(returns)
    out[:, lag:] = returns[:, :-lag]
    return out


_CATALOG: list[tuple[FeatureSpec, object]] = []


def _register(name, windows, family, neutral, description, fn, *args):
    spec = FeatureSpec(name, tuple(windows), family, neutral, description)
    _CATALOG.append((spec, (fn, args)))


_register("sma_ratio_6", (6,), "trend", 1.0,
          "price over its 6h simple moving average", _sma_ratio, 6)
_register("sma_ratio_24", (24,), "trend", 1.0,
          "price over its 24h simple moving average", _sma_ratio, 24)
_register("sma_ratio_72", (72,), "trend", 1.0,
          "price over its 72h simple moving average", _sma_ratio, 72)
_register("ema_ratio_12", (12,), "trend", 1.0,
          "price over its 12h exponential moving average", _ema_ratio, 12)
_register("ema_ratio_48", (48,), "trend", 1.0,
          "price over its 48h exponential moving average", _ema_ratio, 48)
_register("momentum_6", (6,), "momentum", 0.0,
          "trailing 6h sum of log-returns", _momentum, 6)
_register("momentum_24", (24,), "momentum", 0.0,
          "trailing 24h sum of log-returns", _momentum, 24)
_register("momentum_72", (72,), "momentum", 0.0,
          "trailing 72h sum of log-returns", _momentum, 72)
_register("vol_24", (24,), "volatility", 0.0,
          "trailing 24h std of log-returns", _volatility, 24)
_register("vol_72", (72,), "volatility", 0.0,
          "trailing 72h std of log-returns", _volatility, 72)
_register("rsi_14", (14,), "oscillator", 50.0,
          "Wilder RSI(14) on hourly log-price changes", _rsi, 14)
_register("bollinger_pctb_20", (20,), "band", 0.5,
          "%B inside 20h, 2-sigma bands on the log-price", _bollinger_pctb, 20)
_register("zscore_24", (24,), "zscore", 0.0,
          "z-score of the return against its trailing 24h window", _zscore, 24)
_register("xrank_mom_24", (24,), "xrank", 0.5,
          "cross-sectional rank of trailing 24h return", _xrank_momentum, 24)
_register("xrank_vol_24", (24,), "xrank", 0.5,
          "cross-sectional rank of trailing 24h volatility", _xrank_volatility, 24)
_register("ret_lag_1", (1,), "lag", 0.0, "log-return lagged 1h", _lag, 1)
_register("ret_lag_24", (24,), "lag", 0.0, "log-return lagged 24h", _lag, 24)

_BY_NAME = {spec.name: (spec, builder) for spec, builder in _CATALOG}


def feature_catalog() -> list[FeatureSpec]:
    """The fixed built-in catalog, in computation order."""
    return [spec for spec, _ in _CATALOG]


def catalog_json() -> str:
    """Catalog dump: name, windows, family, neutral_value per feature."""
    entries = [
        {k: v for k, v in asdict(spec).items() if k != "description"}
        for spec in feature_catalog()
    ]
    return json.dumps(entries, indent=2)


def compute_features(
    returns: ReturnMatrix,
    specs: list[FeatureSpec] | list[str] | None = None,
) -> FeatureTensor:
    """Apply the requested catalog features to a return matrix.

    Per-asset features depend only on that asset's history up to t;
    cross-sectional ranks depend on the full column at t and earlier.
    """
    if specs is None:
        names = [spec.name for spec in feature_catalog()]
    else:
        names = [s if isinstance(s, str) else s.name for s in specs]
    for name in names:
        if name not in _BY_NAME:
            raise UnknownFeature(name)

    max_window = max(max(_BY_NAME[n][0].windows) for n in names)
    if returns.n_hours < max_window:
        raise WindowTooLong(
            f"series has {returns.n_hours} hours but feature window needs {max_window}"
        )

    values = returns.values
    logp = np.cumsum(values, axis=1)
    planes = []
    for name in names:
        fn, args = _BY_NAME[name][1]
        planes.append(fn(values, logp, *args))
    tensor = np.stack(planes, axis=2)
    return FeatureTensor(returns.assets, returns.timestamps, tuple(names), tensor)
