"""OHLC ingestion, log-returns, walk-forward splits, and descriptive statistics.

Candle files: one CSV per asset named ``<ASSET>.csv`` with header
``timestamp,open,high,low,close[,volume]``. Timestamps are ISO-8601 UTC or
integer epoch milliseconds, sorted ascending, on an exact hourly grid. A
directory of such files is a dataset. Volume is accepted and ignored.

Assets that do not cover the common hourly range without gaps are dropped at
load time (and reported via logging) rather than imputed.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import (
    InvalidWindow,
    NoCommonTimespan,
    NonPositivePrice,
    OffsetOutOfRange,
    UnreadableSource,
)

logger = logging.getLogger(__name__)

HOUR = np.timedelta64(1, "h")

_REQUIRED_COLUMNS = ("timestamp", "open", "high", "low", "close")


@dataclass(frozen=True, eq=False)
class PriceTensor:
    """Aligned hourly OHLC prices: (n assets, l+1 hours, 4 fields)."""

    assets: tuple[str, ...]
    timestamps: np.ndarray  # (l+1,) datetime64[ns], strictly hourly
    values: np.ndarray      # (n, l+1, 4) float64: open, high, low, close

    def __post_init__(self):
        n, t = len(self.assets), len(self.timestamps)
        if self.values.shape != (n, t, 4):
            raise ValueError(f"price tensor shape {self.values.shape} != {(n, t, 4)}")
        _require_hourly(self.timestamps)
        if not np.all(np.isfinite(self.values)):
            raise ValueError("prices must be finite")
        if np.any(self.values <= 0.0):
            raise NonPositivePrice("prices must be strictly positive")
        o, h, low, c = (self.values[:, :, k] for k in range(4))
        if np.any(low > np.minimum(o, c)) or np.any(h < np.maximum(o, c)):
            raise ValueError("candle bounds violated: need L <= min(O, C) and H >= max(O, C)")

    @property
    def n_assets(self) -> int:
        return len(self.assets)

    def close(self) -> np.ndarray:
        return self.values[:, :, 3]


@dataclass(frozen=True, eq=False)
class ReturnMatrix:
    """Hourly log-returns: (n assets, l hours)."""

    assets: tuple[str, ...]
    timestamps: np.ndarray  # (l,) datetime64[ns]
    values: np.ndarray      # (n, l) float64

    def __post_init__(self):
        if self.values.shape != (len(self.assets), len(self.timestamps)):
            raise ValueError(
                f"return matrix shape {self.values.shape} != "
                f"{(len(self.assets), len(self.timestamps))}"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValueError("returns must be finite")

    @property
    def n_assets(self) -> int:
        return len(self.assets)

    @property
    def n_hours(self) -> int:
        return len(self.timestamps)

    def columns(self, start: int, stop: int) -> "ReturnMatrix":
        """Column slice [start, stop) with matching timestamps."""
        return ReturnMatrix(self.assets, self.timestamps[start:stop], self.values[:, start:stop])


@dataclass(frozen=True)
class SplitPlan:
    """Walk-forward offsets: train on [tau-w+1, tau], test on [tau+1, tau+s]."""

    window: int
    step: int
    offsets: tuple[int, ...]

    @property
    def count(self) -> int:
        return len(self.offsets)


@dataclass(frozen=True, eq=False)
class WindowSplit:
    """One walk-forward split: the offset plus its train/test slices."""

    tau: int
    window: int
    step: int
    train: ReturnMatrix
    test: ReturnMatrix


@dataclass(frozen=True)
class StatsSummary:
    """Descriptive statistics in percent, keyed by asset id and UTC hour of day."""

    asset_mean_pct: dict[str, float]
    asset_vol_pct: dict[str, float]
    hour_mean_pct: dict[int, float]
    hour_vol_pct: dict[int, float]
    hour_counts: dict[int, int]


def _to_utc64(value: np.datetime64 | str) -> np.datetime64:
    """Parse an instant (ISO string, optionally tz-aware, or datetime64) to UTC ns."""
    stamp = pd.Timestamp(value)
    stamp = stamp.tz_localize("UTC") if stamp.tzinfo is None else stamp.tz_convert("UTC")
    return np.datetime64(stamp.tz_localize(None), "ns")


def _require_hourly(ts: np.ndarray) -> None:
    if len(ts) >= 2:
        deltas = np.diff(ts)
        if np.any(deltas != HOUR):
            raise ValueError("timestamps must be strictly increasing with uniform 1h spacing")


def _read_candle_file(path: Path) -> tuple[np.ndarray, np.ndarray]:
    """Parse one candle CSV into (timestamps, (T, 4) OHLC).

    Rows with any missing OHLC field are removed here; the gap then shows up
    as a missing hour and the asset is dropped by the caller.
    """
    try:
        df = pd.read_csv(path)
    except Exception as exc:
        raise UnreadableSource(f"{path}: {exc}") from exc
    missing = [c for c in _REQUIRED_COLUMNS if c not in df.columns]
    if missing:
        raise UnreadableSource(f"{path}: missing columns {missing}")

    raw_ts = df["timestamp"]
    try:
        if pd.api.types.is_numeric_dtype(raw_ts):
            ts = pd.to_datetime(raw_ts, unit="ms", utc=True)
        else:
            ts = pd.to_datetime(raw_ts, utc=True, format="ISO8601")
    except (ValueError, TypeError) as exc:
        raise UnreadableSource(f"{path}: bad timestamps: {exc}") from exc

    ts64 = ts.to_numpy(dtype="datetime64[ns]")
    if np.any(np.diff(ts64) <= np.timedelta64(0, "ns")):
        raise UnreadableSource(f"{path}: timestamps must be sorted ascending without duplicates")

    try:
        ohlc = df[["open", "high", "low", "close"]].to_numpy(dtype=np.float64)
    except (ValueError, TypeError) as exc:
        raise UnreadableSource(f"{path}: non-numeric prices: {exc}") from exc

    keep = np.all(np.isfinite(ohlc), axis=1)
    if np.any(ohlc[keep] <= 0.0):
        raise NonPositivePrice(f"{path}: non-positive price")
    return ts64[keep], ohlc[keep]


def load_ohlc(
    source: str | Path,
    start: np.datetime64 | str | None = None,
    end: np.datetime64 | str | None = None,
) -> PriceTensor:
    """Load a candle file or directory into an aligned :class:`PriceTensor`.

    The common range is the intersection of all per-asset ranges (optionally
    clipped to [start, end]); the hourly grid is anchored at the range start.
    Assets missing any grid hour are dropped and logged. Asset order is
    lexicographic by id.
    """
    source = Path(source)
    if source.is_dir():
        paths = sorted(source.glob("*.csv"))
        if not paths:
            raise UnreadableSource(f"{source}: no .csv candle files")
    elif source.is_file():
        paths = [source]
    else:
        raise UnreadableSource(f"{source}: no such file or directory")

    parsed: dict[str, tuple[np.ndarray, np.ndarray]] = {}
    for path in paths:
        parsed[path.stem] = _read_candle_file(path)

    nonempty = {a: tv for a, tv in parsed.items() if len(tv[0]) > 0}
    if not nonempty:
        raise NoCommonTimespan("all candle files are empty")

    range_start = max(ts[0] for ts, _ in nonempty.values())
    range_end = min(ts[-1] for ts, _ in nonempty.values())
    if start is not None:
        range_start = max(range_start, _to_utc64(start))
    if end is not None:
        range_end = min(range_end, _to_utc64(end))
    if range_start > range_end:
        raise NoCommonTimespan("asset time ranges do not overlap")

    step_ns = HOUR.astype("timedelta64[ns]")
    grid = np.arange(range_start, range_end + step_ns, step_ns)

    kept: list[str] = []
    rows: list[np.ndarray] = []
    dropped: list[str] = []
    for asset in sorted(parsed):
        ts, ohlc = parsed[asset]
        pos = np.searchsorted(ts, grid)
        pos_safe = np.minimum(pos, len(ts) - 1)
        if not np.array_equal(ts[pos_safe], grid):
            dropped.append(asset)
            continue
        kept.append(asset)
        rows.append(ohlc[pos_safe])

    if dropped:
        logger.warning(
            "dropped %d/%d assets with missing hours in %s..%s: %s",
            len(dropped), len(parsed), grid[0], grid[-1], ", ".join(dropped),
        )
    if not kept:
        raise NoCommonTimespan("no asset fully covers the common hourly range")

    return PriceTensor(tuple(kept), grid, np.stack(rows, axis=0))


def log_returns(prices: PriceTensor) -> ReturnMatrix:
    """Hourly log-returns of close prices: value[i, t] = ln(C[i, t+1] / C[i, t])."""
    if len(prices.timestamps) < 2:
        raise ValueError("need at least 2 hourly observations")
    close = prices.close()
    values = np.log(close[:, 1:] / close[:, :-1])
    return ReturnMatrix(prices.assets, prices.timestamps[1:], values)


def make_splits(n_hours: int, window: int, step: int) -> SplitPlan:
    """Walk-forward plan over ``n_hours`` columns: k = floor((l - w) / s) offsets."""
    if window < 1 or step < 1:
        raise InvalidWindow(f"window and step must be >= 1, got w={window}, s={step}")
    if window > n_hours:
        raise InvalidWindow(f"window {window} exceeds series length {n_hours}")
    count = (n_hours - window) // step
    offsets = tuple(window + i * step for i in range(count))
    return SplitPlan(window, step, offsets)


def split_slices(
    returns: ReturnMatrix, tau: int, window: int, step: int
) -> tuple[ReturnMatrix, ReturnMatrix]:
    """Train/test slices at offset ``tau``.

    Offsets follow the 1-based convention train = columns tau-w+1..tau and
    test = columns tau+1..tau+s; internally this is the 0-based half-open
    slice [tau-w, tau) and [tau, tau+s).
    """
    if tau - window < 0 or tau + step > returns.n_hours:
        raise OffsetOutOfRange(
            f"offset {tau} with w={window}, s={step} out of range for l={returns.n_hours}"
        )
    return returns.columns(tau - window, tau), returns.columns(tau, tau + step)


def iter_splits(returns: ReturnMatrix, window: int, step: int) -> list[WindowSplit]:
    """All walk-forward splits for the given window/step."""
    plan = make_splits(returns.n_hours, window, step)
    out = []
    for tau in plan.offsets:
        train, test = split_slices(returns, tau, window, step)
        out.append(WindowSplit(tau, window, step, train, test))
    return out


def descriptive_stats(returns: ReturnMatrix) -> StatsSummary:
    """Per-asset and per-UTC-hour mean/volatility of log-returns, in percent.

    Volatility is the population standard deviation. Hour-of-day buckets pool
    observations across assets; bucket counts sum to n * l.
    """
    if returns.n_hours < 2:
        raise ValueError("need at least 2 hourly returns")
    values = returns.values
    asset_mean = {a: float(values[i].mean() * 100.0) for i, a in enumerate(returns.assets)}
    asset_vol = {a: float(values[i].std() * 100.0) for i, a in enumerate(returns.assets)}

    hod = ((returns.timestamps.astype("datetime64[h]")
            - returns.timestamps.astype("datetime64[D]")) / HOUR).astype(int)
    hour_mean: dict[int, float] = {}
    hour_vol: dict[int, float] = {}
    hour_counts: dict[int, int] = {}
    for hour in range(24):
        bucket = values[:, hod == hour]
        hour_counts[hour] = int(bucket.size)
        if bucket.size:
            hour_mean[hour] = float(bucket.mean() * 100.0)
            hour_vol[hour] = float(bucket.std() * 100.0)
        else:
            hour_mean[hour] = float("nan")
            hour_vol[hour] = float("nan")
    return StatsSummary(asset_mean, asset_vol, hour_mean, hour_vol, hour_counts)
