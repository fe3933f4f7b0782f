#!/usr/bin/env python3
"""Regenerate the bundled 5-asset hourly candle fixture (deterministic).

Five synthetic USDT pairs driven by one market factor plus per-asset
mean-reverting idiosyncratic log-price components, dressed into OHLC candles.
Two files use epoch-millisecond timestamps and two carry a volume column to
exercise both parser paths. Run from this directory:

    python3 make_fixture5.py
"""

from pathlib import Path

import numpy as np

HOURS = 1701          # candles; 1700 hourly returns
START = np.datetime64("2021-11-01T00:00:00", "ns")
HOUR_NS = np.timedelta64(1, "h").astype("timedelta64[ns]")

ASSETS = {
    # name: (base price, beta, drift/hour, epoch_ms, volume)
    "ADAUSDT": (1.20, 1.25, -1.0e-5, False, False),
    "BTCUSDT": (61000.0, 0.80, 2.0e-5, False, True),
    "ETHUSDT": (4300.0, 1.00, 1.5e-5, True, True),
    "SOLUSDT": (210.0, 1.30, 0.0, False, False),
    "XRPUSDT": (1.05, 0.95, -0.5e-5, True, False),
}

FACTOR_VOL = 0.008
OU_THETA = 0.05
OU_SIGMA_EQ = 0.008


def main() -> None:
    rng = np.random.default_rng(20211101)
    n = len(ASSETS)
    market = np.concatenate([[0.0], np.cumsum(rng.normal(0.0, FACTOR_VOL, HOURS - 1))])

    b = np.exp(-OU_THETA)
    innov_sd = OU_SIGMA_EQ * np.sqrt(1.0 - b * b)
    idio = np.empty((n, HOURS))
    idio[:, 0] = rng.normal(0.0, OU_SIGMA_EQ, n)
    for t in range(1, HOURS):
        idio[:, t] = idio[:, t - 1] * b + rng.normal(0.0, innov_sd, n)

    timestamps = START + HOUR_NS * np.arange(HOURS)
    iso = [np.datetime_as_string(t.astype("datetime64[s]")) + "Z" for t in timestamps]
    epoch_ms = (timestamps.astype("datetime64[ms]").astype(np.int64)).tolist()

    out_dir = Path(__file__).parent / "fixture5"
    out_dir.mkdir(exist_ok=True)
    for i, (name, (base, beta, drift, use_epoch, with_volume)) in enumerate(sorted(ASSETS.items())):
        log_price = np.log(base) + drift * np.arange(HOURS) + beta * market + idio[i]
        close = np.exp(log_price)
        open_ = np.concatenate([[close[0] * (1.0 + rng.normal(0.0, 0.0005))], close[:-1]])
        span_hi = np.abs(rng.normal(0.0, 0.002, HOURS))
        span_lo = np.abs(rng.normal(0.0, 0.002, HOURS))
        high = np.maximum(open_, close) * (1.0 + span_hi)
        low = np.minimum(open_, close) * (1.0 - span_lo)
        volume = np.abs(rng.normal(1000.0, 250.0, HOURS))

        header = "timestamp,open,high,low,close" + (",volume" if with_volume else "")
        lines = [header]
        for t in range(HOURS):
            stamp = epoch_ms[t] if use_epoch else iso[t]
            row = f"{stamp},{open_[t]:.8f},{high[t]:.8f},{low[t]:.8f},{close[t]:.8f}"
            if with_volume:
                row += f",{volume[t]:.3f}"
            lines.append(row)
        (out_dir / f"{name}.csv").write_text("\n".join(lines) + "\n")
        print(f"wrote {name}.csv ({HOURS} candles)")


if __name__ == "__main__":
    main()
