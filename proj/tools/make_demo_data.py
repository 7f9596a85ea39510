#!/usr/bin/env python3
"""Writes the bundled synthetic dataset under data/.

Four assets over 500 weekdays starting 2022-01-03, driven by a shared market
factor, in prices.csv. A benchmark (SPY) on the same factor goes to
benchmark.csv. Also written: a VIX-like series that rises when the factor
falls, a daily score file and quarterly event dates.
"""
import argparse
import datetime as dt
import math
import pathlib
import random

SYMBOLS = {
    # symbol: (beta, drift, idio vol)
    "SPY": (1.0, 0.0002, 0.002),
    "AAA": (1.2, 0.0004, 0.012),
    "BBB": (0.8, 0.0001, 0.010),
    "CCC": (1.0, 0.0003, 0.015),
    "DDD": (0.5, 0.0000, 0.008),
}


def weekdays(start, n):
    d = start
    out = []
    while len(out) < n:
        if d.weekday() < 5:
            out.append(d)
        d += dt.timedelta(days=1)
    return out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=str(pathlib.Path(__file__).resolve().parent.parent / "data"))
    ap.add_argument("--days", type=int, default=500)
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()
    rng = random.Random(args.seed)
    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    dates = weekdays(dt.date(2022, 1, 3), args.days)
    close = {s: 100.0 for s in SYMBOLS}
    vix = 18.0
    price_rows, bench_rows, vix_rows, score_rows = [], [], [], []
    momentum = {s: 0.0 for s in SYMBOLS}
    for k, d in enumerate(dates):
        market = rng.gauss(0.0005, 0.009)
        # one stress episode in the middle of the sample
        if 230 <= k < 260:
            market -= 0.006
        vix = max(9.0, vix + 0.15 * (18.0 - vix) - 120.0 * market + rng.gauss(0.0, 0.6))
        vix_rows.append(f"{d.isoformat()},VIX,{vix:.4f}")
        for s, (beta, drift, vol) in SYMBOLS.items():
            r = drift + beta * market + rng.gauss(0.0, vol)
            gap = 0.3 * r + rng.gauss(0.0, vol / 4)
            prev = close[s]
            op = prev * (1.0 + gap)
            close[s] = prev * (1.0 + r)
            momentum[s] = 0.97 * momentum[s] + r
            row = f"{d.isoformat()},{s},{op:.4f},{close[s]:.4f}"
            (bench_rows if s == "SPY" else price_rows).append(row)
            if s != "SPY":
                score_rows.append(f"{d.isoformat()},{s},{momentum[s] + rng.gauss(0.0, 0.005):.6f}")

    (out / "prices.csv").write_text("date,symbol,open,close\n" + "\n".join(price_rows) + "\n")
    (out / "benchmark.csv").write_text("date,symbol,open,close\n" + "\n".join(bench_rows) + "\n")
    (out / "vix.csv").write_text("date,name,value\n" + "\n".join(vix_rows) + "\n")
    (out / "scores.csv").write_text("date,symbol,score\n" + "\n".join(score_rows) + "\n")
    events = [d for i, d in enumerate(dates) if i % 63 == 20]
    (out / "events.csv").write_text("date\n" + "\n".join(d.isoformat() for d in events) + "\n")


if __name__ == "__main__":
    main()
