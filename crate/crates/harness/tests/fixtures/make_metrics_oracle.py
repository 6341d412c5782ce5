#!/usr/bin/env python3
"""Regenerates metrics_oracle.json from metrics_fixture_returns.csv.

Independent reference implementation of the ten portfolio metrics using
numpy/scipy; the Rust implementation is tested against its frozen output
to 1e-9. Run from this directory:

    python3 make_metrics_oracle.py
"""

import json
import pathlib

import numpy as np
from scipy import stats

HERE = pathlib.Path(__file__).parent
PPY = 252


def metrics(r: np.ndarray) -> dict:
    n = len(r)
    cumulative = float(np.prod(1.0 + r) - 1.0)
    annual = float((1.0 + cumulative) ** (PPY / n) - 1.0)
    std = float(np.std(r, ddof=1))
    vol = std * np.sqrt(PPY)
    sharpe = float(np.mean(r)) / std * np.sqrt(PPY)
    downside = np.sqrt(np.sum(np.square(r[r < 0])) / n)
    sortino = float(np.mean(r)) / downside * np.sqrt(PPY)

    equity = np.cumprod(1.0 + r)
    runmax = np.maximum.accumulate(np.concatenate(([1.0], equity)))[1:]
    mdd = float(np.min(equity / runmax - 1.0))
    calmar = annual / abs(mdd)

    omega = float(np.sum(np.maximum(r, 0.0)) / np.sum(np.maximum(-r, 0.0)))

    log_equity = np.cumsum(np.log1p(r))
    fit = stats.linregress(np.arange(n), log_equity)
    stability = float(fit.rvalue**2)

    daily_var = float(np.percentile(r, 5))  # linear interpolation

    return {
        "annual_return": annual,
        "cumulative_return": cumulative,
        "annual_volatility": float(vol),
        "sharpe": float(sharpe),
        "calmar": float(calmar),
        "omega": omega,
        "sortino": float(sortino),
        "stability": stability,
        "max_drawdown": mdd,
        "daily_var": daily_var,
    }


def main() -> None:
    returns = np.loadtxt(HERE / "metrics_fixture_returns.csv")
    out = metrics(returns)
    with open(HERE / "metrics_oracle.json", "w") as f:
        json.dump(out, f, indent=2)
        f.write("\n")
    print(json.dumps(out, indent=2))


if __name__ == "__main__":
    main()
