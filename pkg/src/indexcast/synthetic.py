"""Planted synthetic market generator for end-to-end oracles.

Stocks in a planted cluster share a deterministic phase-cycle movement
pattern (phase_len up-days then phase_len down-days, phase-shifted per
cluster) so next-day movements are learnable from recent history.  A
noise level p replaces each stock-day movement with a fair coin flip with
probability p.  Lead-lag pairs get an unpredictable i.i.d. leader and a
follower that copies the leader with a one-day lag, so only cross-stock
information can predict the follower.

Each index's constituents skew toward a "home" cluster (HOME_SHARE of
members), and per-stock move magnitudes are constant over time, so the
planted index movement is a deterministic function of the cluster cycles
rather than of per-day magnitude draws.  Index values follow the manifest
weighting, and the full planted truth is emitted for oracle checks.
"""

import json
import math
from dataclasses import asdict, dataclass
from datetime import date, timedelta
from pathlib import Path

import numpy as np

from .errors import InputError

BASE_PRICE_RANGE = (20.0, 200.0)
DAILY_MOVE_RANGE = (0.004, 0.02)
HOME_SHARE = 0.6


@dataclass(frozen=True)
class SyntheticMarketSpec:
    n_indices: int = 2
    stocks_per_index: int = 20
    n_clusters: int = 4
    n_lead_lag_pairs: int = 0
    noise: float = 0.0
    n_days: int = 370
    seed: int = 0
    phase_len: int = 5
    start: date = date(2021, 1, 4)

    def __post_init__(self):
        if self.n_indices < 1 or self.stocks_per_index < 1:
            raise InputError("need at least one index and one stock")
        if not 0.0 <= self.noise <= 1.0:
            raise InputError("noise must be in [0,1]")
        total = self.n_indices * self.stocks_per_index
        if 2 * self.n_lead_lag_pairs > total:
            raise InputError("too many lead-lag pairs for the universe")
        if self.n_clusters < 1 or self.n_clusters > total - 2 * self.n_lead_lag_pairs:
            raise InputError("cluster count incompatible with universe size")


@dataclass(frozen=True)
class SyntheticMarket:
    bars_path: Path
    manifest_path: Path
    truth_path: Path
    truth: dict


def _weekday_calendar(start: date, n_days: int) -> list:
    days = []
    current = start
    while len(days) < n_days:
        if current.weekday() < 5:
            days.append(current)
        current += timedelta(days=1)
    return days


def generate_synthetic_market(spec: SyntheticMarketSpec, out_dir) -> SyntheticMarket:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(spec.seed)
    calendar = _weekday_calendar(spec.start, spec.n_days)
    n_total = spec.n_indices * spec.stocks_per_index
    tickers = [f"S{idx:03d}" for idx in range(n_total)]

    # lead-lag pairs take the tail of the universe; the rest cycle in clusters
    n_pair_stocks = 2 * spec.n_lead_lag_pairs
    cluster_stocks = tickers[: n_total - n_pair_stocks]
    pair_stocks = tickers[n_total - n_pair_stocks :]
    lead_lag_pairs = [
        (pair_stocks[2 * p], pair_stocks[2 * p + 1])
        for p in range(spec.n_lead_lag_pairs)
    ]
    # per index: HOME_SHARE of its cluster stocks follow the home cluster,
    # the remainder spread round-robin over the other clusters
    clusters = {}
    home_clusters = {}
    for i in range(spec.n_indices):
        members = [
            t
            for t in tickers[i * spec.stocks_per_index : (i + 1) * spec.stocks_per_index]
            if t in set(cluster_stocks)
        ]
        home = i % spec.n_clusters
        home_clusters[f"IX{i}"] = home
        n_home = max(1, math.ceil(HOME_SHARE * len(members)))
        others = [c for c in range(spec.n_clusters) if c != home] or [home]
        for rank, t in enumerate(members):
            if rank < n_home:
                clusters[t] = home
            else:
                clusters[t] = others[(rank - n_home) % len(others)]

    period = 2 * spec.phase_len
    offsets = {
        c: (c * period) // spec.n_clusters for c in range(spec.n_clusters)
    }

    movements = {}
    for t in cluster_stocks:
        offset = offsets[clusters[t]]
        base = np.where(((np.arange(spec.n_days) + offset) // spec.phase_len) % 2 == 0, 1, -1)
        movements[t] = _apply_noise(base, spec.noise, rng)
    for leader, follower in lead_lag_pairs:
        lead = rng.choice([-1, 1], size=spec.n_days)
        movements[leader] = lead.astype(np.int64)
        lagged = np.concatenate([[lead[0]], lead[:-1]]).astype(np.int64)
        movements[follower] = _apply_noise(lagged, spec.noise, rng)

    closes = {}
    bars_rows = []
    # one magnitude for the whole market keeps the realized index direction
    # a pure function of the planted movements and static weights
    magnitude = rng.uniform(*DAILY_MOVE_RANGE)
    for t in tickers:
        base_price = rng.uniform(*BASE_PRICE_RANGE)
        wiggle = rng.uniform(0.0, 0.003, size=spec.n_days)
        volume = rng.integers(100_000, 1_000_000, size=spec.n_days)
        close = np.empty(spec.n_days)
        close[0] = base_price
        for d in range(1, spec.n_days):
            close[d] = close[d - 1] * (1.0 + movements[t][d] * magnitude)
        opens = np.concatenate([[base_price], close[:-1]])
        highs = np.maximum(opens, close) * (1.0 + wiggle)
        lows = np.minimum(opens, close) * (1.0 - wiggle)
        closes[t] = close
        for d, day in enumerate(calendar):
            bars_rows.append(
                (
                    t,
                    day.isoformat(),
                    f"{opens[d]:.6f}",
                    f"{highs[d]:.6f}",
                    f"{lows[d]:.6f}",
                    f"{close[d]:.6f}",
                    str(int(volume[d])),
                )
            )

    market_caps = {
        t: float(np.round(rng.uniform(2.0, 6.0), 6)) for t in tickers
    }  # caps as 10**uniform, below
    market_caps = {t: float(10.0 ** market_caps[t]) for t in tickers}

    indices = []
    for i in range(spec.n_indices):
        members = tickers[i * spec.stocks_per_index : (i + 1) * spec.stocks_per_index]
        indices.append(
            {
                "id": f"IX{i}",
                "weighting": "cap" if i % 2 == 0 else "price",
                "constituents": members,
            }
        )

    index_levels = {}
    index_labels = {}
    for entry in indices:
        members = entry["constituents"]
        stacked = np.stack([closes[t] for t in members])
        if entry["weighting"] == "price":
            levels = stacked.sum(axis=0)
        else:
            caps = np.array([market_caps[t] for t in members])
            levels = (caps[:, None] * stacked / stacked[:, :1]).sum(axis=0)
        index_levels[entry["id"]] = levels
        index_labels[entry["id"]] = np.where(levels[1:] >= levels[:-1], 1, -1)

    bars_path = out_dir / "bars.csv"
    with open(bars_path, "w") as fh:
        fh.write("symbol,date,open,high,low,close,volume\n")
        for row in sorted(bars_rows):
            fh.write(",".join(row) + "\n")

    manifest_path = out_dir / "manifest.json"
    with open(manifest_path, "w") as fh:
        json.dump(
            {"indices": indices, "market_caps": market_caps}, fh, indent=2, sort_keys=True
        )

    truth = {
        "spec": {**asdict(spec), "start": spec.start.isoformat()},
        "calendar": [d.isoformat() for d in calendar],
        "clusters": clusters,
        "index_home_clusters": home_clusters,
        "lead_lag_pairs": lead_lag_pairs,
        "movements": {t: [int(v) for v in movements[t]] for t in tickers},
        "index_levels": {k: [float(x) for x in v] for k, v in index_levels.items()},
        "index_labels": {k: [int(x) for x in v] for k, v in index_labels.items()},
    }
    truth_path = out_dir / "truth.json"
    with open(truth_path, "w") as fh:
        json.dump(truth, fh, indent=2, sort_keys=True)
    return SyntheticMarket(
        bars_path=bars_path,
        manifest_path=manifest_path,
        truth_path=truth_path,
        truth=truth,
    )


def _apply_noise(base: np.ndarray, noise: float, rng: np.random.Generator) -> np.ndarray:
    out = base.astype(np.int64).copy()
    if noise <= 0.0:
        return out
    replace_mask = rng.random(len(base)) < noise
    coins = rng.choice([-1, 1], size=len(base))
    out[replace_mask] = coins[replace_mask]
    return out
