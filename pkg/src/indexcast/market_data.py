"""Bar-data ingestion, movement labels, trading-calendar windows, index levels.

Input contracts:
  * bars CSV with header ``symbol,date,open,high,low,close,volume`` and
    ISO-8601 dates, one row per symbol-day;
  * universe manifest JSON with ``indices: [{id, weighting, constituents}]``
    and ``market_caps: {ticker: cap}``.
"""

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from datetime import date
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from .errors import CoverageError, InputError, ParseError, WindowError

logger = logging.getLogger(__name__)

# Longest missing-bar run that forward-filling is allowed to repair.
MAX_FILL_DAYS = 3

BARS_HEADER = ["symbol", "date", "open", "high", "low", "close", "volume"]


class WeightScheme(Enum):
    CAP_WEIGHTED = "cap"
    PRICE_WEIGHTED = "price"


@dataclass(frozen=True)
class BarSeries:
    """Daily OHLCV history for one symbol on a shared trading calendar."""

    symbol: str
    dates: tuple
    open: np.ndarray
    high: np.ndarray
    low: np.ndarray
    close: np.ndarray
    volume: np.ndarray

    def __post_init__(self):
        n = len(self.dates)
        for name in ("open", "high", "low", "close", "volume"):
            if len(getattr(self, name)) != n:
                raise InputError(f"{self.symbol}: {name} length != number of dates")
        if any(self.dates[i] >= self.dates[i + 1] for i in range(n - 1)):
            raise InputError(f"{self.symbol}: dates not strictly increasing")
        bad = np.flatnonzero(
            (self.high < np.maximum(self.open, self.close))
            | (self.low > np.minimum(self.open, self.close))
        )
        if bad.size:
            raise InputError(
                f"{self.symbol}: OHLC invariant violated on {self.dates[bad[0]]}"
            )
        if np.any(self.volume < 0):
            raise InputError(f"{self.symbol}: negative volume")

    def __len__(self) -> int:
        return len(self.dates)

    def index_of(self, day: date) -> int:
        idx = _bisect_dates(self.dates, day)
        if idx is None:
            raise InputError(f"{self.symbol}: {day} not in series")
        return idx


@dataclass(frozen=True)
class IndexSpec:
    index_id: str
    weighting: WeightScheme
    constituents: tuple


@dataclass(frozen=True)
class UniverseManifest:
    indices: tuple
    market_caps: dict = field(default_factory=dict)

    def all_stocks(self) -> tuple:
        """Deduplicated, sorted union of constituents across indices."""
        seen = set()
        for ix in self.indices:
            seen.update(ix.constituents)
        return tuple(sorted(seen))

    def validate(self, constituents_per_index: Optional[int] = 100) -> None:
        for ix in self.indices:
            if len(set(ix.constituents)) != len(ix.constituents):
                raise InputError(f"index {ix.index_id}: duplicate constituent")
            if (
                constituents_per_index is not None
                and len(ix.constituents) != constituents_per_index
            ):
                raise InputError(
                    f"index {ix.index_id}: expected {constituents_per_index} "
                    f"constituents, got {len(ix.constituents)}"
                )
            if ix.weighting is WeightScheme.CAP_WEIGHTED:
                for s in ix.constituents:
                    cap = self.market_caps.get(s)
                    if cap is None or cap <= 0:
                        raise InputError(
                            f"index {ix.index_id}: stock {s} lacks a positive market cap"
                        )


def _bisect_dates(dates: Sequence[date], day: date) -> Optional[int]:
    lo, hi = 0, len(dates)
    while lo < hi:
        mid = (lo + hi) // 2
        if dates[mid] < day:
            lo = mid + 1
        else:
            hi = mid
    if lo < len(dates) and dates[lo] == day:
        return lo
    return None


def load_manifest(path) -> UniverseManifest:
    with open(path) as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as e:
            raise ParseError(f"{path}: invalid JSON: {e}") from e
    indices = []
    for entry in raw.get("indices", []):
        try:
            scheme = WeightScheme(entry["weighting"])
        except (KeyError, ValueError) as e:
            raise ParseError(f"{path}: bad index entry {entry.get('id')}: {e}") from e
        indices.append(
            IndexSpec(
                index_id=entry["id"],
                weighting=scheme,
                constituents=tuple(entry["constituents"]),
            )
        )
    caps = {k: float(v) for k, v in raw.get("market_caps", {}).items()}
    return UniverseManifest(indices=tuple(indices), market_caps=caps)


def load_bars(path, calendar: Optional[Sequence[date]] = None) -> dict:
    """Parse a bars CSV into aligned ``{symbol: BarSeries}``.

    All series are aligned to the calendar over which every symbol has
    coverage (the union of observed dates inside the latest common start /
    earliest common end), optionally restricted to `calendar`.  Missing
    bars are forward-filled from the previous close (volume 0) for runs of
    at most MAX_FILL_DAYS; longer runs reject the symbol.
    """
    per_symbol: dict = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != BARS_HEADER:
            raise ParseError(f"{path}: line 1: expected header {','.join(BARS_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 7:
                raise ParseError(f"{path}: line {lineno}: expected 7 fields, got {len(row)}")
            sym = row[0].strip()
            try:
                day = date.fromisoformat(row[1].strip())
                o, h, l, c = (float(row[i]) for i in range(2, 6))
                v = float(row[6])
            except ValueError as e:
                raise ParseError(f"{path}: line {lineno}: {e}") from e
            if not all(math.isfinite(x) for x in (o, h, l, c, v)):
                raise ParseError(f"{path}: line {lineno}: non-finite value")
            if h < max(o, c) or l > min(o, c):
                raise ParseError(
                    f"{path}: line {lineno}: OHLC invariant violated for {sym} on {day}"
                )
            if v < 0:
                raise ParseError(f"{path}: line {lineno}: negative volume")
            days = per_symbol.setdefault(sym, {})
            if day in days:
                raise ParseError(f"{path}: line {lineno}: duplicate bar for {sym} on {day}")
            days[day] = (o, h, l, c, v)
    if not per_symbol:
        raise ParseError(f"{path}: no bar rows")

    start = max(min(d) for d in per_symbol.values())
    end = min(max(d) for d in per_symbol.values())
    if start > end:
        raise CoverageError("symbols have no overlapping date range")
    master = sorted({d for days in per_symbol.values() for d in days if start <= d <= end})
    if calendar is not None:
        wanted = set(calendar)
        master = [d for d in master if d in wanted]
    if not master:
        raise CoverageError("empty calendar after alignment")

    out = {}
    for sym in sorted(per_symbol):
        days = per_symbol[sym]
        o = np.empty(len(master))
        h = np.empty(len(master))
        l = np.empty(len(master))
        c = np.empty(len(master))
        v = np.empty(len(master))
        run = 0
        for i, day in enumerate(master):
            bar = days.get(day)
            if bar is None:
                run += 1
                if run > MAX_FILL_DAYS:
                    raise CoverageError(
                        f"symbol {sym}: more than {MAX_FILL_DAYS} consecutive "
                        f"missing days ending {day}"
                    )
                prev_close = c[i - 1]
                o[i] = h[i] = l[i] = c[i] = prev_close
                v[i] = 0.0
                logger.debug("forward-filled %s on %s", sym, day)
            else:
                run = 0
                o[i], h[i], l[i], c[i], v[i] = bar
        out[sym] = BarSeries(sym, tuple(master), o, h, l, c, v)
    return out


def movement_label(bars: BarSeries, day: date) -> int:
    """Next-day direction label: +1 rise, -1 fall, +1 on an exact tie."""
    idx = bars.index_of(day)
    if idx == 0:
        raise InputError(f"{bars.symbol}: {day} has no predecessor in the series")
    return 1 if bars.close[idx] >= bars.close[idx - 1] else -1


def label_series(bars: BarSeries) -> dict:
    """Movement label for every day except the first, keyed by date."""
    up = bars.close[1:] >= bars.close[:-1]
    return {
        bars.dates[i + 1]: (1 if up[i] else -1) for i in range(len(bars) - 1)
    }


def rolling_windows(
    calendar: Sequence[date], anchor_day: date, train_len: int, validation_len: int
) -> tuple:
    """Cut (train_days, validation_days) immediately preceding `anchor_day`.

    The validation range is the `validation_len` trading days right before
    the anchor; the train range is the `train_len` days before that.
    """
    if train_len < 1 or validation_len < 1:
        raise InputError("window lengths must be >= 1")
    anchor_idx = _bisect_dates(tuple(calendar), anchor_day)
    if anchor_idx is None:
        raise WindowError(f"anchor {anchor_day} is not a trading day of the calendar")
    needed = train_len + validation_len
    if anchor_idx < needed:
        raise WindowError(
            f"need {needed} trading days before {anchor_day}, have {anchor_idx}"
        )
    val_start = anchor_idx - validation_len
    train_start = val_start - train_len
    train_days = tuple(calendar[train_start:val_start])
    val_days = tuple(calendar[val_start:anchor_idx])
    return train_days, val_days


def index_level_series(
    spec: IndexSpec, bars: dict, market_caps: Optional[dict] = None
) -> np.ndarray:
    """Index level per calendar day, derived from constituent closes.

    Price-weighted: sum of constituent closes (constant divisor omitted).
    Cap-weighted: market-cap-weighted price relatives anchored at the first
    calendar day, so static caps stand in for outstanding-share counts.
    """
    closes = np.stack([bars[s].close for s in spec.constituents])
    if spec.weighting is WeightScheme.PRICE_WEIGHTED:
        return closes.sum(axis=0)
    caps = np.array([float(market_caps[s]) for s in spec.constituents])
    base = closes[:, :1]
    return (caps[:, None] * closes / base).sum(axis=0)


def index_movement_labels(levels: np.ndarray) -> np.ndarray:
    """Realized index movement per day (undefined first day excluded)."""
    return np.where(levels[1:] >= levels[:-1], 1, -1)
