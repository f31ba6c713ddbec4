"""Per-stock feature frames in two profiles.

CLASSIC carries raw prices, volume, indicator values and all binary
indicator signals (tree / margin learners).  SIGNAL carries only the
eleven binary signals (graph model input).  Every ``*_S`` feature is
in {-1, +1}; ties binarize to +1 everywhere.
"""

from dataclasses import dataclass
from datetime import date
from enum import Enum

import numpy as np

from . import indicators as ind
from .errors import InputError, InsufficientHistoryError
from .market_data import BarSeries, _bisect_dates

# Trading days consumed before every indicator (and its signal) is defined.
WARMUP_DAYS = 30

SIGNAL_FEATURES = (
    "CCI_S",
    "ADX_S",
    "MFI_S",
    "RSI_S",
    "SAR_S",
    "BB_S",
    "V_S",
    "S_S",
    "CPOP_S",
    "MACD_S",
    "CPCPY_S",
)

CLASSIC_FEATURES = (
    "OP",
    "HP",
    "LP",
    "CP",
    "VOLUME",
    "CCI",
    "CCI_S",
    "ADX",
    "ADX_S",
    "MFI",
    "MFI_S",
    "RSI",
    "RSI_S",
    "SAR",
    "SAR_S",
    "SD",
    "SK",
    "BB_S",
    "V_S",
    "S_S",
    "CPOP_S",
    "MACD_S",
    "CPCPY_S",
)


class FeatureProfile(Enum):
    CLASSIC = "classic"
    SIGNAL = "signal"


PROFILE_FEATURES = {
    FeatureProfile.CLASSIC: CLASSIC_FEATURES,
    FeatureProfile.SIGNAL: SIGNAL_FEATURES,
}


@dataclass(frozen=True)
class FeatureFrame:
    symbol: str
    profile: FeatureProfile
    dates: tuple
    names: tuple
    vectors: np.ndarray  # (n_days, n_features)

    def __post_init__(self):
        if self.vectors.shape != (len(self.dates), len(self.names)):
            raise InputError(f"{self.symbol}: vectors shape mismatch")
        if self.vectors.size and not np.isfinite(self.vectors).all():
            raise InputError(f"{self.symbol}: non-finite feature values")

    def index_of(self, day: date) -> int:
        idx = _bisect_dates(self.dates, day)
        if idx is None:
            raise InputError(f"{self.symbol}: {day} not covered by feature frame")
        return idx

    def row(self, day: date) -> np.ndarray:
        return self.vectors[self.index_of(day)]

    def value(self, day: date, name: str) -> float:
        return float(self.vectors[self.index_of(day), self.names.index(name)])


def _binarize(direction: np.ndarray) -> np.ndarray:
    """+1 where direction >= 0, -1 below (global tie rule)."""
    return np.where(direction >= 0, 1.0, -1.0)


def compute_features(bars: BarSeries, profile: FeatureProfile) -> FeatureFrame:
    """Indicator feature frame covering every day after the warm-up period."""
    n = len(bars)
    if n < WARMUP_DAYS:
        raise InsufficientHistoryError(
            f"{bars.symbol}: need at least {WARMUP_DAYS} trading days, have {n}"
        )
    o, h, l, c, v = bars.open, bars.high, bars.low, bars.close, bars.volume

    cci = ind.cci(h, l, c)
    adx = ind.adx(h, l, c)
    mfi = ind.mfi(h, l, c, v)
    rsi = ind.wilder_rsi(c)
    sar = ind.parabolic_sar(h, l, c)
    slow_k, slow_d = ind.stochastic_slow(h, l, c)
    bb_mid = ind.bollinger_midline(c)
    macd_line, macd_signal = ind.macd(c)

    adx_prev = np.concatenate([[np.nan], adx[:-1]])
    close_prev = np.concatenate([[np.nan], c[:-1]])
    # mean volume over the five days strictly before the current one
    vol_avg5 = np.concatenate([[np.nan], ind.sma(v, 5)[:-1]])

    columns = {
        "OP": o,
        "HP": h,
        "LP": l,
        "CP": c,
        "VOLUME": v,
        "CCI": cci,
        "CCI_S": _binarize(cci),
        "ADX": adx,
        "ADX_S": _binarize(adx - adx_prev),
        "MFI": mfi,
        "MFI_S": _binarize(mfi - 50.0),
        "RSI": rsi,
        "RSI_S": _binarize(rsi - 50.0),
        "SAR": sar,
        "SAR_S": _binarize(c - sar),
        "SD": slow_d,
        "SK": slow_k,
        "BB_S": _binarize(c - bb_mid),
        "V_S": _binarize(v - vol_avg5),
        "S_S": _binarize(slow_k - slow_d),
        "CPOP_S": _binarize(c - o),
        "MACD_S": _binarize(macd_line - macd_signal),
        "CPCPY_S": _binarize(c - close_prev),
    }
    names = PROFILE_FEATURES[profile]
    matrix = np.column_stack([columns[name] for name in names])[WARMUP_DAYS:]
    # NaN warm-ups feed the binarizers as NaN - x = NaN >= 0 -> False -> -1,
    # so nothing masks missing data: assert the raw inputs were defined.
    raw_needed = np.column_stack([cci, adx, adx_prev, mfi, rsi, sar, slow_k, slow_d,
                                  bb_mid, vol_avg5, close_prev])[WARMUP_DAYS:]
    if raw_needed.size and not np.isfinite(raw_needed).all():
        raise InsufficientHistoryError(
            f"{bars.symbol}: indicators undefined after declared warm-up"
        )
    return FeatureFrame(
        symbol=bars.symbol,
        profile=profile,
        dates=tuple(bars.dates[WARMUP_DAYS:]),
        names=names,
        vectors=matrix,
    )


def supervised_matrices(
    frame: FeatureFrame, labels: dict, target_days
) -> tuple:
    """(X, y) for next-day movement prediction.

    Each example pairs the feature vector of the day *before* a target day
    with the movement label realized *on* that target day, so a model
    trained here predicts strictly out of sample.
    """
    rows = []
    y = []
    for day in target_days:
        idx = frame.index_of(day)
        if idx == 0:
            raise InsufficientHistoryError(
                f"{frame.symbol}: no feature day before target {day}"
            )
        if day not in labels:
            raise InputError(f"{frame.symbol}: no movement label for {day}")
        rows.append(frame.vectors[idx - 1])
        y.append(labels[day])
    if not rows:
        raise InputError("empty target-day range")
    return np.asarray(rows), np.asarray(y, dtype=np.int64)
