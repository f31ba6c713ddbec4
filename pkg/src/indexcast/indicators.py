"""Technical-indicator kernels over daily OHLCV arrays.

Every function returns a full-length array aligned with its inputs, with
NaN on warm-up days before the indicator is defined.  Fixed parameters:
CCI-20, ADX-14, MFI-14, RSI-14 (Wilder smoothing), parabolic SAR
(0.02 step, 0.2 cap), slow stochastic 14-3-3, Bollinger midline 20,
MACD 12-26-9.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def sma(x: np.ndarray, period: int) -> np.ndarray:
    out = np.full(len(x), np.nan)
    if len(x) >= period:
        kernel = np.ones(period) / period
        out[period - 1 :] = np.convolve(x, kernel, mode="valid")
    return out


def ema(x: np.ndarray, span: int) -> np.ndarray:
    """Recursive EMA seeded with the first observation."""
    alpha = 2.0 / (span + 1.0)
    out = np.empty(len(x))
    out[0] = x[0]
    for t in range(1, len(x)):
        out[t] = alpha * x[t] + (1.0 - alpha) * out[t - 1]
    return out


def wilder_rsi(close: np.ndarray, period: int = 14) -> np.ndarray:
    n = len(close)
    out = np.full(n, np.nan)
    if n <= period:
        return out
    delta = np.diff(close)
    gains = np.maximum(delta, 0.0)
    losses = np.maximum(-delta, 0.0)
    avg_gain = gains[:period].mean()
    avg_loss = losses[:period].mean()
    out[period] = _rsi_value(avg_gain, avg_loss)
    for t in range(period + 1, n):
        avg_gain = (avg_gain * (period - 1) + gains[t - 1]) / period
        avg_loss = (avg_loss * (period - 1) + losses[t - 1]) / period
        out[t] = _rsi_value(avg_gain, avg_loss)
    return out


def _rsi_value(avg_gain: float, avg_loss: float) -> float:
    if avg_loss == 0.0 and avg_gain == 0.0:
        return 50.0
    if avg_loss == 0.0:
        return 100.0
    rs = avg_gain / avg_loss
    return 100.0 - 100.0 / (1.0 + rs)


def cci(high: np.ndarray, low: np.ndarray, close: np.ndarray, period: int = 20) -> np.ndarray:
    n = len(close)
    out = np.full(n, np.nan)
    if n < period:
        return out
    tp = (high + low + close) / 3.0
    windows = sliding_window_view(tp, period)
    means = windows.mean(axis=1)
    mean_dev = np.abs(windows - means[:, None]).mean(axis=1)
    current = tp[period - 1 :]
    with np.errstate(invalid="ignore", divide="ignore"):
        vals = (current - means) / (0.015 * mean_dev)
    vals[mean_dev == 0.0] = 0.0
    out[period - 1 :] = vals
    return out


def adx(high: np.ndarray, low: np.ndarray, close: np.ndarray, period: int = 14) -> np.ndarray:
    """Wilder ADX; first value at index 2*period - 1."""
    n = len(close)
    out = np.full(n, np.nan)
    if n < 2 * period:
        return out
    up_move = high[1:] - high[:-1]
    down_move = low[:-1] - low[1:]
    plus_dm = np.where((up_move > down_move) & (up_move > 0), up_move, 0.0)
    minus_dm = np.where((down_move > up_move) & (down_move > 0), down_move, 0.0)
    tr = np.maximum.reduce(
        [
            high[1:] - low[1:],
            np.abs(high[1:] - close[:-1]),
            np.abs(low[1:] - close[:-1]),
        ]
    )
    # Wilder smoothed sums, seeded with plain sums at index `period`
    s_tr = tr[:period].sum()
    s_plus = plus_dm[:period].sum()
    s_minus = minus_dm[:period].sum()
    dx = np.empty(n)
    dx[: period] = np.nan
    dx[period] = _dx_value(s_plus, s_minus, s_tr)
    for t in range(period + 1, n):
        s_tr = s_tr - s_tr / period + tr[t - 1]
        s_plus = s_plus - s_plus / period + plus_dm[t - 1]
        s_minus = s_minus - s_minus / period + minus_dm[t - 1]
        dx[t] = _dx_value(s_plus, s_minus, s_tr)
    adx_val = dx[period : 2 * period].mean()
    out[2 * period - 1] = adx_val
    for t in range(2 * period, n):
        adx_val = (adx_val * (period - 1) + dx[t]) / period
        out[t] = adx_val
    return out


def _dx_value(s_plus: float, s_minus: float, s_tr: float) -> float:
    if s_tr == 0.0:
        return 0.0
    plus_di = 100.0 * s_plus / s_tr
    minus_di = 100.0 * s_minus / s_tr
    denom = plus_di + minus_di
    if denom == 0.0:
        return 0.0
    return 100.0 * abs(plus_di - minus_di) / denom


def mfi(
    high: np.ndarray, low: np.ndarray, close: np.ndarray, volume: np.ndarray, period: int = 14
) -> np.ndarray:
    n = len(close)
    out = np.full(n, np.nan)
    if n <= period:
        return out
    tp = (high + low + close) / 3.0
    flow = tp * volume
    direction = np.sign(np.diff(tp))
    pos = np.where(direction > 0, flow[1:], 0.0)
    neg = np.where(direction < 0, flow[1:], 0.0)
    pos_sum = sliding_window_view(pos, period).sum(axis=1)
    neg_sum = sliding_window_view(neg, period).sum(axis=1)
    total = pos_sum + neg_sum
    with np.errstate(invalid="ignore", divide="ignore"):
        vals = 100.0 * pos_sum / total
    vals[total == 0.0] = 50.0
    out[period:] = vals
    return out


def parabolic_sar(
    high: np.ndarray, low: np.ndarray, close: np.ndarray, step: float = 0.02, cap: float = 0.2
) -> np.ndarray:
    n = len(close)
    out = np.full(n, np.nan)
    if n < 2:
        return out
    uptrend = close[1] >= close[0]
    sar = low[0] if uptrend else high[0]
    ep = high[1] if uptrend else low[1]
    af = step
    out[1] = sar
    for t in range(2, n):
        sar = sar + af * (ep - sar)
        if uptrend:
            sar = min(sar, low[t - 1], low[t - 2])
            if low[t] < sar:
                uptrend = False
                sar = ep
                ep = low[t]
                af = step
            elif high[t] > ep:
                ep = high[t]
                af = min(af + step, cap)
        else:
            sar = max(sar, high[t - 1], high[t - 2])
            if high[t] > sar:
                uptrend = True
                sar = ep
                ep = high[t]
                af = step
            elif low[t] < ep:
                ep = low[t]
                af = min(af + step, cap)
        out[t] = sar
    return out


def stochastic_slow(
    high: np.ndarray,
    low: np.ndarray,
    close: np.ndarray,
    k_period: int = 14,
    smooth: int = 3,
    d_period: int = 3,
) -> tuple:
    """Slow stochastic: (%K smoothed over `smooth`, %D = SMA of slow %K)."""
    n = len(close)
    raw = np.full(n, np.nan)
    if n >= k_period:
        highs = sliding_window_view(high, k_period).max(axis=1)
        lows = sliding_window_view(low, k_period).min(axis=1)
        span = highs - lows
        with np.errstate(invalid="ignore", divide="ignore"):
            vals = 100.0 * (close[k_period - 1 :] - lows) / span
        vals[span == 0.0] = 50.0
        raw[k_period - 1 :] = vals
    slow_k = _sma_skipnan(raw, smooth)
    slow_d = _sma_skipnan(slow_k, d_period)
    return slow_k, slow_d


def _sma_skipnan(x: np.ndarray, period: int) -> np.ndarray:
    """SMA that starts once `period` finite values are available."""
    out = np.full(len(x), np.nan)
    finite = np.flatnonzero(np.isfinite(x))
    if finite.size < period:
        return out
    first = finite[0]
    vals = sma(x[first:], period)
    out[first:] = vals
    return out


def bollinger_midline(close: np.ndarray, period: int = 20) -> np.ndarray:
    return sma(close, period)


def macd(
    close: np.ndarray, fast: int = 12, slow: int = 26, signal: int = 9
) -> tuple:
    line = ema(close, fast) - ema(close, slow)
    return line, ema(line, signal)
