"""Schmidl&Cox baseline: half-symbol autocorrelation timing and CFO."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .waveform import BasebandSignal, PreambleRecord

PLATEAU_FRACTION = 0.9


@dataclass(frozen=True)
class ScMetricTrace:
    """Per-window quantities indexed from ``origin_index`` (global sample index)."""

    timing_metric: np.ndarray
    autocorr: np.ndarray
    energy: np.ndarray
    origin_index: int

    def at(self, n: int) -> int:
        i = n - self.origin_index
        if not 0 <= i < self.timing_metric.size:
            raise IndexError(f"timing {n} outside the metric trace")
        return i


@dataclass(frozen=True)
class ScResult:
    timing: int
    frac_cfo: float
    int_cfo: int
    trace: ScMetricTrace

    @property
    def cfo(self) -> float:
        return self.frac_cfo + 2 * self.int_cfo


def metric_trace(r: BasebandSignal, n_fft: int) -> ScMetricTrace:
    if len(r) < 2 * n_fft:
        raise ValueError("signal must hold at least two symbols")
    half = n_fft // 2
    s = r.samples
    ones = np.ones(half)
    # direct sliding sums keep exact zeros where the input is empty
    P = np.convolve(np.conj(s[:-half]) * s[half:], ones, mode="valid")
    R = np.convolve(np.abs(s[half:]) ** 2, ones, mode="valid")
    M = np.zeros_like(R)
    np.divide(np.abs(P) ** 2, R**2, out=M, where=R > 0)
    return ScMetricTrace(M, P, R, r.origin_index)


def sc_timing(r: BasebandSignal, n_fft: int) -> tuple[int, ScMetricTrace]:
    """Midpoint of the 90% plateau around the metric peak."""
    if not np.any(r.samples):
        raise ValueError("no signal energy")
    trace = metric_trace(r, n_fft)
    M = trace.timing_metric
    g = int(np.argmax(M))
    lo, hi = max(0, g - n_fft), min(M.size, g + n_fft + 1)
    above = np.nonzero(M[lo:hi] >= PLATEAU_FRACTION * M[g])[0]
    first, last = lo + above[0], lo + above[-1]
    return trace.origin_index + int((first + last) // 2), trace


def sc_frac_cfo(trace: ScMetricTrace, timing: int, n_fft: int) -> float:
    """CFO modulo 2 subcarriers, in ``(-1, 1]``."""
    return float(np.angle(trace.autocorr[trace.at(timing)]) / np.pi)


def sc_int_cfo(
    r: BasebandSignal, rp: PreambleRecord, timing: int, frac: float, search_range: int = 20
) -> int:
    """Even-bin shift ``g`` (CFO ``= frac + 2g``) by differential correlation of adjacent even bins.

    Comparing neighbouring preamble bins cancels the phase rotation left by
    a timing error, so the metric does not depend on exact timing.
    """
    N = rp.n_fft
    n = np.arange(timing, timing + N)
    w = r.window(timing, N) * np.exp(-2j * np.pi * np.mod(n * (frac / N), 1.0))
    R = np.fft.fft(w)
    d = rp.freq_symbols
    support = sorted(rp.support)
    shifts = 2 * np.arange(-search_range, search_range + 1)
    pairs = [(a, b) for a, b in zip(support, support[1:]) if b - a == 2]
    if pairs:
        a = np.array([p[0] for p in pairs]) % N
        b = np.array([p[1] for p in pairs]) % N
        ra = R[(a[None, :] + shifts[:, None]) % N]
        rb = R[(b[None, :] + shifts[:, None]) % N]
        metric = np.abs(np.sum(ra * np.conj(d[a]) * np.conj(rb) * d[b], axis=1))
    else:
        k = np.asarray(support) % N
        metric = np.abs(R[(k[None, :] + shifts[:, None]) % N] @ np.conj(d[k]))
    best = max(range(shifts.size), key=lambda i: (metric[i], -abs(shifts[i])))
    return int(shifts[best] // 2)


def run_schmidl_cox(r: BasebandSignal, rp: PreambleRecord, search_range: int = 20) -> ScResult:
    timing, trace = sc_timing(r, rp.n_fft)
    frac = sc_frac_cfo(trace, timing, rp.n_fft)
    # the last windows lack a full symbol behind them; clamp for the spectral search
    t = min(timing, r.stop_index - rp.n_fft)
    g = sc_int_cfo(r, rp, t, frac, search_range)
    return ScResult(timing, frac, g, trace)
