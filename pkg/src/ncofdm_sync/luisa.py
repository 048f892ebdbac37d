"""Cross-correlation synchronizer for NC-OFDM frames.

Pipeline per frame:

1. correlate every N-sample window with the frequency-shifted reference
   preamble, giving ``Y(n, k)`` on a (time, integer offset) grid;
2. pick the coarse timing/integer-CFO point from ``|Y|^2`` and, optionally,
   from the half-bin-robust metric ``Z``;
3. interpolate the fractional CFO from three neighbouring bins;
4. collect channel paths around the coarse point with a CFAR threshold;
5. refine the CFO by combining all detected paths coherently, ``gamma`` times;
6. read off the first-path timing and the initial channel estimate.

Time ``n`` is always the global sample index of the window start.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .waveform import BasebandSignal, PreambleRecord

# relative size of a Candan denominator below which the interpolation is skipped
DEGENERACY_RATIO = 1e-3


class DetectionRule(str, enum.Enum):
    Y_ONLY = "y"
    YZ_COMBINED = "yz"


@dataclass
class SyncGrid:
    """``Y(n, k)`` on consecutive windows ``n_start, n_start+1, ...``.

    With ``search_k = K`` the columns are ``k = -K-1 .. K+1``: the search
    range plus one guard bin on each side for the interpolation. With
    ``search_k = None`` all N bins are present in FFT order (column ``k mod N``,
    labelled ``0 .. N/2-1, -N/2 .. -1``) and neighbours wrap cyclically.
    """

    values: np.ndarray
    n_start: int
    k_values: np.ndarray
    n_fft: int
    search_k: int | None
    _z: np.ndarray | None = field(default=None, repr=False)

    @property
    def cyclic(self) -> bool:
        return self.search_k is None

    @property
    def n_values(self) -> np.ndarray:
        return np.arange(self.n_start, self.n_start + self.values.shape[0])

    @property
    def search_k_values(self) -> np.ndarray:
        if self.cyclic:
            return self.k_values
        return np.arange(-self.search_k, self.search_k + 1)

    @property
    def search_values(self) -> np.ndarray:
        return self.values if self.cyclic else self.values[:, 1:-1]

    @property
    def z_k_values(self) -> np.ndarray:
        """Offsets with a defined ``Z``: all bins when cyclic, else ``-K .. K-1``."""
        if self.cyclic:
            return self.k_values
        return np.arange(-self.search_k, self.search_k)

    @property
    def z_values(self) -> np.ndarray:
        if self._z is None:
            self._z = z_metric(self.values, self.n_fft, self.cyclic)
        return self._z

    def column(self, k: int) -> int:
        if self.cyclic:
            return int(k % self.n_fft)
        col = k - int(self.k_values[0])
        if not 0 <= col < self.k_values.size:
            raise IndexError(f"offset {k} outside grid columns")
        return col

    def y(self, n: int, k: int) -> complex:
        return complex(self.values[n - self.n_start, self.column(k)])

    def wrap(self, k: int) -> int:
        """Canonical label of offset ``k`` (wraps into ``[-N/2, N/2)`` for a cyclic grid)."""
        if self.cyclic:
            return int((k + self.n_fft // 2) % self.n_fft - self.n_fft // 2)
        return int(k)

    def restrict(self, n_lo: int, n_hi: int) -> "SyncGrid":
        """Rows ``n_lo .. n_hi`` (clipped to the grid)."""
        lo = max(n_lo - self.n_start, 0)
        hi = min(n_hi - self.n_start + 1, self.values.shape[0])
        return SyncGrid(self.values[lo:hi], self.n_start + lo, self.k_values, self.n_fft, self.search_k)


@dataclass
class SyncResult:
    detected: bool
    n_M: int | None = None
    k_M: int | None = None
    used_z_metric: bool = False
    nu_hat: list[float] = field(default_factory=list)
    paths: tuple[int, ...] = ()
    first_path: int | None = None
    channel_estimate: dict[int, complex] = field(default_factory=dict)
    degenerate: bool = False

    @property
    def nu_final(self) -> float | None:
        return self.nu_hat[-1] if self.nu_hat else None


@dataclass(frozen=True)
class LuisaParams:
    nu_max: float | None = 20.0  # None: search all N integer offsets
    p_fd: float = 1e-5
    gamma: int = 2
    rule: DetectionRule = DetectionRule.YZ_COMBINED
    presence_p_fd: float | None = None  # None: a frame is assumed present

    def __post_init__(self) -> None:
        if self.nu_max is not None and self.nu_max < 0:
            raise ValueError("nu_max must be non-negative")
        if not 0 < self.p_fd < 1:
            raise ValueError("p_fd must lie in (0, 1)")
        if self.gamma < 0:
            raise ValueError("gamma must be non-negative")
        object.__setattr__(self, "rule", DetectionRule(self.rule))


def z_metric(values: np.ndarray, n_fft: int, cyclic: bool) -> np.ndarray:
    """``Z(n, k) = (Y(n, k) - Y(n, k+1) e^{-j pi/N}) / sqrt 2`` over the grid columns."""
    nxt = np.roll(values, -1, axis=1) if cyclic else values[:, 1:]
    cur = values if cyclic else values[:, :-1]
    z = (cur - nxt * np.exp(-1j * np.pi / n_fft)) / math.sqrt(2.0)
    return z if cyclic else z[:, 1:-1]  # restricted grid: k = -K .. K-1


def _check_window(r: BasebandSignal, n: int, n_fft: int) -> None:
    if n < r.origin_index or n + n_fft > r.stop_index:
        raise IndexError(f"window at n={n} of length {n_fft} is outside the signal")


def sync_variable(r: BasebandSignal, rp: PreambleRecord, n: int, k_set) -> np.ndarray:
    """``Y(n, k)`` for integer offsets ``k_set`` through one unnormalized FFT."""
    N = rp.n_fft
    spectrum = np.fft.fft(r.window(n, N) * np.conj(rp.time_samples))
    ks = np.atleast_1d(np.asarray(k_set, dtype=np.int64))
    return spectrum[ks % N]


def correlate(r: BasebandSignal, rp: PreambleRecord, n_values, freqs) -> np.ndarray:
    """``Y(n, f)`` for arbitrary real offsets ``f`` by direct summation; shape (len(n), len(f))."""
    N = rp.n_fft
    ns = np.atleast_1d(np.asarray(n_values, dtype=np.int64))
    fs = np.atleast_1d(np.asarray(freqs, dtype=float))
    for n in (ns.min(), ns.max()):
        _check_window(r, int(n), N)
    start = ns - r.origin_index
    windows = r.samples[start[:, None] + np.arange(N)]
    m = np.arange(N)
    kernel = np.conj(rp.time_samples)[:, None] * np.exp(-2j * np.pi * np.outer(m, fs) / N)
    return windows @ kernel


def sync_variable_freq(r_window_dft: np.ndarray, preamble_symbols: np.ndarray, k: int) -> complex:
    """Frequency-domain ``Y``: ``N^{-1/2} sum_k1 conj(d_k1) R((k + k1) mod N)``.

    The ``N^{-1/2}`` comes from the IFFT scaling of the preamble combined with
    the unnormalized receiver FFT, and makes the result equal :func:`sync_variable`.
    """
    R = np.asarray(r_window_dft)
    d = np.asarray(preamble_symbols)
    N = R.size
    idx = (k + np.arange(N)) % N
    return complex(np.dot(np.conj(d), R[idx]) / math.sqrt(N))


def build_grid(
    r: BasebandSignal,
    rp: PreambleRecord,
    nu_max: float | None,
    n_range: tuple[int, int] | None = None,
) -> SyncGrid:
    """Evaluate ``Y`` on every window start (or on ``n_range``, inclusive)."""
    N = rp.n_fft
    if n_range is None:
        n_lo, n_hi = r.origin_index, r.stop_index - N
    else:
        n_lo, n_hi = n_range
    if n_hi < n_lo:
        raise ValueError("signal shorter than one correlation window")
    _check_window(r, n_lo, N)
    _check_window(r, n_hi, N)
    a = n_lo - r.origin_index
    windows = sliding_window_view(r.samples, N)[a : a + n_hi - n_lo + 1]
    K = None if nu_max is None else int(math.ceil(nu_max))
    if K is not None and 2 * K + 3 > N:
        K = None  # the requested range already spans every bin
    spectra = np.fft.fft(windows * np.conj(rp.time_samples), axis=1)
    if K is None:
        bins = np.arange(N)
        return SyncGrid(spectra, n_lo, np.where(bins < N - N // 2, bins, bins - N), N, None)
    k_values = np.arange(-K - 1, K + 2)
    return SyncGrid(spectra[:, k_values % N], n_lo, k_values, N, K)


def _power(values: np.ndarray) -> np.ndarray:
    return values.real**2 + values.imag**2


def _argmax_power(power: np.ndarray, n_values: np.ndarray, k_values: np.ndarray) -> tuple[int, int, float]:
    """Largest cell, ties toward smaller n then smaller |k|."""
    row = int(np.argmax(power)) // power.shape[1]  # first maximum in row-major order: smallest n
    peak = power[row].max()
    cols = np.flatnonzero(power[row] == peak)
    col = min(cols, key=lambda c: abs(int(k_values[c])))
    return int(n_values[row]), int(k_values[col]), float(peak)


def coarse_detect(grid: SyncGrid, rule: DetectionRule = DetectionRule.YZ_COMBINED) -> tuple[int, int, bool]:
    """Coarse timing and integer CFO ``(n_M, k_M, used_z_metric)``."""
    rule = DetectionRule(rule)
    n_values = grid.n_values
    n_y, k_y, p_y = _argmax_power(_power(grid.search_values), n_values, grid.search_k_values)
    if rule is DetectionRule.Y_ONLY:
        return n_y, k_y, False
    n_z, k_z, p_z = _argmax_power(_power(grid.z_values), n_values, grid.z_k_values)
    if p_z <= p_y:
        return n_y, k_y, False
    k_m = k_z
    if abs(grid.y(n_z, k_z + 1)) ** 2 > abs(grid.y(n_z, k_z)) ** 2:
        k_m = grid.wrap(k_z + 1)
    return n_z, k_m, True


def presence_threshold(sigma_thr_sq: float, p_fd: float, n_points: int) -> float:
    """Level of ``|Y|^2`` that noise alone exceeds anywhere on ``n_points`` cells with probability ``p_fd``."""
    if not 0 < p_fd <= 1:
        raise ValueError("p_fd must lie in (0, 1]")
    if n_points < 1:
        raise ValueError("n_points must be at least 1")
    return -sigma_thr_sq * math.log(p_fd / n_points)


def candan_offset(num: complex, den: complex, n_fft: int, scale: float) -> tuple[float, bool]:
    """``(N/pi) atan(tan(pi/N) Re(num/den))``; returns ``(0, True)`` when ``|den|`` is negligible."""
    if abs(den) < DEGENERACY_RATIO * scale or den == 0:
        return 0.0, True
    ratio = (num / den).real
    return n_fft / math.pi * math.atan(math.tan(math.pi / n_fft) * ratio), False


def coarse_frac_cfo(grid: SyncGrid, n_M: int, k_M: int) -> tuple[float, bool]:
    """``(nu_0, degenerate)``: three-bin interpolation around the coarse point plus ``k_M``."""
    y_lo, y_0, y_hi = (grid.y(n_M, k_M + d) for d in (-1, 0, 1))
    q1 = y_lo - y_hi
    q2 = 2 * y_0 - y_lo - y_hi
    frac, degenerate = candan_offset(q1, q2, grid.n_fft, abs(y_0))
    return frac + k_M, degenerate


def estimate_noise_floor(r: BasebandSignal, n: int, sigma_x_sq: float, n_fft: int) -> float:
    """``sigma_x^2 sum_m |r(n+m)|^2`` over one window."""
    w = r.window(n, n_fft)
    return float(sigma_x_sq * np.vdot(w, w).real)


class NoiseFloorTracker:
    """Streaming window energy: one add and one drop per step."""

    def __init__(self, r: BasebandSignal, n: int, sigma_x_sq: float, n_fft: int):
        self._r = r
        self._sigma_x_sq = sigma_x_sq
        self._n_fft = n_fft
        self.n = n
        self.value = estimate_noise_floor(r, n, sigma_x_sq, n_fft)

    def advance(self) -> float:
        s = self._r.samples
        i = self.n - self._r.origin_index
        if i + self._n_fft >= s.size:
            raise IndexError("tracker reached the end of the signal")
        incoming, outgoing = s[i + self._n_fft], s[i]
        self.value += self._sigma_x_sq * (abs(incoming) ** 2 - abs(outgoing) ** 2)
        self.n += 1
        return self.value


def noise_floor_trace(r: BasebandSignal, sigma_x_sq: float, n_fft: int) -> np.ndarray:
    """Noise-floor estimate for every window start of ``r`` (direct sums)."""
    e = np.abs(r.samples) ** 2
    return sigma_x_sq * np.convolve(e, np.ones(n_fft), mode="valid")


def detect_paths(
    r: BasebandSignal,
    rp: PreambleRecord,
    n_M: int,
    nu0: float,
    p_fd: float,
    n_cp: int,
) -> tuple[tuple[int, ...], int]:
    """Channel paths around ``n_M`` and the first-path timing.

    Each ``n`` within ``n_cp`` of ``n_M`` is tested against a threshold set
    from its own window energy. Detected candidates are then admitted
    strongest-first while the set still fits inside ``n_cp`` samples.
    """
    N = rp.n_fft
    lo = max(n_M - n_cp, r.origin_index)
    hi = min(n_M + n_cp, r.stop_index - N)
    cand = np.array([n for n in range(lo, hi + 1) if n != n_M], dtype=np.int64)
    paths = [n_M]
    if cand.size and n_cp > 0:
        power = np.abs(correlate(r, rp, cand, [nu0])[:, 0]) ** 2
        energy = np.abs(r.samples[lo - r.origin_index : hi + N - r.origin_index]) ** 2
        floor = rp.power * np.convolve(energy, np.ones(N), mode="valid")[cand - lo]
        over = power > -floor * math.log(p_fd / (2 * n_cp))
        for i in np.argsort(-power[over], kind="stable"):
            n = int(cand[over][i])
            if max(paths + [n]) - min(paths + [n]) <= n_cp:
                paths.append(n)
    paths.sort()
    return tuple(paths), paths[0]


def fine_cfo_update(
    r: BasebandSignal, rp: PreambleRecord, paths, nu_prev: float
) -> tuple[float, bool]:
    """``(delta, degenerate)``: path-coherent interpolation around ``nu_prev``."""
    D = sorted(paths)
    if not D:
        raise ValueError("fine CFO update needs at least one path")
    y = correlate(r, rp, D, [nu_prev - 1, nu_prev, nu_prev + 1])
    y_lo, y_0, y_hi = y[:, 0], y[:, 1], y[:, 2]
    num = np.sum((y_lo - y_hi) * np.conj(y_0))
    den = np.sum((2 * y_0 - y_lo - y_hi) * np.conj(y_0))
    return candan_offset(num, den, rp.n_fft, float(np.sum(np.abs(y_0) ** 2)))


def initial_channel_estimate(
    r: BasebandSignal, rp: PreambleRecord, paths, nu_final: float
) -> dict[int, complex]:
    D = sorted(paths)
    y = correlate(r, rp, D, [nu_final])[:, 0]
    return {int(n): complex(v / (rp.n_fft * rp.power)) for n, v in zip(D, y)}


def _presence_window(grid: SyncGrid, r: BasebandSignal, rp: PreambleRecord, p_fd: float) -> tuple[int, int] | None:
    """Rows to search after the first presence-threshold crossing, or None when nothing crosses."""
    power = _power(grid.search_values)
    floors = noise_floor_trace(r, rp.power, rp.n_fft)[grid.n_start - r.origin_index :][: power.shape[0]]
    level = -floors * math.log(p_fd / power.size)
    hits = np.nonzero((power > level[:, None]).any(axis=1))[0]
    if hits.size == 0:
        return None
    first = grid.n_start + int(hits[0])
    return first, first + rp.n_fft


def run_luisa(r: BasebandSignal, rp: PreambleRecord, params: LuisaParams = LuisaParams()) -> SyncResult:
    grid = build_grid(r, rp, params.nu_max)
    if params.presence_p_fd is not None:
        window = _presence_window(grid, r, rp, params.presence_p_fd)
        if window is None:
            return SyncResult(detected=False)
        grid = grid.restrict(*window)

    n_M, k_M, used_z = coarse_detect(grid, params.rule)
    nu, degenerate = coarse_frac_cfo(grid, n_M, k_M)
    paths, first = detect_paths(r, rp, n_M, nu, params.p_fd, rp.n_cp)
    nu_hat = [nu]
    for _ in range(params.gamma):
        delta, deg = fine_cfo_update(r, rp, paths, nu)
        degenerate |= deg
        nu += delta
        nu_hat.append(nu)
    return SyncResult(
        detected=True,
        n_M=n_M,
        k_M=k_M,
        used_z_metric=used_z,
        nu_hat=nu_hat,
        paths=paths,
        first_path=first,
        channel_estimate=initial_channel_estimate(r, rp, paths, nu),
        degenerate=degenerate,
    )
