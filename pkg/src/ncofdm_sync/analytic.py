"""Closed-form second-order statistics of the synchronization variable.

``Y_l(n, k)`` is the contribution of a unit channel path at delay ``l`` to the
receiver correlation at time ``n`` and frequency offset ``k``. Its mean is
non-zero only when the reference preamble overlaps a copy of itself in the
received frame, which happens at four time offsets ``n - l``:

==== ========= ==============================================
case n - l     overlap
==== ========= ==============================================
A    -N        received cyclic prefix only
B    -N/2      CP plus first half (Schmidl&Cox preamble only)
C    0         full alignment
D    N/2       second half (Schmidl&Cox preamble only)
==== ========= ==============================================

Everywhere else the mean is zero and the variance grows with the number of
non-empty received samples inside the correlation window. For the
Schmidl&Cox preamble, terms ``m`` and ``m + N/2`` of the sum are equal up to a
phase when both received samples fall inside the repeated part of the frame,
which adds a covariance term ``2 cos(pi (nu - k))`` per such pair. Samples are
modelled as independent circular Gaussians of power ``sigma_x_sq``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .waveform import PreambleKind, SubcarrierMap


class CaseId(str, enum.Enum):
    A = "A"
    B = "B"
    C = "C"
    D = "D"
    OTHERWISE = "otherwise"

    def applies_to(self, kind: PreambleKind) -> bool:
        if self in (CaseId.B, CaseId.D):
            return kind is PreambleKind.SCHMIDL_COX
        return True


@dataclass(frozen=True)
class MomentPrediction:
    mean: complex
    variance: float

    def __post_init__(self) -> None:
        if self.variance < 0:
            raise ValueError("variance must be non-negative")


def classify_case(offset: int, kind: PreambleKind, n_fft: int) -> CaseId:
    """Case for a time offset ``n - l``."""
    half = n_fft // 2
    if offset == -n_fft:
        return CaseId.A
    if offset == 0:
        return CaseId.C
    if kind is PreambleKind.SCHMIDL_COX:
        if offset == -half:
            return CaseId.B
        if offset == half:
            return CaseId.D
    return CaseId.OTHERWISE


def _dirichlet(count: float, delta: float, n_fft: int) -> float:
    """``sin(pi count delta / N) / sin(pi delta / N)`` with its limits at ``delta -> 0``."""
    x = delta / n_fft
    if x != 0 and float(x).is_integer():
        # both sines vanish: limit of the ratio
        return float(count * (-1) ** (int(round(x)) * (count - 1)))
    if x != 0 and float(count * x).is_integer():
        return 0.0  # numerator sine vanishes exactly
    return float(count * np.sinc(count * x) / np.sinc(x))


def repetition_pairs(offset: int, n_fft: int, n_cp: int) -> int:
    """Pairs ``(m, m + N/2)`` whose received samples both lie in the repeated CP + preamble."""
    half = n_fft // 2
    return max(0, min(half, half - offset) - max(0, -n_cp - offset))


def path_component_moments(
    case: CaseId,
    kind: PreambleKind,
    n: int,
    l: int,
    k: float,
    nu: float,
    n_fft: int,
    n_cp: int,
    sigma_x_sq: float,
) -> MomentPrediction:
    """Mean and variance of ``Y_l(n, k)`` for a path at delay ``l`` and CFO ``nu``."""
    N = n_fft
    offset = n - l
    expected = classify_case(offset, kind, N)
    if case is not expected:
        raise ValueError(f"offset n-l={offset} is case {expected.value}, not {case.value} ({kind.value})")
    d = nu - k
    s2, s4 = sigma_x_sq, sigma_x_sq**2
    rot = np.exp(2j * np.pi * n * nu / N)  # n = l + offset in every row below

    if case is CaseId.A:
        mean = s2 * rot * np.exp(1j * np.pi * d * (2 - (n_cp + 1) / N)) * _dirichlet(n_cp, d, N)
        var = s4 * n_cp
    elif case is CaseId.B:
        mean = (
            s2 * rot * np.exp(1j * np.pi * d * (1.5 - (n_cp + 1) / N)) * _dirichlet(N / 2 + n_cp, d, N)
        )
        var = s4 * N / 2 + (1 + 2 * math.cos(math.pi * d)) * s4 * n_cp
    elif case is CaseId.C:
        mean = s2 * rot * np.exp(1j * np.pi * d * (1 - 1 / N)) * _dirichlet(N, d, N)
        if kind is PreambleKind.SIMPLE:
            var = s4 * N
        else:
            var = (1 + math.cos(math.pi * d)) * N * s4
    elif case is CaseId.D:
        mean = s2 * rot * np.exp(1j * np.pi * d * (0.5 - 1 / N)) * _dirichlet(N / 2, d, N)
        var = s4 * N
    else:
        mean = 0.0
        var = s4 * min(max(0, N + n_cp + offset), N)
        if kind is PreambleKind.SCHMIDL_COX:
            var += 2 * math.cos(math.pi * d) * s4 * repetition_pairs(offset, N, n_cp)
    # cos() round-off can leave -1e-17 where the exact value is 0
    return MomentPrediction(complex(mean), max(float(var), 0.0))


def predict_path_moments(
    kind: PreambleKind, n: int, l: int, k: float, nu: float, n_fft: int, n_cp: int, sigma_x_sq: float
) -> MomentPrediction:
    case = classify_case(n - l, kind, n_fft)
    return path_component_moments(case, kind, n, l, k, nu, n_fft, n_cp, sigma_x_sq)


def expected_sync_mean(
    taps: Sequence[complex],
    kind: PreambleKind,
    n: int,
    k: float,
    nu: float,
    n_fft: int,
    n_cp: int,
    sigma_x_sq: float,
) -> complex:
    """``E[Y(n, k)] = sum_l h(l) E[Y_l(n, k)]``."""
    total = 0j
    for l, h in enumerate(taps):
        if h != 0:
            total += h * predict_path_moments(kind, n, l, k, nu, n_fft, n_cp, sigma_x_sq).mean
    return total


def interference_variance_component(interference_psd, preamble_psd, k) -> float | np.ndarray:
    """Cyclic cross-correlation ``sum_k1 E|g_k1|^2 E|d_(k1-k) mod N|^2``.

    Both PSD vectors are indexed by FFT bin. ``k`` may be an int or an array.
    """
    g = np.asarray(interference_psd, dtype=float)
    d = np.asarray(preamble_psd, dtype=float)
    if g.shape != d.shape or g.ndim != 1:
        raise ValueError("PSD vectors must be one-dimensional and the same length")
    ks = np.atleast_1d(np.asarray(k, dtype=np.int64))
    n = g.size
    k1 = np.arange(n)
    out = np.array([float(np.dot(g, d[(k1 - kk) % n])) for kk in ks])
    return out if np.ndim(k) else float(out[0])


def nbi_psd(center_freq: float, power: float, n_fft: int) -> np.ndarray:
    """``E|g_k|^2`` of a complex sinusoid over one N-sample window (sums to ``N power``)."""
    k = np.arange(n_fft)
    leak = np.array([_dirichlet(n_fft, center_freq - kk, n_fft) for kk in k])
    return power * leak**2 / n_fft


def wbi_psd(freqs: Iterable[float], power: float, n_fft: int) -> np.ndarray:
    """Tone-sum approximation of the OFDM-like interferer (symbol changes inside the window ignored)."""
    f = list(freqs)
    return sum(nbi_psd(fj, power / len(f), n_fft) for fj in f)


def preamble_psd(sc_map: SubcarrierMap, kind: PreambleKind) -> np.ndarray:
    """``E|d_k|^2`` of the reference preamble, including its power scaling."""
    if kind is PreambleKind.SIMPLE:
        support = sc_map.occupied
    else:
        support = tuple(k for k in sc_map.occupied if k % 2 == 0)
    psd = np.zeros(sc_map.n_fft)
    psd[sc_map.bins(support)] = sc_map.alpha / len(support)
    return psd


def full_variance(taps, path_variances, v_i: float, sigma_w_sq: float, sigma_x_sq: float, n_fft: int) -> float:
    """``sum_l |h(l)|^2 V[Y_l] + V_i + N sigma_w^2 sigma_x^2``."""
    h2 = np.abs(np.asarray(getattr(taps, "taps", taps), dtype=np.complex128)) ** 2
    v = np.asarray(
        [p.variance if isinstance(p, MomentPrediction) else p for p in path_variances], dtype=float
    )
    if h2.shape != v.shape:
        raise ValueError("one path variance per channel tap is required")
    return float(np.dot(h2, v) + v_i + n_fft * sigma_w_sq * sigma_x_sq)


def threshold_mean(
    n: int, taps, sigma_i_sq: float, sigma_w_sq: float, sigma_x_sq: float, n_fft: int, n_cp: int
) -> float:
    """Expected noise-floor estimate ``E[sigma_thr^2(n)]`` for a frame whose preamble starts at 0."""
    h2 = np.abs(np.asarray(getattr(taps, "taps", taps), dtype=np.complex128)) ** 2
    filled = [min(max(0, n_fft + n_cp + n - l), n_fft) for l in range(h2.size)]
    return float(sigma_x_sq * (sigma_i_sq + sigma_w_sq) * n_fft + sigma_x_sq**2 * np.dot(h2, filled))


def cfo_estimator_bounds(n_fft: int, snr: float) -> tuple[float, float]:
    """(variance of the iterated CFO estimator, Cramer-Rao bound) for linear SNR."""
    if snr <= 0:
        raise ValueError("snr must be positive (linear scale)")
    return 1.0 / (4 * n_fft * snr), 6.0 / (4 * math.pi**2 * n_fft * snr)


def peak_power(delta: float, n_fft: int, sigma_x_sq: float, gain: float = 1.0) -> float:
    """Expected ``|Y|^2`` at the aligned path for a residual offset ``delta = nu - k``."""
    return gain * sigma_x_sq**2 * _dirichlet(n_fft, delta, n_fft) ** 2


def z_peak_power(delta: float, n_fft: int, sigma_x_sq: float, gain: float = 1.0) -> float:
    """Expected ``|Z|^2`` at the aligned path, ``Z = (Y(k) - Y(k+1) e^{-j pi/N}) / sqrt 2``."""
    m0 = np.exp(1j * np.pi * delta * (1 - 1 / n_fft)) * _dirichlet(n_fft, delta, n_fft)
    d1 = delta - 1
    m1 = np.exp(1j * np.pi * d1 * (1 - 1 / n_fft)) * _dirichlet(n_fft, d1, n_fft)
    return float(gain * sigma_x_sq**2 * abs(m0 - m1 * np.exp(-1j * np.pi / n_fft)) ** 2 / 2)


def vi_curve(interference_psd, preamble_psd_vec, sigma_i_sq: float, sigma_x_sq: float) -> list[tuple[int, float]]:
    """``V_i(k) / (N sigma_i^2 sigma_x^2)`` for ``k = -N/2 .. N/2-1``."""
    n = len(preamble_psd_vec)
    ks = np.arange(-(n // 2), n - n // 2)
    v = interference_variance_component(interference_psd, preamble_psd_vec, ks)
    norm = n * sigma_i_sq * sigma_x_sq
    return [(int(k), float(val / norm)) for k, val in zip(ks, v)]
