"""Channel and impairment model: multipath, CFO, in-band interference, AWGN.

Received signal::

    r(n) = sum_l x(n - l) h(l) exp(j 2 pi n nu / N) + i(n) + w(n)

with ``n`` the global sample index. Noise and interference powers are set
relative to the transmit per-sample power over the whole receiver band.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .waveform import BasebandSignal, SeedLike, derive_seed, qpsk_symbols

# Extended Vehicular A (3GPP TS 36.101 annex B.2)
EVA_DELAYS_NS = (0.0, 30.0, 150.0, 310.0, 370.0, 710.0, 1090.0, 1730.0, 2510.0)
EVA_POWERS_DB = (0.0, -1.5, -1.4, -3.6, -0.6, -9.1, -7.0, -12.0, -16.9)

# seed keys of the independent random streams inside corrupt()
NOISE_STREAM, INTERFERENCE_STREAM = 0, 1


@dataclass(frozen=True)
class ChannelRealization:
    taps: np.ndarray
    profile_name: str = "custom"

    def __post_init__(self) -> None:
        taps = np.atleast_1d(np.asarray(self.taps, dtype=np.complex128))
        if taps.ndim != 1 or taps.size < 1:
            raise ValueError("channel needs at least one tap")
        object.__setattr__(self, "taps", taps)

    @property
    def n_taps(self) -> int:
        return self.taps.size

    @property
    def strongest_tap(self) -> int:
        return int(np.argmax(np.abs(self.taps) ** 2))

    @classmethod
    def identity(cls) -> "ChannelRealization":
        return cls(np.ones(1), "flat")


def eva_tap_powers(sample_rate_hz: float) -> np.ndarray:
    """Mean tap powers of the EVA profile on the sample grid, normalized to sum 1.

    Delays are rounded to the nearest sample; paths landing on the same
    sample are merged by adding their powers.
    """
    if sample_rate_hz <= 0:
        raise ValueError("sample_rate_hz must be positive")
    lags = np.rint(np.asarray(EVA_DELAYS_NS) * 1e-9 * sample_rate_hz).astype(int)
    powers = np.zeros(lags.max() + 1)
    np.add.at(powers, lags, 10.0 ** (np.asarray(EVA_POWERS_DB) / 10.0))
    return powers / powers.sum()


def sample_eva_channel(n_fft: int, n_cp: int, sample_rate_hz: float, seed: SeedLike) -> ChannelRealization:
    """Static Rayleigh realization of the EVA profile (``n_fft`` kept for interface symmetry)."""
    powers = eva_tap_powers(sample_rate_hz)
    if powers.size - 1 > n_cp:
        raise ValueError(
            f"EVA delay spread of {powers.size - 1} samples exceeds the cyclic prefix ({n_cp})"
        )
    rng = np.random.default_rng(seed)
    g = (rng.standard_normal(powers.size) + 1j * rng.standard_normal(powers.size)) / np.sqrt(2.0)
    taps = g * np.sqrt(powers)
    # zero-power slots between rounded delays stay exactly zero
    return ChannelRealization(taps, "eva")


def apply_channel(x: BasebandSignal, ch: ChannelRealization) -> BasebandSignal:
    return BasebandSignal(np.convolve(x.samples, ch.taps), x.origin_index)


def apply_cfo(x: BasebandSignal, nu: float, n_fft: int) -> BasebandSignal:
    if nu == 0:
        return BasebandSignal(x.samples.copy(), x.origin_index)
    n = x.indices()
    # reduce the phase argument modulo 1 cycle before exp for accuracy on long timelines
    cycles = np.mod(n * (nu / n_fft), 1.0)
    return BasebandSignal(x.samples * np.exp(2j * np.pi * cycles), x.origin_index)


def make_nbi(
    length: int,
    center_freq: float,
    amplitude: float,
    phase: float,
    n_fft: int,
    origin_index: int = 0,
) -> BasebandSignal:
    """Complex sinusoid ``A exp(j 2 pi f n / N + j theta)`` on global indices."""
    if length < 1:
        raise ValueError("length must be at least 1")
    n = np.arange(origin_index, origin_index + length)
    cycles = np.mod(n * (center_freq / n_fft), 1.0)
    return BasebandSignal(amplitude * np.exp(1j * (2 * np.pi * cycles + phase)), origin_index)


def make_wbi(
    length: int,
    occupied_fractional_bins,
    symbol_len: int,
    seed: SeedLike,
    n_fft: int,
    origin_index: int = 0,
) -> BasebandSignal:
    """OFDM-like interferer with fresh QPSK symbols per block on the given frequencies.

    Block boundaries are offset by a random amount so they are unrelated to
    the victim's symbol timing. Average power is 1.
    """
    freqs = np.asarray(sorted(occupied_fractional_bins), dtype=float)
    if freqs.size == 0:
        raise ValueError("WBI needs at least one occupied frequency")
    if length < 1:
        raise ValueError("length must be at least 1")
    offset_ss, symbol_ss = derive_seed(seed, 0), derive_seed(seed, 1)
    offset = int(np.random.default_rng(offset_ss).integers(0, symbol_len))
    n_blocks = (length + offset) // symbol_len + 1
    syms = qpsk_symbols(n_blocks * freqs.size, symbol_ss)
    syms = syms.reshape(n_blocks, freqs.size)
    m = np.arange(symbol_len)
    tones = np.exp(2j * np.pi * np.outer(m, freqs) / n_fft)  # (symbol_len, tones)
    stream = (syms @ tones.T).ravel() / np.sqrt(freqs.size)
    return BasebandSignal(stream[offset : offset + length], origin_index)


@dataclass(frozen=True)
class NoInterference:
    pass


@dataclass(frozen=True)
class NBI:
    center_freq: float
    phase: float | None = None  # None: uniform per frame

    def __post_init__(self) -> None:
        if not math.isfinite(self.center_freq):
            raise ValueError("NBI center frequency must be finite")


@dataclass(frozen=True)
class WBI:
    occupied: tuple[float, ...]
    symbol_len: int | None = None  # None: N, no CP


Interference = Union[NoInterference, NBI, WBI]


@dataclass(frozen=True)
class ImpairmentConfig:
    cfo: float = 0.0
    snr_db: float = math.inf
    interference: Interference = NoInterference()
    sir_db: float = math.inf

    def validate(self, n_fft: int, occupied: tuple[int, ...] = ()) -> None:
        itf = self.interference
        if isinstance(itf, NBI) and not -n_fft / 2 <= itf.center_freq < n_fft / 2:
            raise ValueError("NBI center frequency must lie in [-N/2, N/2)")
        if isinstance(itf, WBI):
            occ = set(occupied)
            clash = [f for f in itf.occupied if float(f).is_integer() and int(f) in occ]
            if clash:
                raise ValueError(f"WBI frequencies coincide with occupied subcarriers: {clash}")

    @property
    def has_interference(self) -> bool:
        return not isinstance(self.interference, NoInterference) and math.isfinite(self.sir_db)


def corrupt(
    x: BasebandSignal,
    imp: ImpairmentConfig,
    ch: ChannelRealization,
    seed: SeedLike,
    *,
    n_fft: int,
    signal_power: float,
) -> BasebandSignal:
    """Apply channel, CFO, interference and AWGN.

    ``signal_power`` is the transmit per-sample power the SNR and SIR refer to.
    Noise and interference draw from independent streams derived from ``seed``.
    """
    noise_ss = derive_seed(seed, NOISE_STREAM)
    itf_ss = derive_seed(seed, INTERFERENCE_STREAM)
    y = apply_cfo(apply_channel(x, ch), imp.cfo, n_fft)
    out = y.samples
    if imp.has_interference:
        out = out + _interference(y, imp, itf_ss, n_fft, signal_power)
    if math.isfinite(imp.snr_db):
        var = signal_power * 10.0 ** (-imp.snr_db / 10.0)
        rng = np.random.default_rng(noise_ss)
        w = rng.standard_normal(out.size) + 1j * rng.standard_normal(out.size)
        out = out + w * np.sqrt(var / 2.0)
    return BasebandSignal(out, y.origin_index)


def _interference(
    y: BasebandSignal,
    imp: ImpairmentConfig,
    ss: np.random.SeedSequence,
    n_fft: int,
    signal_power: float,
) -> np.ndarray:
    power = signal_power * 10.0 ** (-imp.sir_db / 10.0)
    itf = imp.interference
    if isinstance(itf, NBI):
        rng = np.random.default_rng(ss)
        phase = rng.uniform(0.0, 2 * np.pi) if itf.phase is None else itf.phase
        sig = make_nbi(len(y), itf.center_freq, np.sqrt(power), phase, n_fft, y.origin_index)
        return sig.samples
    if isinstance(itf, WBI):
        block = itf.symbol_len or n_fft
        sig = make_wbi(len(y), itf.occupied, block, ss, n_fft, y.origin_index)
        return sig.samples * np.sqrt(power)
    raise TypeError(f"unsupported interference {itf!r}")
