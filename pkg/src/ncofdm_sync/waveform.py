"""NC-OFDM frame generation.

Transform conventions used throughout the package:

* modulation (IFFT) carries ``1/sqrt(N)``, so a symbol with unit-power
  subcarriers on ``alpha`` bins has mean per-sample power ``alpha / N``;
* the forward transform used by the receiver is unnormalized.

Subcarrier index ``k`` in ``[-N/2, N/2 - 1]`` lives in FFT bin ``k mod N``.

Pseudo-random symbols come from :func:`numpy.random.default_rng` (PCG64
seeded through ``SeedSequence``), so a receiver holding the same seed
regenerates a bit-identical reference preamble.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Union

import numpy as np

SeedLike = Union[int, np.random.SeedSequence]

MIN_OCCUPIED = 8
CLT_WARN_OCCUPIED = 32


class PreambleKind(str, enum.Enum):
    SCHMIDL_COX = "sc"
    SIMPLE = "simple"


class Modulation(str, enum.Enum):
    QPSK = "qpsk"
    # circular complex Gaussian symbols; the regime the closed-form moments assume
    GAUSSIAN = "gaussian"


@dataclass(frozen=True)
class SubcarrierMap:
    """Occupied subcarrier set ``I`` and preamble subset ``I_RP`` on an N-bin grid."""

    n_fft: int
    occupied: tuple[int, ...]
    preamble_occupied: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        n = self.n_fft
        if n < 2:
            raise ValueError("n_fft must be at least 2")
        occ = tuple(int(k) for k in self.occupied)
        if len(set(occ)) != len(occ):
            raise ValueError("duplicate subcarrier index in occupied set")
        bad = [k for k in occ if not -n // 2 <= k <= n // 2 - 1]
        if bad:
            raise ValueError(f"subcarrier indices out of range [-N/2, N/2-1]: {bad[:5]}")
        if len(occ) < MIN_OCCUPIED:
            raise ValueError(f"need at least {MIN_OCCUPIED} occupied subcarriers, got {len(occ)}")
        if len(occ) < CLT_WARN_OCCUPIED:
            warnings.warn(
                f"only {len(occ)} occupied subcarriers; Gaussian approximation of the "
                "time samples is poor",
                stacklevel=2,
            )
        rp = tuple(int(k) for k in self.preamble_occupied) or occ
        if not set(rp) <= set(occ):
            raise ValueError("preamble_occupied must be a subset of occupied")
        object.__setattr__(self, "occupied", tuple(sorted(occ)))
        object.__setattr__(self, "preamble_occupied", tuple(sorted(rp)))

    @classmethod
    def from_ranges(cls, n_fft: int, *ranges: tuple[int, int]) -> "SubcarrierMap":
        """Build from inclusive ``(first, last)`` index ranges."""
        occ: list[int] = []
        for lo, hi in ranges:
            occ.extend(range(lo, hi + 1))
        return cls(n_fft, tuple(occ))

    @property
    def alpha(self) -> int:
        return len(self.occupied)

    def bins(self, indices: Iterable[int] | None = None) -> np.ndarray:
        """FFT bin positions (``k mod N``) of the given indices, default ``occupied``."""
        idx = self.occupied if indices is None else tuple(indices)
        return np.asarray(idx, dtype=np.int64) % self.n_fft

    def without(self, indices: Iterable[int]) -> "SubcarrierMap":
        drop = set(indices)
        return SubcarrierMap(self.n_fft, tuple(k for k in self.occupied if k not in drop))


@dataclass(frozen=True)
class FrameConfig:
    map: SubcarrierMap
    n_cp: int
    n_symbols: int = 11
    preamble_kind: PreambleKind = PreambleKind.SCHMIDL_COX
    interframe_gap: int = 2
    modulation: Modulation = Modulation.QPSK

    def __post_init__(self) -> None:
        n = self.map.n_fft
        if not 0 <= self.n_cp < n:
            raise ValueError("n_cp must satisfy 0 <= n_cp < N")
        if self.n_symbols < 1:
            raise ValueError("n_symbols must be positive")
        if self.interframe_gap < 0:
            raise ValueError("interframe_gap must be non-negative")
        if self.preamble_kind is PreambleKind.SCHMIDL_COX and n % 2:
            raise ValueError("Schmidl&Cox preamble needs an even FFT size")

    @property
    def n_fft(self) -> int:
        return self.map.n_fft

    @property
    def symbol_len(self) -> int:
        return self.map.n_fft + self.n_cp

    @property
    def signal_power(self) -> float:
        """Expected per-sample power of an occupied symbol, ``alpha / N``."""
        return self.map.alpha / self.map.n_fft

    @property
    def frame_len(self) -> int:
        return (self.interframe_gap + self.n_symbols) * self.symbol_len

    def preamble_indices(self) -> tuple[int, ...]:
        if self.preamble_kind is PreambleKind.SIMPLE:
            return self.map.occupied
        return tuple(k for k in self.map.occupied if k % 2 == 0)


@dataclass
class BasebandSignal:
    """Complex samples placed on a global integer timeline.

    ``origin_index`` is the global index of ``samples[0]``; frames built by
    :func:`assemble_frame` put global index 0 on the first post-CP preamble sample.
    """

    samples: np.ndarray
    origin_index: int = 0

    def __post_init__(self) -> None:
        self.samples = np.asarray(self.samples, dtype=np.complex128)
        if self.samples.ndim != 1:
            raise ValueError("samples must be one-dimensional")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("signal contains NaN or Inf")
        self.origin_index = int(self.origin_index)

    def __len__(self) -> int:
        return self.samples.size

    @property
    def stop_index(self) -> int:
        """Global index one past the last sample."""
        return self.origin_index + self.samples.size

    def indices(self) -> np.ndarray:
        return np.arange(self.origin_index, self.stop_index)

    def window(self, n: int, length: int) -> np.ndarray:
        """Samples at global indices ``n .. n+length-1``."""
        start = n - self.origin_index
        if start < 0 or start + length > self.samples.size:
            raise IndexError(
                f"window [{n}, {n + length}) outside signal [{self.origin_index}, {self.stop_index})"
            )
        return self.samples[start : start + length]

    def to_iq_bytes(self) -> bytes:
        """Interleaved little-endian float64 I/Q."""
        iq = np.empty(2 * self.samples.size, dtype="<f8")
        iq[0::2] = self.samples.real
        iq[1::2] = self.samples.imag
        return iq.tobytes()

    @classmethod
    def from_iq_bytes(cls, data: bytes, origin_index: int = 0) -> "BasebandSignal":
        iq = np.frombuffer(data, dtype="<f8")
        if iq.size % 2:
            raise ValueError("odd number of float64 values in I/Q buffer")
        return cls(iq[0::2] + 1j * iq[1::2], origin_index)

    def dump(self, path: str | Path) -> None:
        Path(path).write_bytes(self.to_iq_bytes())

    @classmethod
    def load(cls, path: str | Path, origin_index: int = 0) -> "BasebandSignal":
        return cls.from_iq_bytes(Path(path).read_bytes(), origin_index)


@dataclass(frozen=True)
class PreambleRecord:
    """Reference preamble known to the receiver.

    ``freq_symbols`` is indexed by FFT bin (``k mod N``) and already includes
    any power scaling applied to the preamble.
    """

    freq_symbols: np.ndarray
    time_samples: np.ndarray
    kind: PreambleKind
    power: float
    n_cp: int
    support: tuple[int, ...] = field(default=())

    @property
    def n_fft(self) -> int:
        return self.time_samples.size


def derive_seed(seed: SeedLike, *keys: int) -> np.random.SeedSequence:
    """Child seed addressed by ``keys``; unlike ``SeedSequence.spawn`` it never mutates ``seed``."""
    base = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return np.random.SeedSequence(
        base.entropy, spawn_key=tuple(base.spawn_key) + tuple(int(k) for k in keys), pool_size=base.pool_size
    )


_QPSK = np.array([1 + 1j, 1 - 1j, -1 + 1j, -1 - 1j]) / np.sqrt(2.0)


def qpsk_symbols(count: int, seed: SeedLike) -> np.ndarray:
    """``count`` unit-power QPSK symbols drawn uniformly from ``{(+-1 +-j)/sqrt 2}``."""
    if count < 1:
        raise ValueError("count must be at least 1")
    rng = np.random.default_rng(seed)
    return _QPSK[rng.integers(0, 4, size=count)]


def gaussian_symbols(count: int, seed: SeedLike) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return (rng.standard_normal(count) + 1j * rng.standard_normal(count)) / np.sqrt(2.0)


def _symbols(modulation: Modulation, count: int, seed: SeedLike) -> np.ndarray:
    if modulation is Modulation.QPSK:
        return qpsk_symbols(count, seed)
    return gaussian_symbols(count, seed)


def modulate_symbol(freq_symbols: np.ndarray, n_cp: int) -> np.ndarray:
    """IFFT with ``1/sqrt(N)`` scaling, prefixed by the last ``n_cp`` samples."""
    d = np.asarray(freq_symbols, dtype=np.complex128)
    n = d.size
    if not 0 <= n_cp < n:
        raise ValueError("n_cp must satisfy 0 <= n_cp < N")
    body = np.fft.ifft(d) * np.sqrt(n)
    return np.concatenate([body[n - n_cp :], body])


def make_preamble(cfg: FrameConfig, seed: SeedLike) -> PreambleRecord:
    """Reference preamble for ``cfg``.

    The Schmidl&Cox kind modulates only the even members of ``I`` and is
    amplitude-scaled by ``sqrt(alpha / |I_RP|)`` (``sqrt 2`` for a balanced map)
    so its per-sample power equals that of a data symbol.
    """
    support = cfg.preamble_indices()
    if not support:
        raise ValueError("empty preamble support")
    n = cfg.n_fft
    scale = np.sqrt(cfg.map.alpha / len(support))
    d = np.zeros(n, dtype=np.complex128)
    d[np.asarray(support) % n] = scale * _symbols(cfg.modulation, len(support), seed)
    body = modulate_symbol(d, 0)
    return PreambleRecord(
        freq_symbols=d,
        time_samples=body,
        kind=cfg.preamble_kind,
        power=float(np.mean(np.abs(body) ** 2)),
        n_cp=cfg.n_cp,
        support=tuple(support),
    )


def assemble_frame(cfg: FrameConfig, data_seed: SeedLike, preamble: PreambleRecord) -> BasebandSignal:
    """Gap of empty symbols, then the preamble and ``P - 1`` data symbols, all with CP."""
    n, sym = cfg.n_fft, cfg.symbol_len
    if preamble.n_fft != n or preamble.n_cp != cfg.n_cp:
        raise ValueError("preamble was generated for a different frame configuration")
    out = np.zeros(cfg.frame_len, dtype=np.complex128)
    start = cfg.interframe_gap * sym
    out[start : start + sym] = np.concatenate([preamble.time_samples[n - cfg.n_cp :], preamble.time_samples])
    n_data = cfg.n_symbols - 1
    if n_data:
        syms = _symbols(cfg.modulation, n_data * cfg.map.alpha, data_seed).reshape(n_data, -1)
        bins = cfg.map.bins()
        for p in range(n_data):
            d = np.zeros(n, dtype=np.complex128)
            d[bins] = syms[p]
            pos = start + (p + 1) * sym
            out[pos : pos + sym] = modulate_symbol(d, cfg.n_cp)
    return BasebandSignal(out, origin_index=-(start + cfg.n_cp))
