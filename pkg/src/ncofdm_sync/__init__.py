"""Preamble-based time and frequency synchronization for NC-OFDM receivers."""

from .impairments import (
    NBI,
    WBI,
    ChannelRealization,
    ImpairmentConfig,
    NoInterference,
    apply_cfo,
    apply_channel,
    corrupt,
    make_nbi,
    make_wbi,
    sample_eva_channel,
)
from .luisa import DetectionRule, LuisaParams, SyncGrid, SyncResult, run_luisa
from .schmidl_cox import ScMetricTrace, run_schmidl_cox
from .waveform import (
    BasebandSignal,
    FrameConfig,
    Modulation,
    PreambleKind,
    PreambleRecord,
    SubcarrierMap,
    assemble_frame,
    make_preamble,
    modulate_symbol,
    qpsk_symbols,
)

__version__ = "0.1.0"
