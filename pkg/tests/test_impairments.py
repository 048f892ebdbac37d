import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import N, N_CP, frame_config
from ncofdm_sync.harness import NOTCH_WBI_BINS
from ncofdm_sync.impairments import (
    EVA_DELAYS_NS,
    NBI,
    WBI,
    ChannelRealization,
    ImpairmentConfig,
    apply_cfo,
    apply_channel,
    corrupt,
    eva_tap_powers,
    make_nbi,
    make_wbi,
    sample_eva_channel,
)
from ncofdm_sync.waveform import BasebandSignal, assemble_frame, make_preamble, qpsk_symbols

FS = 3.84e6  # 256 subcarriers at 15 kHz spacing


def test_eva_grid_mapping_at_reference_rate():
    # oracle: round each profile delay to the sample grid by hand
    lags = [round(d * 1e-9 * FS) for d in EVA_DELAYS_NS]
    assert 2510e-9 * FS == pytest.approx(9.6384)
    assert lags == [0, 0, 1, 1, 1, 3, 4, 7, 10]
    powers = eva_tap_powers(FS)
    assert powers.size == max(lags) + 1 == 11
    assert powers.sum() == pytest.approx(1.0)
    assert powers[2] == 0 and powers[5] == 0
    # taps 0 and 30 ns share sample 0: 0 dB + (-1.5 dB)
    assert powers[0] / powers[10] == pytest.approx((1 + 10**-0.15) / 10**-1.69)


def test_eva_channel_deterministic_and_fits_cp():
    a = sample_eva_channel(N, N_CP, FS, 17)
    b = sample_eva_channel(N, N_CP, FS, 17)
    np.testing.assert_array_equal(a.taps, b.taps)
    assert a.n_taps - 1 <= N_CP
    assert a.taps[2] == 0


def test_eva_channel_rejects_short_cp():
    with pytest.raises(ValueError, match="cyclic prefix"):
        sample_eva_channel(N, 8, FS, 1)


def test_eva_unit_mean_gain():
    gains = [np.sum(np.abs(sample_eva_channel(N, N_CP, FS, s).taps) ** 2) for s in range(100_000)]
    assert 0.99 <= np.mean(gains) <= 1.01


def test_apply_channel_cases():
    x = BasebandSignal(qpsk_symbols(20, 1), origin_index=-4)
    y = apply_channel(x, ChannelRealization.identity())
    np.testing.assert_array_equal(y.samples, x.samples)
    y = apply_channel(x, ChannelRealization(np.array([0, 1])))
    assert len(y) == 21 and y.origin_index == -4
    np.testing.assert_array_equal(y.samples[1:], x.samples)
    taps = np.array([0.5, -0.2j, 0.1])
    imp = BasebandSignal(np.r_[1.0, np.zeros(9)])
    np.testing.assert_allclose(apply_channel(imp, ChannelRealization(taps)).samples[:3], taps)


def test_apply_cfo_cases():
    x = BasebandSignal(np.ones(300), origin_index=-10)
    np.testing.assert_array_equal(apply_cfo(x, 0.0, N).samples, x.samples)
    np.testing.assert_allclose(apply_cfo(x, float(N), N).samples, x.samples, atol=1e-12)
    y = apply_cfo(x, 1.0, N)
    n = np.arange(-10, 290)
    np.testing.assert_allclose(y.samples, np.exp(2j * np.pi * n / 256), atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(nu=st.floats(-50, 50), origin=st.integers(-5000, 5000), seed=st.integers(0, 1000))
def test_cfo_preserves_magnitude(nu, origin, seed):
    x = BasebandSignal(qpsk_symbols(64, seed) * 0.7, origin)
    np.testing.assert_allclose(np.abs(apply_cfo(x, nu, N).samples), np.abs(x.samples), rtol=1e-12)


def test_make_nbi():
    i = make_nbi(N, 24.0, 1.0, 0.0, N)
    assert i.samples[0] == 1 + 0j
    np.testing.assert_allclose(np.abs(i.samples) ** 2, 1.0)
    spec = np.abs(np.fft.fft(i.samples)) ** 2
    assert spec[24] == pytest.approx(np.sum(spec), rel=1e-12)
    np.testing.assert_allclose(np.abs(make_nbi(50, 3.3, 0.5, 1.0, N).samples) ** 2, 0.25)


def test_wbi_single_fractional_tone():
    w = make_wbi(N, [24.5], N, seed=4, n_fft=N)
    n = np.arange(N)
    ratio = w.samples / np.exp(2j * np.pi * 24.5 * n / N)
    # at most one block boundary inside N samples: piecewise-constant unit-modulus gain
    values = {complex(np.round(v, 10)) for v in ratio}
    assert len(values) <= 2
    np.testing.assert_allclose(np.abs(ratio), 1.0, rtol=1e-12)


def test_wbi_power_and_determinism():
    w = make_wbi(10_000, NOTCH_WBI_BINS, N, seed=2, n_fft=N)
    assert 0.98 <= np.mean(np.abs(w.samples) ** 2) <= 1.02
    np.testing.assert_array_equal(w.samples, make_wbi(10_000, NOTCH_WBI_BINS, N, seed=2, n_fft=N).samples)


def test_wbi_energy_concentrated_in_notch():
    w = make_wbi(1000 * N, NOTCH_WBI_BINS, N, seed=8, n_fft=N).samples.reshape(1000, N)
    psd = np.mean(np.abs(np.fft.fft(w, axis=1)) ** 2, axis=0)
    notch = np.arange(17, 32)
    assert psd[notch].sum() / psd.sum() >= 0.9


def test_corrupt_noiseless_identity():
    cfg = frame_config()
    x = assemble_frame(cfg, 1, make_preamble(cfg, 1))
    r = corrupt(x, ImpairmentConfig(), ChannelRealization.identity(), 5, n_fft=N, signal_power=cfg.signal_power)
    np.testing.assert_array_equal(r.samples, x.samples)
    assert r.origin_index == x.origin_index


def test_corrupt_noise_power_at_zero_db():
    x = BasebandSignal(np.zeros(100_000))
    r = corrupt(x, ImpairmentConfig(snr_db=0.0), ChannelRealization.identity(), 3, n_fft=N, signal_power=0.75)
    assert np.mean(np.abs(r.samples) ** 2) == pytest.approx(0.75, rel=0.02)


def test_corrupt_nbi_power_at_zero_db_sir():
    x = BasebandSignal(np.zeros(1000))
    imp = ImpairmentConfig(interference=NBI(24.0), sir_db=0.0)
    r = corrupt(x, imp, ChannelRealization.identity(), 3, n_fft=N, signal_power=0.75)
    np.testing.assert_allclose(np.abs(r.samples) ** 2, 0.75, rtol=1e-12)


def test_corrupt_deterministic_and_seed_sensitive():
    cfg = frame_config()
    x = assemble_frame(cfg, 1, make_preamble(cfg, 1))
    imp = ImpairmentConfig(cfo=1.3, snr_db=5, interference=WBI(NOTCH_WBI_BINS), sir_db=0)
    ch = sample_eva_channel(N, N_CP, FS, 2)
    a = corrupt(x, imp, ch, 9, n_fft=N, signal_power=cfg.signal_power)
    b = corrupt(x, imp, ch, 9, n_fft=N, signal_power=cfg.signal_power)
    c = corrupt(x, imp, ch, 10, n_fft=N, signal_power=cfg.signal_power)
    np.testing.assert_array_equal(a.samples, b.samples)
    assert not np.array_equal(a.samples, c.samples)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000), nu=st.floats(-3, 3))
def test_corrupt_is_linear_without_noise(seed, nu):
    a = BasebandSignal(qpsk_symbols(200, seed), -20)
    b = BasebandSignal(qpsk_symbols(200, seed + 1) * 0.3j, -20)
    ch = sample_eva_channel(N, N_CP, FS, seed)
    imp = ImpairmentConfig(cfo=nu)
    kw = dict(n_fft=N, signal_power=1.0)
    lhs = corrupt(BasebandSignal(a.samples + b.samples, -20), imp, ch, 0, **kw).samples
    rhs = corrupt(a, imp, ch, 0, **kw).samples + corrupt(b, imp, ch, 0, **kw).samples
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)


@pytest.mark.parametrize(
    "imp",
    [
        ImpairmentConfig(interference=NBI(128.0), sir_db=0),
        ImpairmentConfig(interference=NBI(-129.0), sir_db=0),
        ImpairmentConfig(interference=WBI((20.5, 40.0)), sir_db=0),
    ],
)
def test_impairment_validation(imp):
    occupied = tuple(range(32, 101))
    with pytest.raises(ValueError):
        imp.validate(N, occupied)


def test_impairment_validation_accepts_notch_interferers():
    occupied = tuple(range(32, 101))
    ImpairmentConfig(interference=NBI(24.0), sir_db=0).validate(N, occupied)
    ImpairmentConfig(interference=WBI(NOTCH_WBI_BINS), sir_db=0).validate(N, occupied)
    assert not ImpairmentConfig(interference=NBI(24.0)).has_interference
    assert math.isinf(ImpairmentConfig().snr_db)
