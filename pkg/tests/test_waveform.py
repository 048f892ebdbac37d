import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import FULL_MAP, N, N_CP, frame_config
from oracles import idft_loop
from ncofdm_sync.harness import NOGS_MAP
from ncofdm_sync.waveform import (
    BasebandSignal,
    FrameConfig,
    Modulation,
    PreambleKind,
    SubcarrierMap,
    assemble_frame,
    derive_seed,
    make_preamble,
    modulate_symbol,
    qpsk_symbols,
)

QPSK_POINTS = {complex(a, b) / np.sqrt(2) for a in (1, -1) for b in (1, -1)}


def test_qpsk_symbols_are_unit_modulus():
    s = qpsk_symbols(4, seed=3)
    assert s.shape == (4,)
    np.testing.assert_allclose(np.abs(s) ** 2, 1.0, rtol=0, atol=1e-15)


def test_qpsk_symbols_deterministic_and_on_constellation():
    a, b = qpsk_symbols(1000, 9), qpsk_symbols(1000, 9)
    np.testing.assert_array_equal(a, b)
    assert {complex(v) for v in a} <= QPSK_POINTS
    assert len({complex(v) for v in a}) == 4


def test_qpsk_mean_power_is_exactly_one():
    assert np.mean(np.abs(qpsk_symbols(10_000, 1)) ** 2) == pytest.approx(1.0, abs=1e-12)


def test_qpsk_rejects_empty():
    with pytest.raises(ValueError):
        qpsk_symbols(0, 1)


def test_derive_seed_does_not_mutate_parent():
    base = np.random.SeedSequence(5)
    a = derive_seed(base, 1, 2)
    b = derive_seed(base, 1, 2)
    assert base.n_children_spawned == 0
    assert a.generate_state(4).tolist() == b.generate_state(4).tolist()
    assert derive_seed(5, 1, 3).generate_state(4).tolist() != a.generate_state(4).tolist()


@pytest.mark.parametrize(
    "occupied, message",
    [
        ((-129, 1, 2, 3, 4, 5, 6, 7), "out of range"),
        ((128, 1, 2, 3, 4, 5, 6, 7), "out of range"),
        ((1, 1, 2, 3, 4, 5, 6, 7), "duplicate"),
        ((1, 2, 3), "at least"),
    ],
)
def test_subcarrier_map_validation(occupied, message):
    with pytest.raises(ValueError, match=message):
        SubcarrierMap(256, occupied)


def test_subcarrier_map_warns_on_small_alpha():
    with pytest.warns(UserWarning, match="Gaussian"):
        SubcarrierMap(256, tuple(range(1, 17)))


def test_subcarrier_map_preamble_subset():
    with pytest.raises(ValueError, match="subset"):
        SubcarrierMap(256, tuple(range(1, 41)), preamble_occupied=(50,))
    m = SubcarrierMap(256, tuple(range(40, 0, -1)))
    assert m.occupied == tuple(range(1, 41))
    assert m.preamble_occupied == m.occupied


def test_negative_indices_wrap_to_upper_bins():
    m = SubcarrierMap.from_ranges(256, (-100, -1), (1, 100))
    bins = m.bins()
    assert bins[0] == 156 and bins[99] == 255 and bins[100] == 1


def test_frame_config_validation():
    with pytest.raises(ValueError):
        FrameConfig(NOGS_MAP, n_cp=256)
    odd = SubcarrierMap(255, tuple(range(1, 41)))
    with pytest.raises(ValueError, match="even"):
        FrameConfig(odd, 16, preamble_kind=PreambleKind.SCHMIDL_COX)
    FrameConfig(odd, 16, preamble_kind=PreambleKind.SIMPLE)


def test_simple_preamble_nonzeros_match_map():
    # smallest map accepted by the package: alpha = 8 on N = 16
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        m = SubcarrierMap(16, (-4, -3, -2, -1, 1, 2, 3, 4))
    rp = make_preamble(FrameConfig(m, 4, preamble_kind=PreambleKind.SIMPLE), 1)
    assert np.count_nonzero(rp.freq_symbols) == 8
    assert set(np.flatnonzero(rp.freq_symbols)) == set(m.bins().tolist())


def test_sc_preamble_half_period_repetition(sc_map):
    rp = make_preamble(frame_config(sc_map), seed=4)
    np.testing.assert_allclose(rp.time_samples[: N // 2], rp.time_samples[N // 2 :], atol=1e-13)
    support = np.flatnonzero(rp.freq_symbols)
    assert np.all(support % 2 == 0)
    expected = {k % N for k in sc_map.occupied if k % 2 == 0}
    assert set(support.tolist()) == expected


def test_sc_preamble_without_even_subcarrier_raises():
    m = SubcarrierMap(256, tuple(range(1, 80, 2)))
    with pytest.raises(ValueError, match="empty preamble support"):
        make_preamble(FrameConfig(m, 16), 1)


def test_sc_preamble_power_matches_data_symbols():
    m = SubcarrierMap.from_ranges(256, (-100, -1), (1, 100))
    cfg = FrameConfig(m, N_CP)
    rp = make_preamble(cfg, 0)
    assert rp.power == pytest.approx(np.mean(np.abs(rp.time_samples) ** 2), rel=1e-12)
    # oracle: per-sample power of ordinary data symbols averaged over 1000 seeds
    d = np.zeros(N, complex)
    data_power = []
    for seed in range(1000):
        d[m.bins()] = qpsk_symbols(m.alpha, seed)
        data_power.append(np.mean(np.abs(modulate_symbol(d, 0)) ** 2))
    assert rp.power == pytest.approx(np.mean(data_power), rel=1e-12)


def test_modulate_zero_input():
    np.testing.assert_array_equal(modulate_symbol(np.zeros(N, complex), N_CP), np.zeros(N + N_CP))


def test_modulate_dc_tone_is_constant():
    d = np.zeros(N, complex)
    d[0] = 1
    np.testing.assert_allclose(modulate_symbol(d, N_CP), np.full(N + N_CP, 1 / np.sqrt(N)), atol=1e-15)


def test_modulate_matches_definition_and_cyclic_prefix():
    d = np.zeros(32, complex)
    d[[1, 3, 5, 30]] = qpsk_symbols(4, 8)
    out = modulate_symbol(d, 8)
    np.testing.assert_allclose(out[8:], idft_loop(d), atol=1e-12)
    np.testing.assert_array_equal(out[:8], out[32:])


@settings(max_examples=40, deadline=None)
@given(
    seed=st.integers(0, 2**32 - 1),
    n_cp=st.integers(0, 64),
    occupied=st.sets(st.integers(-128, 127), min_size=8, max_size=255),
)
def test_modulation_round_trip(seed, n_cp, occupied):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        m = SubcarrierMap(N, tuple(occupied))
    d = np.zeros(N, complex)
    d[m.bins()] = qpsk_symbols(m.alpha, seed)
    body = modulate_symbol(d, n_cp)[n_cp:]
    back = np.fft.fft(body) / np.sqrt(N)
    assert np.max(np.abs(back - d)) <= 1e-9 * np.max(np.abs(d))


def test_assemble_frame_single_symbol_no_gap():
    cfg = frame_config(n_symbols=1, gap=0)
    rp = make_preamble(cfg, 3)
    x = assemble_frame(cfg, 4, rp)
    assert len(x) == N + N_CP
    np.testing.assert_array_equal(x.samples, np.concatenate([rp.time_samples[-N_CP:], rp.time_samples]))
    assert x.origin_index == -N_CP


def test_assemble_frame_reference_layout():
    # 11 symbols preceded by 2 empty ones
    cfg = frame_config(n_symbols=11, gap=2)
    rp = make_preamble(cfg, 1)
    x = assemble_frame(cfg, 2, rp)
    assert len(x) == 13 * 272 == 3536
    assert x.origin_index == -(2 * 272 + N_CP)
    np.testing.assert_array_equal(x.window(0, N), rp.time_samples)
    assert not np.any(x.window(x.origin_index, 2 * 272))


def test_assemble_frame_rejects_foreign_preamble():
    rp = make_preamble(frame_config(n_cp=8), 1)
    with pytest.raises(ValueError):
        assemble_frame(frame_config(n_cp=16), 1, rp)


def test_occupied_symbol_power_monte_carlo():
    cfg = frame_config(n_symbols=2, gap=0)
    powers = []
    for seed in range(1000):
        rp = make_preamble(cfg, seed)
        x = assemble_frame(cfg, seed + 10_000, rp)
        powers.append(np.mean(np.abs(x.samples[N + 2 * N_CP :]) ** 2))
    assert np.mean(powers) == pytest.approx(cfg.signal_power, rel=0.01)


def test_gaussian_modulation_power():
    cfg = frame_config(FULL_MAP, modulation=Modulation.GAUSSIAN, n_symbols=2, gap=0)
    p = [np.mean(np.abs(assemble_frame(cfg, s, make_preamble(cfg, s)).samples) ** 2) for s in range(500)]
    assert np.mean(p) == pytest.approx(1.0, rel=0.01)


def test_baseband_signal_validation_and_window():
    with pytest.raises(ValueError):
        BasebandSignal(np.array([1, np.nan]))
    x = BasebandSignal(np.arange(10), origin_index=-3)
    np.testing.assert_array_equal(x.window(-1, 3), [2, 3, 4])
    with pytest.raises(IndexError):
        x.window(5, 3)


def test_iq_dump_round_trip(tmp_path):
    x = BasebandSignal(qpsk_symbols(64, 1) * 0.3, origin_index=-7)
    raw = x.to_iq_bytes()
    assert len(raw) == 64 * 16
    assert np.frombuffer(raw[:8], "<f8")[0] == x.samples[0].real
    x.dump(tmp_path / "sig.iq")
    y = BasebandSignal.load(tmp_path / "sig.iq", origin_index=-7)
    np.testing.assert_array_equal(x.samples, y.samples)
