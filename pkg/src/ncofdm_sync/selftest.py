"""Fast invariant checks for ``ncofdm-sync selftest``; the full suites live under tests/."""

from __future__ import annotations

import math
from typing import Callable, Iterator

import numpy as np

from . import analytic
from .harness import N_CP, N_FFT, NBI_BIN, NOGS_MAP, make_scenario, metrics_csv, run_scenario
from .impairments import NBI, ChannelRealization, ImpairmentConfig, apply_cfo, corrupt
from .luisa import LuisaParams, run_luisa, sync_variable, sync_variable_freq, z_metric
from .schmidl_cox import run_schmidl_cox
from .waveform import FrameConfig, PreambleKind, assemble_frame, make_preamble


def _frame(kind=PreambleKind.SCHMIDL_COX, seed=1):
    cfg = FrameConfig(NOGS_MAP, N_CP, 3, kind, 1)
    rp = make_preamble(cfg, seed)
    return cfg, rp, assemble_frame(cfg, seed + 1, rp)


def check_sync_variable_domains() -> str:
    _, rp, x = _frame(seed=3)
    for n in (-N_CP, -5, 0, 40):
        R = np.fft.fft(x.window(n, N_FFT))
        for k in (-7, 0, 3):
            a = sync_variable(x, rp, n, [k])[0]
            b = sync_variable_freq(R, rp.freq_symbols, k)
            if abs(a - b) > 1e-9 * max(abs(a), 1.0):
                return f"n={n} k={k}: {a} vs {b}"
    return ""


def check_z_identity() -> str:
    y = np.random.default_rng(0).standard_normal((3, N_FFT)) * (1 + 1j)
    z = z_metric(y, N_FFT, cyclic=True)
    ref = (y - np.roll(y, -1, axis=1) * np.exp(-1j * np.pi / N_FFT)) / math.sqrt(2)
    return "" if np.allclose(z, ref, rtol=0, atol=1e-12) else "Z differs from its definition"


def check_sc_repetition() -> str:
    _, rp, _ = _frame()
    h = N_FFT // 2
    return "" if np.allclose(rp.time_samples[:h], rp.time_samples[h:], atol=1e-12) else "halves differ"


def check_peak_geometry() -> str:
    ratio_y = analytic.peak_power(0.5, N_FFT, 1.0) / analytic.peak_power(0.0, N_FFT, 1.0)
    ratio_z = analytic.z_peak_power(0.5, N_FFT, 1.0) / analytic.peak_power(0.0, N_FFT, 1.0)
    if abs(ratio_y - 0.405) > 0.01 or abs(ratio_z - 0.81) > 0.02:
        return f"half-bin ratios {ratio_y:.3f}, {ratio_z:.3f}"
    return ""


def check_luisa_noiseless() -> str:
    for kind, nu in ((PreambleKind.SCHMIDL_COX, 2.37), (PreambleKind.SIMPLE, -1.5)):
        _, rp, x = _frame(kind, 5)
        params = LuisaParams(nu_max=None if kind is PreambleKind.SIMPLE else 20.0)
        res = run_luisa(apply_cfo(x, nu, N_FFT), rp, params)
        if not res.detected or abs(res.first_path) >= N_CP or abs(res.nu_final - nu) > 1e-3:
            return f"{kind.value}: timing {res.first_path}, cfo {res.nu_final}"
    return ""


def check_schmidl_cox_noiseless() -> str:
    _, rp, x = _frame()
    res = run_schmidl_cox(apply_cfo(x, 1.3, N_FFT), rp)
    if not -N_CP <= res.timing <= 0 or abs(res.cfo - 1.3) > 1e-6:
        return f"timing {res.timing}, cfo {res.cfo}"
    return ""


def check_nbi_null() -> str:
    cfg, rp, x = _frame()
    imp = ImpairmentConfig(interference=NBI(NBI_BIN), sir_db=-20.0)
    r = corrupt(x, imp, ChannelRealization.identity(), 7, n_fft=N_FFT, signal_power=cfg.signal_power)
    clean = sync_variable(x, rp, 0, [0])[0]
    hit = sync_variable(r, rp, 0, [0])[0]
    return "" if abs(hit - clean) < 1e-6 * abs(clean) else f"NBI leaks into Y(0,0): {abs(hit - clean)}"


def check_cfo_bounds() -> str:
    var, crlb = analytic.cfo_estimator_bounds(N_FFT, 100.0)
    ok = math.isclose(var, 9.765625e-6) and math.isclose(var / crlb, math.pi**2 / 6)
    return "" if ok else f"{var}, {crlb}"


def check_determinism() -> str:
    s = make_scenario("nogs", trials=4, base_seed=11)
    a = metrics_csv(run_scenario(s, ["luisa-sc", "sc-baseline"], [(10.0, 0.0)], workers=1))
    b = metrics_csv(run_scenario(s, ["luisa-sc", "sc-baseline"], [(10.0, 0.0)], workers=1))
    return "" if a == b else "repeated run differs"


CHECKS: dict[str, Callable[[], str]] = {
    "sync variable: time and frequency domain agree": check_sync_variable_domains,
    "Z metric matches its definition": check_z_identity,
    "Schmidl&Cox preamble repeats": check_sc_repetition,
    "half-bin peak ratios": check_peak_geometry,
    "LUISA noiseless recovery": check_luisa_noiseless,
    "Schmidl&Cox noiseless recovery": check_schmidl_cox_noiseless,
    "NBI in the notch is invisible at k=0": check_nbi_null,
    "CFO bounds": check_cfo_bounds,
    "seeded runs repeat": check_determinism,
}


def run_checks() -> Iterator[tuple[str, bool, str]]:
    for name, fn in CHECKS.items():
        try:
            detail = fn()
        except Exception as exc:  # report, keep going
            detail = f"{type(exc).__name__}: {exc}"
        yield name, not detail, detail
