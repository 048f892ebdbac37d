"""Monte Carlo runner: scenarios, sweeps, per-trial records and aggregate metrics.

Every random draw of a trial comes from a seed addressed by
``(base_seed, trial, stream)``. Sweep cells therefore reuse the same
channels, CFOs, symbols and noise shapes (common random numbers), and a
parallel run gives exactly the same records as a serial one.
"""

from __future__ import annotations

import csv
import gzip
import io
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.stats import binomtest

from .impairments import (
    NBI,
    WBI,
    ChannelRealization,
    ImpairmentConfig,
    Interference,
    NoInterference,
    corrupt,
    sample_eva_channel,
)
from .luisa import DetectionRule, LuisaParams, run_luisa
from .schmidl_cox import run_schmidl_cox
from .waveform import FrameConfig, PreambleKind, SubcarrierMap, assemble_frame, derive_seed, make_preamble

N_FFT = 256
N_CP = 16
SAMPLE_RATE_HZ = 3.84e6
DSA_NOTCH_HALF_WIDTH = 22  # 45-subcarrier notch

# seed streams inside one trial
CFO_STREAM, CHANNEL_STREAM, PREAMBLE_STREAM, DATA_STREAM, IMPAIRMENT_STREAM, SCENARIO_STREAM = range(6)

METRICS_COLUMNS = (
    "scenario",
    "algorithm",
    "snr_db",
    "sir_db",
    "trials",
    "errors",
    "p_err",
    "p_err_ci_lo",
    "p_err_ci_hi",
    "time_mse_all",
    "time_mse_ok",
    "freq_mse_all",
    "freq_mse_ok",
)
TRIAL_COLUMNS = (
    "trial_id",
    "algorithm",
    "snr_db",
    "sir_db",
    "true_timing",
    "true_cfo",
    "est_timing",
    "est_cfo",
    "success",
    "aux",
)


@dataclass(frozen=True)
class AlgorithmSpec:
    name: str
    preamble_kind: PreambleKind
    luisa: LuisaParams | None = None  # None: Schmidl&Cox baseline
    sc_search_range: int = 20


def standard_algorithms(
    nu_max: float | None = 20.0, p_fd: float = 1e-5, gamma: int = 2
) -> dict[str, AlgorithmSpec]:
    """Named receiver configurations; ``nu_max`` applies to the restricted-range variant."""
    sc, simple = PreambleKind.SCHMIDL_COX, PreambleKind.SIMPLE
    return {
        "luisa-sc": AlgorithmSpec("luisa-sc", sc, LuisaParams(nu_max, p_fd, gamma, DetectionRule.YZ_COMBINED)),
        "luisa-simple": AlgorithmSpec("luisa-simple", simple, LuisaParams(None, p_fd, gamma, DetectionRule.Y_ONLY)),
        "luisa-yonly": AlgorithmSpec("luisa-yonly", sc, LuisaParams(None, p_fd, gamma, DetectionRule.Y_ONLY)),
        "sc-baseline": AlgorithmSpec("sc-baseline", sc, None),
    }


@dataclass(frozen=True)
class Scenario:
    name: str
    sc_map: SubcarrierMap
    interference: Interference = NoInterference()
    cfo_range: tuple[float, float] = (-3.0, 3.0)
    channel_profile: str = "eva"
    trials: int = 10_000
    base_seed: int = 0
    n_cp: int = N_CP
    n_symbols: int = 11
    interframe_gap: int = 2
    sample_rate_hz: float = SAMPLE_RATE_HZ
    # DSA: NBI center drawn uniformly in this interval per frame and a notch carved around it
    dsa_nbi_range: tuple[float, float] | None = None
    dsa_notch_half_width: int = DSA_NOTCH_HALF_WIDTH

    def __post_init__(self) -> None:
        if self.channel_profile not in ("eva", "awgn"):
            raise ValueError(f"unknown channel profile {self.channel_profile!r}")
        if self.trials < 0:
            raise ValueError("trials must be non-negative")

    def frame_setup(self, trial: int) -> tuple[SubcarrierMap, Interference]:
        """Subcarrier map and interferer for one frame."""
        if self.dsa_nbi_range is None:
            return self.sc_map, self.interference
        rng = np.random.default_rng(derive_seed(self.base_seed, trial, SCENARIO_STREAM))
        f = float(rng.uniform(*self.dsa_nbi_range))
        c = int(round(f))
        notch = range(c - self.dsa_notch_half_width, c + self.dsa_notch_half_width + 1)
        return self.sc_map.without(notch), NBI(f)

    def channel(self, trial: int) -> ChannelRealization:
        if self.channel_profile == "awgn":
            return ChannelRealization.identity()
        return sample_eva_channel(
            N_FFT, self.n_cp, self.sample_rate_hz, derive_seed(self.base_seed, trial, CHANNEL_STREAM)
        )

    def cfo(self, trial: int) -> float:
        lo, hi = self.cfo_range
        if lo == hi:
            return float(lo)
        return float(np.random.default_rng(derive_seed(self.base_seed, trial, CFO_STREAM)).uniform(lo, hi))


def _ranges(*spans: tuple[int, int]) -> tuple[int, ...]:
    return tuple(k for lo, hi in spans for k in range(lo, hi + 1))


NOGS_MAP = SubcarrierMap(N_FFT, _ranges((-100, -1), (1, 16), (32, 100)))
GS_MAP = SubcarrierMap(N_FFT, _ranges((-85, -1), (1, 1), (47, 85)))
DSA_INITIAL_MAP = SubcarrierMap(N_FFT, _ranges((-100, -1), (1, 100)))
NOTCH_WBI_BINS = tuple(k + 0.5 for k in range(17, 31))  # 17.5 .. 30.5
NBI_BIN = 24.0


def make_scenario(name: str, interference: str = "nbi", **overrides) -> Scenario:
    """Named scenario: ``nogs`` (15-SC notch), ``gs`` (guard subcarriers), ``dsa`` (moving NBI)."""
    itf: Interference
    if interference == "none":
        itf = NoInterference()
    elif interference == "nbi":
        itf = NBI(NBI_BIN)
    elif interference == "wbi":
        itf = WBI(NOTCH_WBI_BINS)
    else:
        raise ValueError(f"unknown interference {interference!r}")
    if name == "nogs":
        base = Scenario("nogs", NOGS_MAP, itf)
    elif name == "gs":
        base = Scenario("gs", GS_MAP, itf)
    elif name == "dsa":
        if interference != "nbi":
            raise ValueError("the dsa scenario is defined with a moving NBI only")
        base = Scenario("dsa", DSA_INITIAL_MAP, NBI(0.0), dsa_nbi_range=(-128.0, 127.0))
    else:
        raise ValueError(f"unknown scenario {name!r}")
    return replace(base, **overrides)


@dataclass(frozen=True)
class TrialRecord:
    trial_id: int
    algorithm: str
    snr_db: float
    sir_db: float
    true_timing: int
    true_cfo: float
    est_timing: int | None
    est_cfo: float | None
    success: bool
    aux: dict = field(default_factory=dict, compare=False)

    @property
    def time_error(self) -> float:
        return math.nan if self.est_timing is None else float(self.est_timing - self.true_timing)

    @property
    def freq_error(self) -> float:
        return math.nan if self.est_cfo is None else self.est_cfo - self.true_cfo


@dataclass(frozen=True)
class CellMetrics:
    scenario: str
    algorithm: str
    snr_db: float
    sir_db: float
    trials: int
    errors: int
    p_err: float
    p_err_ci_lo: float
    p_err_ci_hi: float
    time_mse_all: float
    time_mse_ok: float
    freq_mse_all: float
    freq_mse_ok: float


@dataclass
class MetricsReport:
    scenario: str
    cells: list[CellMetrics]
    records: list[TrialRecord]

    def cell(self, algorithm: str, snr_db: float, sir_db: float = math.inf) -> CellMetrics:
        for c in self.cells:
            if c.algorithm == algorithm and c.snr_db == snr_db and c.sir_db == sir_db:
                return c
        raise KeyError((algorithm, snr_db, sir_db))


def is_success(time_error: float, freq_error: float, n_cp: int) -> bool:
    return abs(time_error) < n_cp and abs(freq_error) < 0.5


def wilson_interval(errors: int, trials: int, confidence: float = 0.95) -> tuple[float, float]:
    if trials == 0:
        return math.nan, math.nan
    ci = binomtest(errors, trials).proportion_ci(confidence, method="wilson")
    return float(ci.low), float(ci.high)


def _mse(values: Iterable[float]) -> float:
    v = np.array([x for x in values if math.isfinite(x)], dtype=float)
    return float(np.mean(v**2)) if v.size else math.nan


def summarize(scenario: str, algorithm: str, snr_db: float, sir_db: float, recs: Sequence[TrialRecord]) -> CellMetrics:
    n = len(recs)
    errors = sum(not r.success for r in recs)
    lo, hi = wilson_interval(errors, n)
    ok = [r for r in recs if r.success]
    return CellMetrics(
        scenario,
        algorithm,
        snr_db,
        sir_db,
        n,
        errors,
        errors / n if n else math.nan,
        lo,
        hi,
        _mse(r.time_error for r in recs),
        _mse(r.time_error for r in ok),
        _mse(r.freq_error for r in recs),
        _mse(r.freq_error for r in ok),
    )


def run_trial(
    s: Scenario, trial: int, algorithms: Sequence[AlgorithmSpec], sweep: Sequence[tuple[float, float]]
) -> list[TrialRecord]:
    """All algorithms and sweep cells for one trial index."""
    sc_map, itf = s.frame_setup(trial)
    ch = s.channel(trial)
    nu = s.cfo(trial)
    true_timing = int(np.flatnonzero(ch.taps)[0])
    frames = {}
    for kind in {a.preamble_kind for a in algorithms}:
        cfg = FrameConfig(sc_map, s.n_cp, s.n_symbols, kind, s.interframe_gap)
        rp = make_preamble(cfg, derive_seed(s.base_seed, trial, PREAMBLE_STREAM))
        frames[kind] = (cfg, rp, assemble_frame(cfg, derive_seed(s.base_seed, trial, DATA_STREAM), rp))

    out: list[TrialRecord] = []
    for snr_db, sir_db in sweep:
        imp = ImpairmentConfig(nu, snr_db, itf, sir_db)
        received = {}
        for kind, (cfg, rp, x) in frames.items():
            imp.validate(cfg.n_fft, cfg.map.occupied)
            received[kind] = corrupt(
                x,
                imp,
                ch,
                derive_seed(s.base_seed, trial, IMPAIRMENT_STREAM),
                n_fft=cfg.n_fft,
                signal_power=cfg.signal_power,
            )
        for alg in algorithms:
            cfg, rp, _ = frames[alg.preamble_kind]
            r = received[alg.preamble_kind]
            est_t, est_nu, aux = _run_algorithm(alg, r, rp)
            if est_t is None:
                success = False
            else:
                success = is_success(est_t - true_timing, est_nu - nu, s.n_cp)
            out.append(TrialRecord(trial, alg.name, snr_db, sir_db, true_timing, nu, est_t, est_nu, success, aux))
    return out


def _run_algorithm(alg: AlgorithmSpec, r, rp) -> tuple[int | None, float | None, dict]:
    if alg.luisa is None:
        res = run_schmidl_cox(r, rp, alg.sc_search_range)
        return res.timing, res.cfo, {"frac": res.frac_cfo, "g": res.int_cfo}
    res = run_luisa(r, rp, alg.luisa)
    if not res.detected:
        return None, None, {"detected": False}
    aux = {"n_M": res.n_M, "k_M": res.k_M, "z": res.used_z_metric, "paths": len(res.paths)}
    if res.degenerate:
        aux["degenerate"] = True
    return res.first_path, res.nu_final, aux


def worker_count() -> int:
    env = os.environ.get("NCOFDM_SYNC_THREADS")
    if env:
        return max(1, int(env))
    return max(1, os.cpu_count() or 1)


def _run_chunk(args) -> list[TrialRecord]:
    s, trials, algorithms, sweep = args
    out: list[TrialRecord] = []
    for t in trials:
        out.extend(run_trial(s, t, algorithms, sweep))
    return out


def run_scenario(
    s: Scenario,
    algorithms: Sequence[AlgorithmSpec | str],
    sweep: Sequence[tuple[float, float]],
    workers: int | None = None,
) -> MetricsReport:
    algs = [standard_algorithms()[a] if isinstance(a, str) else a for a in algorithms]
    sweep = [(float(snr), float(sir)) for snr, sir in sweep]
    workers = worker_count() if workers is None else workers
    records: list[TrialRecord] = []
    if sweep and algs and s.trials:
        if workers <= 1:
            records = _run_chunk((s, range(s.trials), algs, sweep))
        else:
            step = max(1, math.ceil(s.trials / (4 * workers)))
            chunks = [(s, range(a, min(a + step, s.trials)), algs, sweep) for a in range(0, s.trials, step)]
            with ProcessPoolExecutor(workers) as pool:
                for part in pool.map(_run_chunk, chunks):
                    records.extend(part)
    by_cell: dict[tuple, list[TrialRecord]] = {}
    for r in records:
        by_cell.setdefault((r.algorithm, r.snr_db, r.sir_db), []).append(r)
    cells = [
        summarize(s.name, alg.name, snr_db, sir_db, by_cell.get((alg.name, snr_db, sir_db), []))
        for snr_db, sir_db in sweep
        for alg in algs
    ]
    return MetricsReport(s.name, cells, records)


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    if v is None:
        return ""
    if isinstance(v, dict):
        return ";".join(f"{k}={_fmt(v[k])}" for k in sorted(v))
    return str(v)


def metrics_csv(report: MetricsReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(METRICS_COLUMNS)
    for c in report.cells:
        w.writerow([_fmt(getattr(c, col)) for col in METRICS_COLUMNS])
    return buf.getvalue()


def trials_csv(report: MetricsReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRIAL_COLUMNS)
    for r in sorted(report.records, key=lambda r: (r.snr_db, r.sir_db, r.algorithm, r.trial_id)):
        w.writerow([_fmt(getattr(r, col)) for col in TRIAL_COLUMNS])
    return buf.getvalue()


def emit_report(report: MetricsReport, path: str | Path) -> tuple[Path, Path]:
    """Write ``metrics.csv`` and ``trials.csv.gz`` under ``path``; output is byte-stable."""
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    metrics_path = out / "metrics.csv"
    trials_path = out / "trials.csv.gz"
    metrics_path.write_text(metrics_csv(report), encoding="utf-8")
    with open(trials_path, "wb") as fh:
        # fixed mtime and empty name keep the gzip header reproducible
        with gzip.GzipFile(filename="", mode="wb", fileobj=fh, mtime=0) as gz:
            gz.write(trials_csv(report).encode("utf-8"))
    return metrics_path, trials_path
