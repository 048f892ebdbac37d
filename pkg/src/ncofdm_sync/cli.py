"""Command line entry point: ``run``, ``predict`` and ``selftest``."""

from __future__ import annotations

import argparse
import csv
import io
import math
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import analytic
from .harness import N_CP, N_FFT, NBI_BIN, NOTCH_WBI_BINS, emit_report, make_scenario, run_scenario, standard_algorithms
from .waveform import PreambleKind

ALGORITHMS = ("luisa-sc", "luisa-simple", "luisa-yonly", "sc-baseline")
SCENARIOS = ("nogs", "gs", "dsa")

# flag -> (default, parser); config files use the same names with - or _
RUN_OPTIONS = {
    "scenario": ("nogs", str),
    "algo": ("luisa-sc,sc-baseline", str),
    "snr": ("0:2:20", str),
    "sir": ("inf", str),
    "trials": (10_000, int),
    "seed": (0, int),
    "nu_max": (20.0, float),
    "pfd": (1e-5, float),
    "gamma": (2, int),
    "out": ("results", str),
    "interference": ("nbi", str),
    "channel": ("eva", str),
    "workers": (None, int),
}


class UsageError(Exception):
    pass


def parse_values(text: str) -> list[float]:
    """``a:step:b`` (inclusive) or a comma list; ``inf`` is accepted."""
    text = text.strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise UsageError(f"range {text!r} must be start:step:stop")
        start, step, stop = (float(p) for p in parts)
        if step <= 0 or stop < start:
            raise UsageError(f"range {text!r} is empty")
        count = int(math.floor((stop - start) / step + 1e-9)) + 1
        return [round(start + i * step, 10) for i in range(count)]
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise UsageError(f"bad value list {text!r}") from exc


def read_config(path: str | Path) -> dict[str, str]:
    """Flat ``key = value`` file; ``#`` starts a comment."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.lstrip("-").replace("-", "_")
        if key not in RUN_OPTIONS:
            raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
        out[key] = value
    return out


def _glue_negative_values(argv: Sequence[str]) -> list[str]:
    # argparse reads "-10,0" as a flag; attach list values to their option
    out: list[str] = []
    it = iter(argv)
    for a in it:
        if a in ("--snr", "--sir", "--nu", "--offsets"):
            nxt = next(it, None)
            out.append(a if nxt is None else f"{a}={nxt}")
        else:
            out.append(a)
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ncofdm-sync", description="NC-OFDM preamble synchronization simulator")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="Monte Carlo sweep, writes metrics.csv and trials.csv.gz")
    run.add_argument("--config", help="key = value file; flags override it")
    run.add_argument("--scenario", choices=SCENARIOS)
    run.add_argument("--algo", action="append", help=f"one of {', '.join(ALGORITHMS)}; repeat or comma-separate")
    run.add_argument("--snr", help="SNR list in dB: start:step:stop or a,b,c")
    run.add_argument("--sir", help="SIR list in dB (inf = no interference)")
    run.add_argument("--trials", type=int)
    run.add_argument("--seed", type=int)
    run.add_argument("--nu-max", dest="nu_max", type=float, help="CFO search range in subcarriers")
    run.add_argument("--pfd", type=float, help="path false-detection probability")
    run.add_argument("--gamma", type=int, help="CFO refinement iterations")
    run.add_argument("--out", help="output directory")
    run.add_argument("--interference", choices=("none", "nbi", "wbi"))
    run.add_argument("--channel", choices=("eva", "awgn"))
    run.add_argument("--workers", type=int, help="process count (default: NCOFDM_SYNC_THREADS or all cores)")

    pr = sub.add_parser("predict", help="closed-form curves as CSV")
    pr.add_argument("--what", choices=("table1", "vi", "bounds"), required=True)
    pr.add_argument("--interference", default=f"nbi:{NBI_BIN:g}", help="nbi:BIN, wbi or uniform (vi only)")
    pr.add_argument("--scenario", choices=("nogs", "gs"), default="nogs", help="subcarrier map (vi only)")
    pr.add_argument("--kind", choices=("sc", "simple"), default="sc", help="preamble kind")
    pr.add_argument("--k", type=float, default=0.0, help="frequency offset (table1)")
    pr.add_argument("--nu", default="0", help="CFO values (table1)")
    pr.add_argument("--offsets", default=f"{-(N_FFT + N_CP)}:1:{N_FFT}", help="n - l values (table1)")
    pr.add_argument("--snr", default="0:2:30", help="SNR list in dB (bounds)")
    pr.add_argument("--out", help="output file (default: stdout)")

    sub.add_parser("selftest", help="quick invariant checks")
    return p


def _resolve_run(ns: argparse.Namespace) -> dict:
    values: dict = {k: d for k, (d, _) in RUN_OPTIONS.items()}
    if ns.config:
        for k, v in read_config(ns.config).items():
            values[k] = RUN_OPTIONS[k][1](v)
    for k in RUN_OPTIONS:
        v = getattr(ns, k, None)
        if v is not None:
            values[k] = ",".join(v) if k == "algo" else v
    algos = [a.strip() for a in str(values["algo"]).split(",") if a.strip()]
    unknown = sorted(set(algos) - set(ALGORITHMS))
    if unknown:
        raise UsageError(f"unknown algorithm(s): {', '.join(unknown)}")
    values["algo"] = list(dict.fromkeys(algos))
    if values["scenario"] not in SCENARIOS:
        raise UsageError(f"unknown scenario {values['scenario']!r}")
    if values["trials"] < 0:
        raise UsageError("--trials must be non-negative")
    return values


def cmd_run(ns: argparse.Namespace) -> int:
    v = _resolve_run(ns)
    snrs, sirs = parse_values(str(v["snr"])), parse_values(str(v["sir"]))
    if v["interference"] == "none" and any(math.isfinite(s) for s in sirs):
        raise UsageError("finite --sir needs an interferer (--interference nbi|wbi)")
    try:
        scenario = make_scenario(
            v["scenario"], v["interference"], trials=v["trials"], base_seed=v["seed"], channel_profile=v["channel"]
        )
        nu_max = None if math.isinf(v["nu_max"]) else v["nu_max"]
        algs = standard_algorithms(nu_max, v["pfd"], v["gamma"])
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    sweep = [(snr, sir) for snr in snrs for sir in sirs]
    report = run_scenario(scenario, [algs[a] for a in v["algo"]], sweep, workers=v["workers"])
    metrics, trials = emit_report(report, v["out"])
    print(f"wrote {metrics} and {trials}")
    return 0


def _interference_psd(spec: str) -> np.ndarray:
    if spec == "uniform":
        return np.ones(N_FFT)
    if spec == "wbi":
        return analytic.wbi_psd(NOTCH_WBI_BINS, 1.0, N_FFT)
    if spec.startswith("nbi:"):
        return analytic.nbi_psd(float(spec[4:]), 1.0, N_FFT)
    raise UsageError(f"unknown interference model {spec!r}")


def predict_rows(ns: argparse.Namespace) -> tuple[list[str], list[list]]:
    kind = PreambleKind.SCHMIDL_COX if ns.kind == "sc" else PreambleKind.SIMPLE
    if ns.what == "vi":
        sc_map = make_scenario(ns.scenario, "none").sc_map
        psd = analytic.preamble_psd(sc_map, kind)
        rows = analytic.vi_curve(_interference_psd(ns.interference), psd, 1.0, 1.0)
        return ["k", "vi_normalized"], [list(r) for r in rows]
    if ns.what == "bounds":
        rows = []
        for snr_db in parse_values(ns.snr):
            var, crlb = analytic.cfo_estimator_bounds(N_FFT, 10 ** (snr_db / 10))
            rows.append([snr_db, var, crlb])
        return ["snr_db", "estimator_variance", "crlb"], rows
    rows = []
    for nu in parse_values(ns.nu):
        for off in parse_values(ns.offsets):
            off = int(off)
            p = analytic.predict_path_moments(kind, off, 0, ns.k, nu, N_FFT, N_CP, 1.0)
            case = analytic.classify_case(off, kind, N_FFT)
            rows.append([kind.value, case.value, off, ns.k, nu, p.mean.real, p.mean.imag, p.variance])
    return ["kind", "case", "offset", "k", "nu", "mean_re", "mean_im", "variance"], rows


def cmd_predict(ns: argparse.Namespace) -> int:
    header, rows = predict_rows(ns)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(x) if isinstance(x, float) else x for x in row])
    if ns.out:
        Path(ns.out).write_text(buf.getvalue(), encoding="utf-8")
    else:
        sys.stdout.write(buf.getvalue())
    return 0


def cmd_selftest(ns: argparse.Namespace) -> int:
    from .selftest import run_checks

    failed = 0
    for name, ok, detail in run_checks():
        print(f"{'PASS' if ok else 'FAIL'} {name}{'' if ok else ': ' + detail}")
        failed += not ok
    return 1 if failed else 0


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        ns = parser.parse_args(_glue_negative_values(argv))
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return {"run": cmd_run, "predict": cmd_predict, "selftest": cmd_selftest}[ns.command](ns)
    except (UsageError, OSError) as exc:
        print(f"ncofdm-sync: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
