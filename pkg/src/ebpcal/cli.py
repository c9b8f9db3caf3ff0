"""Command-line front end: ``ebpcal {run,montecarlo,sndr-sweep,gradient-check}``.

Every subcommand writes ``config.json`` (the resolved scenario) into the
output directory next to its CSV artifacts. Artifacts depend only on the
scenario and seed, so repeated runs are byte-identical.

Trial seeds for Monte Carlo sweeps are derived from the master seed by
``SeedSequence([master, trial]).generate_state(1)[0]``; both arms of a
trial (with and without calibration) use the same trial seed and hence
the same impairment draw, data and noise.
"""
from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import metrics, oracle
from .compensation import dump_state
from .config import ConfigError, ScenarioConfig, config_echo, from_dict, load_config, parse_override
from .ebp_engine import Calibrator, sine_capture
from .rx_dsp import DivergenceError

EXIT_CONFIG = 2
EXIT_DIVERGED = 3
EXIT_FAILED = 1

TRACE_COLUMNS = ["block", "iteration", "adapted", "bit_errors", "bits", "ber", "ber_ma", "mse",
                 "gamma_norm", "dc_gains", "offsets", "codes"]


def trial_seed(master: int, trial: int) -> int:
    return int(np.random.SeedSequence([master, trial]).generate_state(1)[0])


def _resolve(args) -> ScenarioConfig:
    cfg = load_config(args.config) if args.config else ScenarioConfig()
    data = cfg.to_dict()
    for text in args.set or []:
        sec, key, value = parse_override(text)
        if sec not in data:
            raise ConfigError(f"unknown section '{sec}'", sec)
        if key not in data[sec]:
            raise ConfigError(f"unknown key '{sec}.{key}'", f"{sec}.{key}")
        data[sec][key] = value
    for flag, key in (("seed", "seed"), ("trials", "trials"), ("mode", "mode"), ("out", "out"), ("jobs", "jobs")):
        value = getattr(args, flag, None)
        if value is not None:
            data["run"][key] = value
    return from_dict(data)


def _prepare_out(cfg: ScenarioConfig) -> Path:
    out = Path(cfg.run.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(config_echo(cfg))
    return out


def trace_rows(trace) -> list[dict]:
    rows = []
    for r in trace:
        d = asdict(r)
        d["ber"] = r.ber
        d["adapted"] = int(r.adapted)
        rows.append(d)
    return rows


def cmd_run(cfg: ScenarioConfig) -> int:
    out = _prepare_out(cfg)
    cal = Calibrator(cfg)
    cal.imp.save(out / "impairments.json")
    cal.source.channel.to_file(out / "channel.json")
    res = cal.run()
    metrics.write_rows(out / "trace.csv", trace_rows(res.trace), TRACE_COLUMNS)
    dump_state(out / "state.json", res.ce if cfg.run.mode == "digital" else None,
               res.offsets if cfg.run.mode == "digital" else None, res.actuator)
    err, bits = res.final_counts(cfg.schedule.final_fraction)
    value, bound = metrics.ber_confidence(err, bits) if bits else (0.0, False)
    tail = res.trace[-max(1, int(round(len(res.trace) * cfg.schedule.final_fraction))):]
    counts, edges = metrics.histogram([r.ber for r in tail])
    row = {"mode": cfg.run.mode, "seed": cfg.run.seed, "final_ber": err / bits if bits else 0.0,
           "ber_report": value, "ber_is_upper_bound": int(bound), "bit_errors": err, "bits": bits,
           "final_mse": res.trace[-1].mse, "actuator_saturated": int(res.saturated)}
    metrics.write_rows(out / "metrics.csv", [row])
    metrics.write_rows(out / "histogram.csv", histogram_rows(edges, {"blocks": counts}))
    print(f"final BER {row['final_ber']:.3e} ({err} errors / {bits} bits), MSE {row['final_mse']:.3e}")
    return 0


def histogram_rows(edges, columns: dict) -> list[dict]:
    return [{"bin_lo": float(edges[i]), "bin_hi": float(edges[i + 1]),
             **{k: int(v[i]) for k, v in columns.items()}} for i in range(len(edges) - 1)]


def _run_arm(cfg: ScenarioConfig, seed: int, mode: str):
    arm = cfg.replace(run={"mode": mode, "seed": seed})
    try:
        res = Calibrator(arm).run()
    except DivergenceError as exc:
        return float("nan"), f"diverged: {exc}"
    return res.final_ber(cfg.schedule.final_fraction), "ok"


def _trial(payload) -> dict:
    cfg_dict, master, t = payload
    cfg = from_dict(cfg_dict)
    seed = trial_seed(master, t)
    ber_without, s0 = _run_arm(cfg, seed, "none")
    ber_with, s1 = _run_arm(cfg, seed, cfg.run.mode)
    status = "ok" if s0 == s1 == "ok" else "; ".join(s for s in (s0, s1) if s != "ok")
    return {"trial": t, "seed": seed, "ber_without": ber_without, "ber_with": ber_with, "status": status}


def montecarlo(cfg: ScenarioConfig, trials: int | None = None, jobs: int | None = None) -> list[dict]:
    """Paired with/without-calibration trials, ordered by trial index."""
    trials = cfg.run.trials if trials is None else trials
    jobs = cfg.run.jobs if jobs is None else jobs
    payload = [(cfg.to_dict(), cfg.run.seed, t) for t in range(trials)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_trial, payload))
    return [_trial(p) for p in payload]


def cmd_montecarlo(cfg: ScenarioConfig) -> int:
    out = _prepare_out(cfg)
    rows = montecarlo(cfg)
    metrics.write_rows(out / "metrics.csv", rows, ["trial", "seed", "ber_without", "ber_with", "status"])
    ok = [r for r in rows if r["status"] == "ok"]
    edges = metrics.log_bins()
    cols = {}
    for arm in ("ber_without", "ber_with"):
        values = [r[arm] for r in ok]
        cols[arm] = metrics.histogram(values, edges)[0] if values else np.zeros(len(edges) - 1, int)
    metrics.write_rows(out / "histogram.csv", histogram_rows(edges, cols))
    if ok:
        med0 = float(np.median([r["ber_without"] for r in ok]))
        med1 = float(np.median([r["ber_with"] for r in ok]))
        print(f"{len(ok)}/{len(rows)} trials ok; median BER without {med0:.3e}, with {med1:.3e}")
    failed = len(rows) - len(ok)
    if failed:
        print(f"{failed} trial(s) failed; see metrics.csv", file=sys.stderr)
    return 0 if ok else EXIT_FAILED


def sweep_bins(n_fft: int, count: int = 12) -> list[int]:
    """Odd (hence coherent and coprime with a power-of-two FFT) bins across Nyquist."""
    bins = np.linspace(0.02, 0.47, count) * n_fft
    return [int(b) | 1 for b in bins]


def cmd_sndr_sweep(cfg: ScenarioConfig, n_fft: int = 8192) -> int:
    out = _prepare_out(cfg)
    res = Calibrator(cfg).run() if cfg.run.mode != "none" else None
    rows = []
    for b in sweep_bins(n_fft):
        before = metrics.sndr_sfdr(sine_capture(cfg, None, b, n_fft, cfg.run.sine_dbfs), n_fft, b, cfg.afe.full_scale)
        row = {"bin": b, "freq_hz": b / n_fft * cfg.sample_rate,
               "sndr_before": before.sndr_dbfs, "sfdr_before": before.sfdr_dbfs}
        if res is not None:
            after = metrics.sndr_sfdr(sine_capture(cfg, res, b, n_fft, cfg.run.sine_dbfs), n_fft, b, cfg.afe.full_scale)
            row.update(sndr_after=after.sndr_dbfs, sfdr_after=after.sfdr_dbfs)
        rows.append(row)
    metrics.write_rows(out / "metrics.csv", rows)
    if res is not None:
        metrics.write_rows(out / "trace.csv", trace_rows(res.trace), TRACE_COLUMNS)
    for r in rows:
        after = f" -> {r['sndr_after']:.1f}" if "sndr_after" in r else ""
        print(f"{r['freq_hz'] / 1e9:7.2f} GHz  SNDR {r['sndr_before']:.1f}{after} dBFS")
    return 0


def cmd_gradient_check(cfg: ScenarioConfig) -> int:
    out = _prepare_out(cfg)
    trials = cfg.run.trials if cfg.run.trials > 1 else 100
    chk = oracle.check_gradients(trials, seed=cfg.run.seed)
    row = {"instances": chk.instances, "coefficients": chk.checked, "failures": chk.failures,
           "worst_relative_error": chk.worst_relative_error, "passed": int(chk.passed)}
    metrics.write_rows(out / "metrics.csv", [row])
    print(f"{'PASS' if chk.passed else 'FAIL'}: {chk.instances} instances, {chk.checked} coefficients, "
          f"worst relative error {chk.worst_relative_error:.2e}")
    return 0 if chk.passed else EXIT_FAILED


COMMANDS = {"run": cmd_run, "montecarlo": cmd_montecarlo, "sndr-sweep": cmd_sndr_sweep,
            "gradient-check": cmd_gradient_check}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ebpcal", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", metavar="PATH", help="TOML scenario file")
        s.add_argument("--seed", type=int, help="master seed (run.seed)")
        s.add_argument("--trials", type=int, help="trial count (run.trials)")
        s.add_argument("--mode", choices=("digital", "mixed"), help="calibration variant (run.mode)")
        s.add_argument("--out", metavar="DIR", help="output directory (run.out)")
        s.add_argument("--jobs", type=int, metavar="N", help="worker processes (run.jobs)")
        s.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", help="override any config key")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _resolve(args)
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
