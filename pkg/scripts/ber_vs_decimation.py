"""BER convergence traces for several block-decimation factors at equal run duration.

Writes one trace CSV per D_B plus a summary with 95% confidence intervals.
"""
import argparse
from pathlib import Path

from scipy.stats import beta

from ebpcal import metrics
from ebpcal.cli import TRACE_COLUMNS, trace_rows
from ebpcal.config import load_config
from ebpcal.ebp_engine import Calibrator


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--config", default="configs/table1_desk.cfg")
    p.add_argument("--factors", type=int, nargs="+", default=[1, 4, 16])
    p.add_argument("--blocks", type=int, default=3840, help="post-training blocks per run")
    p.add_argument("--out", default="results/decimation")
    a = p.parse_args()
    cfg = load_config(a.config)
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    summary = []
    for d in a.factors:
        res = Calibrator(cfg.replace(schedule={"decimation": d, "n_iterations": a.blocks // d})).run()
        metrics.write_rows(out / f"trace_db{d}.csv", trace_rows(res.trace), TRACE_COLUMNS)
        tail = res.trace[-cfg.schedule.ma_window:]
        err, bits = sum(r.bit_errors for r in tail), sum(r.bits for r in tail)
        lo = beta.ppf(0.025, err, bits - err + 1) if err else 0.0
        hi = beta.ppf(0.975, err + 1, bits - err)
        summary.append({"decimation": d, "ber_ma": err / bits, "ci_lo": float(lo), "ci_hi": float(hi)})
        print(f"D_B={d:3d}  final MA BER {err / bits:.3e}  95% CI [{lo:.3e}, {hi:.3e}]", flush=True)
    metrics.write_rows(out / "summary.csv", summary)


if __name__ == "__main__":
    main()
