"""test1: error and conditioning sweep over meshsize and weight, both stabilised variants.

    python3 scripts/test1_sweep.py --out results/test1
"""
import argparse
from pathlib import Path

from _plot import loglog
from dfnflow.analysis import eoc_lsq
from dfnflow.experiments import TEST1_DELTAS, TEST1_WEIGHTS, RunConfig, run


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--out", default="results/test1")
    p.add_argument("--t", type=float, default=0.0)
    p.add_argument("--no-cond", action="store_true")
    args = p.parse_args()
    cfg = RunConfig(test="test1", variants=("natural", "meshdep"), deltas=TEST1_DELTAS, weights=TEST1_WEIGHTS,
                    t=args.t, out=args.out, compute_cond=not args.no_cond)
    rep = run(cfg, progress=lambda r: print(f"{r.variant:8s} delta={r.delta:<6g} w={r.weight:<6g} {r.status} "
                                            f"L2={r.errL2:.3e} H1={r.errH1:.3e} cond={r.cond:.3e}"))
    out = Path(args.out)
    for field in ("errL2", "errH1", "cond"):
        loglog(rep.rows, field, f"test1 {field}", out / f"test1_{field}.png")
    for variant in cfg.variants:
        for w in cfg.weights:
            rows = sorted((r for r in rep.rows if r.variant == variant and r.weight == w and r.status == "ok"),
                          key=lambda r: -r.delta)
            if len(rows) >= 3:
                d = [r.delta for r in rows[-3:]]
                print(f"{variant:8s} w={w:<6g} rate H1 {eoc_lsq([r.errH1 for r in rows[-3:]], d):.2f} "
                      f"L2 {eoc_lsq([r.errL2 for r in rows[-3:]], d):.2f}")
    return 0 if rep.all_ok else 2


if __name__ == "__main__":
    raise SystemExit(main())
