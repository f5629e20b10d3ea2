"""test2A and test2B: separated against overlapping bands, errors and fluxes.

    python3 scripts/test2_sweep.py --out results/test2
"""
import argparse
from pathlib import Path

from _plot import loglog
from dfnflow.experiments import TEST1_DELTAS, TEST2_WEIGHTS, RunConfig, run


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--out", default="results/test2")
    p.add_argument("--no-cond", action="store_true")
    args = p.parse_args()
    status = 0
    reports = {}
    for which in ("A", "B"):
        out = Path(args.out) / which
        cfg = RunConfig(test=f"test2{which}", variants=("natural", "meshdep"), deltas=TEST1_DELTAS,
                        weights=TEST2_WEIGHTS, out=str(out), compute_cond=not args.no_cond)
        rep = run(cfg)
        reports[which] = {(r.variant, r.delta, r.weight): r for r in rep.rows}
        for field in ("errL2", "errH1", "cond"):
            loglog(rep.rows, field, f"test2{which} {field}", out / f"test2{which}_{field}.png")
        status = status or (0 if rep.all_ok else 2)
    print(f"{'variant':8s} {'delta':>6s} {'weight':>7s} {'L2 A':>10s} {'L2 B':>10s} {'H1 A':>10s} {'H1 B':>10s}")
    for key, a in sorted(reports["A"].items()):
        b = reports["B"].get(key)
        if b is None or a.status != "ok" or b.status != "ok":
            continue
        print(f"{key[0]:8s} {key[1]:6g} {key[2]:7g} {a.errL2:10.3e} {b.errL2:10.3e} {a.errH1:10.3e} "
              f"{b.errH1:10.3e}")
    return status


if __name__ == "__main__":
    raise SystemExit(main())
