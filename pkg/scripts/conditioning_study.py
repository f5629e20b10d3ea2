"""Condition number against the stabilisation weight on test1, plus the unstabilised scheme
on trace meshes finer than the fracture meshes.

    python3 scripts/conditioning_study.py --delta 0.1
"""
import argparse
import math

from dfnflow.experiments import TEST1_WEIGHTS, make_test1
from dfnflow.saddle import SingularSystem, assemble_system, condition_number, discretize, solve


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--delta", type=float, default=0.1)
    p.add_argument("--t", type=float, default=0.0)
    args = p.parse_args()
    prob = make_test1()
    disc = discretize(prob.network, args.delta, prob.forcing, 1.0, 0.15, True)
    print(f"test1, delta={args.delta:g}, t={args.t:g}")
    for variant in ("natural", "meshdep"):
        conds = [condition_number(assemble_system(disc, variant, w, args.t).matrix) for w in TEST1_WEIGHTS]
        best = TEST1_WEIGHTS[min(range(len(conds)), key=conds.__getitem__)]
        print(f"  {variant:8s} " + "  ".join(f"{w:g}:{c:.3e}" for w, c in zip(TEST1_WEIGHTS, conds))
              + f"  (smallest at {best:g})")
    for ratio in (1.0, 0.5, 0.2, 0.1):
        d = discretize(prob.network, args.delta, prob.forcing, ratio, 0.15, True, bands=False)
        sys = assemble_system(d, "none")
        try:
            solve(sys)
            c = condition_number(sys.matrix)
            note = ""
        except SingularSystem as exc:
            c, note = math.inf, f"  solve failed: {exc}"
        print(f"  none     trace ratio {ratio:g}: cond {c:.3e}{note}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
