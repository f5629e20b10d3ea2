"""Command line entry point: ``dfn run ...``.

Exit status is 0 when every row solved, 2 when some rows failed and 1 on a
configuration error.
"""
from __future__ import annotations

import argparse
import sys

from .experiments import TEST1_DELTAS, TEST1_WEIGHTS, RunConfig, run


def _floats(text):
    try:
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma separated numbers, got {text!r}") from exc


def _variants(text):
    return tuple(v.strip() for v in text.split(",") if v.strip())


def build_parser():
    p = argparse.ArgumentParser(prog="dfn", description="Darcy flow on discrete fracture networks")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run a sweep over meshsizes and stabilisation weights")
    r.add_argument("--test", default="test1", choices=["test1", "test2A", "test2B", "custom"])
    r.add_argument("--variant", type=_variants, default=("natural",),
                   help="comma separated subset of none,natural,meshdep")
    r.add_argument("--deltas", type=_floats, default=TEST1_DELTAS)
    r.add_argument("--weights", type=_floats, default=TEST1_WEIGHTS)
    r.add_argument("--t", type=float, default=0.0)
    r.add_argument("--out", required=True)
    r.add_argument("--network", help="network JSON file (for --test custom)")
    r.add_argument("--reference", default="analytic", choices=["analytic", "fine"])
    r.add_argument("--ref-factor", type=float, default=4.0)
    r.add_argument("--trace-ratio", type=float, default=1.0, help="trace meshsize as a fraction of delta")
    r.add_argument("--jitter", type=float, default=0.15)
    r.add_argument("--even-cells", action="store_true", help="do not force odd cell counts on rectangles")
    r.add_argument("--no-cond", action="store_true", help="skip condition numbers")
    r.add_argument("--dump-meshes", action="store_true")
    r.add_argument("--dump-matrix", action="store_true")
    r.add_argument("--quiet", action="store_true")
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code else 0
    cfg = RunConfig(test=args.test, variants=args.variant, deltas=args.deltas, weights=args.weights, t=args.t,
                    out=args.out, network=args.network, reference=args.reference, ref_factor=args.ref_factor,
                    trace_ratio=args.trace_ratio, jitter=args.jitter, odd_cells=not args.even_cells,
                    compute_cond=not args.no_cond, dump_meshes=args.dump_meshes, dump_matrix=args.dump_matrix)
    try:
        cfg.validate()
    except ValueError as exc:
        print(f"dfn: configuration error: {exc}", file=sys.stderr)
        return 1

    def progress(row):
        if not args.quiet:
            print(f"{row.test} {row.variant:8s} delta={row.delta:<7g} weight={row.weight:<7g} "
                  f"L2={row.errL2:.3e} H1={row.errH1:.3e} cond={row.cond:.3e} {row.status}", flush=True)

    try:
        report = run(cfg, progress)
    except (ValueError, OSError) as exc:
        print(f"dfn: {exc}", file=sys.stderr)
        return 1
    return 0 if report.all_ok else 2


if __name__ == "__main__":
    sys.exit(main())
