"""Command line entry point ``dzo``.

Exit codes: 0 success, 1 validation failure, 2 I/O failure.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import consensus, harness, kernel, topology

EXIT_OK, EXIT_INVALID, EXIT_IO = 0, 1, 2


def _fmt_coeffs(coeffs):
    return "[" + ", ".join(str(int(c)) if float(c).is_integer() else repr(float(c)) for c in coeffs) + "]"


def cmd_topology(args):
    if args.n == 1 or args.kind == "complete_mixing":
        cm = consensus.complete_mixing(args.n)
    else:
        g = topology.make_graph(args.kind, args.n, p=args.p, seed=args.seed)
        cm = consensus.metropolis_weights(g, gamma=args.gamma)
    rep = consensus.validate(cm)
    print(f"rho={rep.rho:.12g}")
    for name, c in rep.checks.items():
        print(f"  {name}: {'ok' if c['passed'] else 'FAIL'}")
    print(f"mixing assumptions: {'PASS' if rep.passed else 'FAIL'}")
    if args.out:
        with open(args.out, "w", newline="\n") as fh:
            fh.write(cm.to_csv())
    return EXIT_OK if rep.passed else EXIT_INVALID


def cmd_kernel(args):
    k = kernel.legendre_kernel(args.beta)
    res = kernel.moment_residuals(k)
    print(f"coefficients {_fmt_coeffs(k.coeffs)}")
    print("moment residuals " + " ".join(f"{r:.3e}" for r in res))
    print(f"kappa={k.kappa:.12g} kappa_beta={k.kappa_beta():.12g}")
    ok = kernel.check_kernel(k)
    print("kernel check: " + ("PASS" if ok else "FAIL"))
    return EXIT_OK if ok else EXIT_INVALID


def cmd_run(args):
    cfg = harness.RunConfig.load(args.config)
    out = args.out or cfg.output
    if out is None:
        raise harness.ConfigError("no output directory: pass --out or set 'output'")
    res = harness.execute(cfg, args.workers)
    harness.write_run(res, out)
    print(json.dumps(res.summary(), sort_keys=True))
    return EXIT_OK


def cmd_compare(args):
    cmp = harness.compare(args.d, trials=args.trials, T=args.T, seed=args.seed,
                          baseline=args.baseline, density=args.density,
                          workers=args.workers, out_dir=args.out)
    for m, e in cmp.final_errors().items():
        print(f"{m}: mean final error {e:.6g}")
    print(f"ratio {args.baseline}/kernel_2d = {cmp.ratio(args.baseline):.4g}")
    return EXIT_OK


def cmd_sweep(args):
    cfg = harness.RunConfig.load(args.config)
    rows = harness.sweep(cfg, args.over, args.values, args.out, args.workers)
    for r in rows:
        print(",".join(map(str, r)))
    return EXIT_OK


def cmd_slopes(args):
    window = None if args.lo is None else (args.lo, args.hi if args.hi is not None else float("inf"))
    res = harness.slope_from_csv(args.csv, window=window, min_points=args.min_points)
    print(f"slope={res['slope']:.4f} stderr={res['stderr']:.4f} points={res['points']}")
    return EXIT_OK


def build_parser():
    ap = argparse.ArgumentParser(prog="dzo", description="Distributed zero-order optimisation simulator")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("topology", help="build a Metropolis mixing matrix and validate it")
    p.add_argument("--kind", required=True, choices=topology.KINDS + ("complete_mixing",))
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--p", type=float, default=None, help="edge probability (erdos_renyi)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", help="write W as CSV")
    p.set_defaults(func=cmd_topology)

    p = sub.add_parser("kernel", help="build the Legendre kernel for a smoothness order")
    p.add_argument("--beta", type=float, required=True)
    p.set_defaults(func=cmd_kernel)

    p = sub.add_parser("run", help="execute a JSON run configuration")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", help="kernel_2d vs a two-point method at equal query budget")
    p.add_argument("--d", type=int, default=25)
    p.add_argument("--trials", type=int, default=40)
    p.add_argument("--T", type=int, default=200_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--baseline", choices=("two_point_kernel", "two_point"), default="two_point_kernel")
    p.add_argument("--density", type=float, default=0.1)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--out")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("sweep", help="repeat a configuration over d, n or topology")
    p.add_argument("--config", required=True)
    p.add_argument("--over", required=True, choices=harness.SWEEP_AXES)
    p.add_argument("--values", required=True, nargs="+")
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("slopes", help="fit a log-log rate exponent to an aggregate CSV")
    p.add_argument("csv")
    p.add_argument("--lo", type=float, default=None)
    p.add_argument("--hi", type=float, default=None)
    p.add_argument("--min-points", type=int, default=10)
    p.set_defaults(func=cmd_slopes)
    return ap


def main(argv=None):
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        # argparse exits 2 on usage errors and 0 on --help
        return int(e.code or 0) and EXIT_INVALID
    try:
        return args.func(args)
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, RuntimeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
