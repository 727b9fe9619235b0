"""Command line entry point.

Three subcommands, one run per invocation, trace CSV as the output:

* ``conecg sdp``: column generation on an SDP, from a file (--input,
  format: 'm n', C, then b_i/A_i blocks) or the built-in generator
  ``--gen spectra:N``.
* ``conecg stableset``: stable-set upper bound on a DIMACS graph
  (--input) or ``--gen er:N:P``; prints a final summary line
  ``graph,n,m,mode,pricing,final_bound,iters,converged``.
* ``conecg polymin``: sphere lower bound for an even form read from
  the polynomial text format (--input).

The CSV goes to --out when given, else to stdout.  All randomness runs
through --seed, so reruns with equal flags reproduce the trace (timing
column aside).  The CONECG_BACKEND environment variable forces a conic
backend ("highs" or "clarabel") for every solve.
"""

from __future__ import annotations

import argparse
import sys

from . import __version__, cgengine, conic, polynomials, polyopt, stableset

_TRIPLES_DEFAULT_T2 = {"sdp": 5000, "polymin": 5000, "stableset": 500}


def _build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(
        prog="conecg",
        description="column-generation bounds over structured psd inner approximations")
    top.add_argument("--version", action="version", version=f"conecg {__version__}")
    sub = top.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, gen_help: str | None):
        src = p.add_mutually_exclusive_group(required=True)
        src.add_argument("--input", metavar="PATH", help="problem file to read")
        if gen_help is not None:
            src.add_argument("--gen", metavar="SPEC", help=gen_help)
        p.add_argument("--mode", choices=("lp", "socp"), default="lp",
                       help="master family: rank-one cone (lp) or pair blocks (socp)")
        p.add_argument("--pricing", choices=("eig", "triples"), default="eig",
                       help="pricing rule for new atoms")
        p.add_argument("--cuts", type=int, default=1, metavar="K",
                       help="atoms (or pairs) added per eig pricing round")
        p.add_argument("--t1", type=int, default=300000, metavar="N",
                       help="triples pricing: max violations collected per round")
        p.add_argument("--t2", type=int, default=None, metavar="N",
                       help="triples pricing: max atoms added per round "
                            "(default 5000; 500 for stableset)")
        p.add_argument("--max-iters", type=int, default=20, metavar="N",
                       help="pricing rounds before stopping")
        p.add_argument("--time-limit", type=float, default=None, metavar="SEC",
                       help="wall-clock budget, checked once per master solve")
        p.add_argument("--seed", type=int, default=0,
                       help="seed for --gen instances")
        p.add_argument("--out", metavar="PATH", default=None,
                       help="write the trace CSV here instead of stdout")

    common(sub.add_parser("sdp", help="column generation on max b'y, C - sum y_i A_i psd"),
           "generated instance, e.g. spectra:10 (seeded random spectrahedron)")
    common(sub.add_parser("stableset", help="stability number upper bound"),
           "generated graph, e.g. er:10:0.5 (Erdos-Renyi, seeded)")
    common(sub.add_parser("polymin", help="lower bound for an even form on the sphere"),
           None)
    return top


def _config(args) -> cgengine.CgConfig:
    t2 = args.t2 if args.t2 is not None else _TRIPLES_DEFAULT_T2[args.command]
    return cgengine.CgConfig(
        mode=args.mode, pricing=args.pricing, cuts_per_iter=args.cuts,
        t1=args.t1, t2=t2, max_iters=args.max_iters,
        time_limit_s=args.time_limit).validated()


def _emit(trace: cgengine.CgTrace, args, meta: dict) -> None:
    meta = {"tool": f"conecg {__version__}", "seed": args.seed, **meta}
    if args.out:
        trace.write_csv(args.out, meta)
    else:
        trace.write_csv(sys.stdout, meta)


def _run_sdp(args) -> int:
    if args.input:
        prob = cgengine.load_sdp(args.input)
        label = args.input
    else:
        kind, _, rest = args.gen.partition(":")
        if kind != "spectra" or not rest:
            raise ValueError(f"unknown sdp generator {args.gen!r}; expected spectra:N")
        prob = cgengine.random_spectrahedron(int(rest), seed=args.seed)
        label = args.gen
    config = _config(args)
    trace = cgengine.run(prob, config)
    _emit(trace, args, {"instance": label})
    if args.out:
        print(f"final_bound={trace.final_bound!r} iters={trace.iterations} "
              f"converged={str(trace.converged).lower()}")
    return 0


def _run_stableset(args) -> int:
    if args.input:
        g = stableset.load_graph(args.input)
        label = args.input
    else:
        parts = args.gen.split(":")
        if len(parts) != 3 or parts[0] != "er":
            raise ValueError(f"unknown graph generator {args.gen!r}; expected er:N:P")
        g = stableset.er_graph(int(parts[1]), float(parts[2]), seed=args.seed)
        label = args.gen
    config = _config(args)
    trace = stableset.cg_stableset(g, config=config)
    _emit(trace, args, {"instance": label})
    print("graph,n,m,mode,pricing,final_bound,iters,converged")
    print(stableset.summary_line(label, g, trace, config))
    return 0


def _run_polymin(args) -> int:
    p = polynomials.load_poly(args.input)
    config = _config(args)
    trace = polyopt.cg_polymin(p, config)
    _emit(trace, args, {"instance": args.input})
    if args.out:
        print(f"final_bound={trace.final_bound!r} iters={trace.iterations} "
              f"converged={str(trace.converged).lower()}")
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    dispatch = {"sdp": _run_sdp, "stableset": _run_stableset, "polymin": _run_polymin}
    try:
        return dispatch[args.command](args)
    except (OSError, ValueError, conic.ConicError) as e:
        print(f"conecg: error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
