"""Command line entry point: ``permuton-lab <subcommand> [flags]``.

Exit codes: 0 success, 2 usage error (argparse names the flag), 1 runtime
failure with ``{"error": ..., "message": ...}`` on standard error.

The primary output goes to ``--out`` (a file, or a directory for the
``mc-*`` campaigns) or to standard output.  A manifest with the resolved
flags, seed and wall time is written next to ``--out`` as
``<out>.manifest.json`` or, without ``--out``, to standard error.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from pathlib import Path

from . import __version__
from . import conditioned as C
from . import experiments as E
from . import lis as L
from . import sequences as Sq
from . import structures as St
from .rng import make_rng
from .tree import Overflow, sample_uniform_signed_tree

SUBCOMMANDS = ("alpha", "qtable", "sample-tree", "sample-perm", "sample-graph", "sample-tk",
               "chain", "couple", "mc-dist", "mc-traj", "mc-lln", "mc-q", "separable",
               "validate")


# -- argument types ---------------------------------------------------------

def probability(text: str) -> float:
    try:
        x = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}")
    if not 0.0 < x < 1.0:
        raise argparse.ArgumentTypeError(f"{text} is outside the open interval (0, 1)")
    return x


def _int_at_least(lo: int):
    def conv(text: str) -> int:
        try:
            x = int(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
        if x < lo:
            raise argparse.ArgumentTypeError(f"{text} is below the minimum {lo}")
        return x
    conv.__name__ = f"integer>={lo}"
    return conv


def seed_type(text: str) -> int:
    try:
        x = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    if not 0 <= x < 2 ** 64:
        raise argparse.ArgumentTypeError(f"{text} is not a 64-bit unsigned seed")
    return x


def positive_float(text: str) -> float:
    try:
        x = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}")
    if not x > 0 or not math.isfinite(x):
        raise argparse.ArgumentTypeError(f"{text} must be positive")
    return x


# -- parser -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="permuton-lab",
                                     description="Samplers, solvers and Monte Carlo campaigns "
                                                 "for LIS of Brownian separable permutons.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, metavar="SUBCOMMAND")

    def cmd(name, help_, **flags):
        sp = sub.add_parser(name, help=help_, description=help_)
        sp.add_argument("--p", type=probability, default=0.5, help="sign parameter (default 0.5)")
        sp.add_argument("--seed", type=seed_type, default=1, help="master seed (default 1)")
        sp.add_argument("--format", choices=("csv", "json"), default="json")
        sp.add_argument("--out", default=None, help="output path (default: standard output)")
        sp.add_argument("--precision", type=_int_at_least(64), default=Sq.DEFAULT_PRECISION,
                        help="bits for the q table (default 192)")
        for flag, kw in flags.items():
            sp.add_argument("--" + flag.replace("_", "-"), **kw)
        return sp

    n_flag = dict(type=_int_at_least(1), default=1000, help="number of leaves")
    k_flag = dict(type=_int_at_least(1), default=100, help="LIS value k")
    samples = dict(type=_int_at_least(1), default=100, help="number of replicas")
    cap = dict(type=_int_at_least(1), default=None, help="leaf cap (default per command)")
    threads = dict(type=_int_at_least(1), default=None,
                   help="worker threads (default: $PERMUTON_LAB_THREADS or all cores)")

    cmd("alpha", "solve the exponent equation for alpha(p)",
        method=dict(choices=("gamma", "product", "integral"), default="gamma"),
        tol=dict(type=positive_float, default=1e-12))
    cmd("qtable", "exact table of q(k) and Q(k)", k=dict(type=_int_at_least(1), default=100,
                                                         help="table size K"))
    cmd("sample-tree", "uniform signed tree T_n(p)", n=n_flag)
    cmd("sample-perm", "permutation sigma_n(p) of a uniform signed tree", n=n_flag)
    cmd("sample-graph", "cograph G_n(p) of a uniform signed tree", n=n_flag)
    cmd("sample-tk", "BGW tree conditioned on LIS = k (exact sampler)", k=k_flag, cap=cap)
    cmd("chain", "spine chain towards a uniform leaf of the leftmost maximal subtree of T^k",
        k=k_flag, cap=cap)
    cmd("couple", "black-golden coupling of the decreasing chains from k and k'",
        k=dict(type=_int_at_least(1), default=1000), kprime=dict(type=_int_at_least(1), default=1000),
        samples=dict(type=_int_at_least(1), default=1, help="number of coupled runs"))
    cmd("mc-dist", "distribution of LIS(T_n)/n^alpha", n=dict(n_flag, default=10 ** 5),
        samples=samples, threads=threads, bins=dict(type=_int_at_least(1), default=60))
    cmd("mc-traj", "Remy trajectories X_n/n^alpha at power-of-two checkpoints",
        n=dict(n_flag, default=10 ** 5), samples=dict(samples, default=20), threads=threads)
    cmd("mc-lln", "#L^max_cap(T^k)/k over exact conditioned samples", k=dict(k_flag, default=1000),
        samples=dict(samples, default=300), cap=cap, threads=threads)
    cmd("mc-q", "empirical q(k) from capped BGW samples", samples=dict(samples, default=10 ** 6),
        k=dict(type=_int_at_least(1), default=10, help="largest k tabulated"), cap=cap,
        threads=threads)
    cmd("separable", "uniform separable permutations, or calibration of c with --calibrate",
        n=dict(n_flag, default=10), samples=dict(samples, default=1), threads=threads,
        calibrate=dict(action="store_true", help="calibrate the constant c (p = 1/2)"),
        bins=dict(type=_int_at_least(1), default=60))
    cmd("validate", "brute-force equivalence suites",
        suite=dict(choices=("oracle", "sequences", "all"), default="oracle"),
        samples=dict(type=_int_at_least(1), default=2000))
    return parser


# -- output helpers -----------------------------------------------------------

def _emit(args, text: str, manifest: dict) -> None:
    if args.out:
        Path(args.out).write_text(text)
        Path(args.out + ".manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
        print(json.dumps(manifest))
    else:
        sys.stdout.write(text)
        sys.stderr.write(json.dumps({"manifest": manifest}) + "\n")


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, default=E._jsonable) + "\n"


def _csv(header, rows) -> str:
    lines = [",".join(header)]
    lines += [",".join(str(x) for x in r) for r in rows]
    return "\n".join(lines) + "\n"


# -- subcommands ---------------------------------------------------------------

def _alpha(args):
    sol = Sq.solve_alpha(args.p, args.method, args.tol)
    d = sol.to_dict()
    if args.format == "csv":
        return _csv(d.keys(), [d.values()])
    return _dump(d)


def _qtable(args):
    table = Sq.build_q_table(args.p, args.k, args.precision)
    if args.format == "csv":
        return table.to_csv()
    return _dump({"p": table.p, "K": table.K, "precision_bits": table.precision_bits,
                  "rows": [{"k": k, "q": a, "Q": b} for k, a, b in table.decimal_rows()]})


def _tree_payload(tree):
    ann = L.annotate(tree)
    return {"tree": tree.to_string(), "n": tree.leaf_count, "lis": ann.value,
            "cap_count": ann.root_cap}


def _sample_tree(args):
    tree = sample_uniform_signed_tree(args.n, args.p, args.seed)
    if args.format == "csv":
        t = tree.to_json()
        rows = [(i, d["parent"], d["left"], d["right"], d["sign"]) for i, d in enumerate(t["nodes"])]
        return _csv(("node", "parent", "left", "right", "sign"), rows)
    payload = _tree_payload(tree)
    payload["json"] = tree.to_json()
    return _dump(payload)


def _sample_perm(args):
    tree = sample_uniform_signed_tree(args.n, args.p, args.seed)
    perm = St.tree_to_permutation(tree)
    if args.format == "csv":
        return St.format_permutation(perm) + "\n"
    return _dump({"n": args.n, "permutation": perm, "lis": St.permutation_lis(perm)})


def _sample_graph(args):
    tree = sample_uniform_signed_tree(args.n, args.p, args.seed)
    adj = St.tree_to_graph(tree)
    if args.format == "csv":
        return St.format_edges_csv(adj)
    return _dump({"n": args.n, "edges": [[u + 1, v + 1] for u, v in St.graph_edges(adj)]})


def _conditioned(args):
    table = Sq.q_table(args.p, max(args.k, 2), args.precision)
    return C.sample_conditioned_tree(args.k, table, args.seed, args.cap)


def _sample_tk(args):
    tree = _conditioned(args)
    payload = _tree_payload(tree)
    payload = {"k": args.k, "size": tree.leaf_count, "lis": payload["lis"],
               "cap_count": payload["cap_count"], "tree": payload["tree"]}
    if args.format == "csv":
        return _csv(payload.keys(), [payload.values()])
    return _dump(payload)


def _chain(args):
    tree = _conditioned(args)
    ann = L.annotate(tree)
    lmax = L.leftmost_max_subtree(tree, ann)
    leaf = int(lmax[make_rng(args.seed, 1).integers(0, lmax.shape[0])])
    path = L.spine_chain(tree, leaf, ann)
    if args.format == "csv":
        return path.to_csv()
    return _dump(path.summary())


def _couple(args):
    table = Sq.q_table(args.p, max(args.k, args.kprime, 2), args.precision)
    scales = C.good_scales(table.K, table)
    runs = [C.black_golden_coupling(args.k, args.kprime, table, scales, make_rng(args.seed, i))
            for i in range(args.samples)]
    if args.format == "csv":
        d = [r.to_dict() for r in runs]
        return _csv(d[0].keys(), [x.values() for x in d])
    if args.samples == 1:
        return _dump(runs[0].to_dict())
    return _dump([r.to_dict() for r in runs])


def _report_output(args, rep: E.Report):
    """Primary output of a campaign; wall time lives in the manifest only."""
    body = rep.manifest()
    args._wall_time = body.pop("wall_time")
    if args.out:
        d = Path(args.out)
        d.mkdir(parents=True, exist_ok=True)
        (d / rep.filename("json")).write_text(_dump(body))
        (d / rep.filename("csv")).write_text(rep.to_csv())
        args._files = [rep.filename("json"), rep.filename("csv")]
        return None
    return rep.to_csv() if args.format == "csv" else _dump(body)


def _spec(args, kind, n, **kw):
    return E.ExperimentSpec(kind=kind, p=args.p, n=n, samples=args.samples, seed=args.seed,
                            out=args.out, format=args.format,
                            threads=getattr(args, "threads", None), **kw)


def _mc_dist(args):
    return _report_output(args, E.run_lis_distribution(_spec(args, "lis-distribution", args.n,
                                                              bins=args.bins)))


def _mc_traj(args):
    return _report_output(args, E.run_trajectory(_spec(args, "trajectory", args.n)))


def _mc_lln(args):
    return _report_output(args, E.run_lln_cap(_spec(args, "lln-cap", args.k, size_cap=args.cap)))


def _mc_q(args):
    spec = _spec(args, "empirical-q", 1, size_cap=args.cap, k_max=args.k)
    return _report_output(args, E.run_empirical_q(spec))


def _separable(args):
    if args.calibrate:
        if args.p != 0.5:
            raise ValueError("calibration runs at p = 0.5")
        return _report_output(args, E.calibrate_separable_constant(
            _spec(args, "calibrate-c", args.n, bins=args.bins)))
    from .rng import stream_seed
    perms = [St.sample_uniform_separable(args.n, stream_seed(args.seed, i))
             for i in range(args.samples)]
    if args.format == "csv":
        return "".join(St.format_permutation(p) + "\n" for p in perms)
    return _dump({"n": args.n, "permutations": perms})


def _validate(args):
    from .validation import run_suite
    res = run_suite(args.suite, args.samples, args.seed)
    args._passed = res["passed"]
    return _dump(res)


HANDLERS = {
    "alpha": _alpha, "qtable": _qtable, "sample-tree": _sample_tree,
    "sample-perm": _sample_perm, "sample-graph": _sample_graph, "sample-tk": _sample_tk,
    "chain": _chain, "couple": _couple, "mc-dist": _mc_dist, "mc-traj": _mc_traj,
    "mc-lln": _mc_lln, "mc-q": _mc_q, "separable": _separable, "validate": _validate,
}

RUNTIME_ERRORS = (Sq.PrecisionFailure, Overflow, C.Exhausted, ArithmeticError, ValueError,
                  OSError, MemoryError)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # exits with status 2 on usage errors
    flags = {k: v for k, v in vars(args).items() if not k.startswith("_")}
    t0 = time.perf_counter()
    try:
        text = HANDLERS[args.command](args)
    except RUNTIME_ERRORS as exc:
        sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc),
                                     "command": args.command}) + "\n")
        return 1
    manifest = {"command": args.command, "flags": flags, "seed": args.seed,
                "version": __version__,
                "wall_time": getattr(args, "_wall_time", time.perf_counter() - t0),
                "threads_env": os.environ.get(E.THREADS_ENV)}
    if hasattr(args, "_files"):
        manifest["files"] = args._files
        Path(args.out, "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
        print(json.dumps(manifest))
    else:
        _emit(args, text, manifest)
    if getattr(args, "_passed", True) is False:
        sys.stderr.write(json.dumps({"error": "ValidationFailure",
                                     "message": "at least one oracle mismatch",
                                     "command": args.command}) + "\n")
        return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
