"""Command line interface: generate, optimize, contract, bench, fit."""

import argparse
import json
import sys

from . import bench, models, schemes, tngraph
from .costs import score_tree
from .engine import CompressionConfig, contract_value, exact_value
from .hyperopt import optimize
from .trees import boundary_sweep_tree, tree_from_json, tree_to_json


def _load_config(path):
    if path.endswith(".toml"):
        try:
            import tomllib
        except ImportError as exc:
            raise SystemExit(
                "TOML configs need Python >= 3.11; use JSON instead"
            ) from exc
        with open(path, "rb") as f:
            return tomllib.load(f)
    with open(path) as f:
        return json.load(f)


def cmd_gen(args):
    tn = bench.build_instance(args.lattice, args.model, seed=args.seed)
    tngraph.save_json(tn, args.out, include_data=not args.no_data)
    print(f"wrote {len(tn)} tensors, {len(list(tn.bonds()))} bonds to {args.out}")


def _load_graph(args):
    fill = None
    if args.model is not None:
        fill = models.model_filler(args.model, seed=args.seed)
    return tngraph.load_json(args.graph, fill_model=fill)


def cmd_optimize(args):
    tn = _load_graph(args)
    fams = (
        ("greedy", "span", "agglom") if args.family == "all" else (args.family,)
    )
    sink = None
    hist_file = None
    if args.history:
        hist_file = open(args.history, "w")

        def sink(rec):
            hist_file.write(json.dumps(rec) + "\n")

    tree, score, _ = optimize(
        tn,
        args.chi,
        generator_set=fams,
        objective=args.objective,
        budget=args.budget,
        seed=args.seed,
        history_sink=sink,
    )
    if hist_file:
        hist_file.close()
    tree_to_json(tree, args.out)
    print(f"best {args.objective} = {score:g} ({tree.generator}) -> {args.out}")


def cmd_contract(args):
    tn = _load_graph(args)
    if args.scheme != "approx":
        fn = schemes.SCHEMES[args.scheme]
        sign, log_z = fn(tn, args.chi)
        cost = None
    else:
        if args.tree:
            tree = tree_from_json(args.tree)
        elif args.family == "boundary":
            tree = boundary_sweep_tree(tn)
        else:
            fams = (
                ("greedy", "span", "agglom")
                if args.family == "all"
                else (args.family,)
            )
            tree, _, _ = optimize(
                tn, args.chi, generator_set=fams, objective=args.objective,
                budget=args.budget, seed=args.seed,
            )
        cfg = CompressionConfig(
            chi=args.chi, r=args.r, compress_late=args.mode == "late"
        )
        sign, log_z = contract_value(tn, tree, cfg)
        cost = score_tree(tn, tree, cfg=cfg).to_dict()
    result = {"sign": sign, "log_z": log_z, "cost": cost, "scheme": args.scheme}
    if args.exact:
        es, el = exact_value(tn)
        result["exact_sign"], result["exact_log_z"] = es, el
    out = json.dumps(result, sort_keys=True)
    if args.out:
        with open(args.out, "w") as f:
            f.write(out + "\n")
    print(out)


def cmd_bench(args):
    config = _load_config(args.config)
    rows = bench.run_experiment(config, out_path=args.out, workers=args.workers)
    failures = sum(1 for r in rows if "error" in r)
    print(f"{len(rows)} records ({failures} failed) -> {args.out}")


def cmd_fit(args):
    samples = []
    with open(args.results) as f:
        for line in f:
            if line.strip():
                samples.append(json.loads(line))
    if args.kind == "invchi":
        pairs = [
            (r["method"]["chi"], r[args.field])
            for r in samples
            if r.get(args.field) is not None
        ]
        fit = bench.fit_inverse_chi(pairs)
        out = {
            "A": fit.a,
            "B": fit.b,
            "sigma_A": fit.sigma_a,
            "exact_fit": fit.exact_fit,
        }
    else:
        triples = [
            (r["n_sites"], r["method"]["chi"], r["log_z"] / r["n_sites"])
            for r in samples
            if r.get("log_z") is not None
        ]
        fit = bench.fit_entropy_surface(triples)
        out = {
            "s_inf": fit.s_inf,
            "coeffs": list(fit.coeffs),
            "rank_deficient": fit.rank_deficient,
        }
    blob = json.dumps(out, sort_keys=True)
    if args.out:
        with open(args.out, "w") as f:
            f.write(blob + "\n")
    print(blob)


def build_parser():
    p = argparse.ArgumentParser(
        prog="tncompress",
        description="Approximate tensor network contraction on arbitrary graphs",
    )
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a tensor network graph file")
    g.add_argument("--lattice", required=True,
                   help="e.g. square2d:8,8 cube3d:4,4,4 pyrochlore:3 "
                        "diamond:4 random_regular:100,3 (cdl uses square2d)")
    g.add_argument("--model", required=True,
                   help="e.g. ising:beta=0.44 urand:lam=-0.5,D=4 dimer cdl:d=2")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--no-data", action="store_true",
                   help="write shapes only (regenerate tensors from --model)")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    o = sub.add_parser("optimize", help="search for a good contraction tree")
    o.add_argument("--graph", required=True)
    o.add_argument("--model", help="model filler for shape-only graphs")
    o.add_argument("--chi", type=int, required=True)
    o.add_argument("--family", default="all",
                   choices=["greedy", "span", "agglom", "all"])
    o.add_argument("--objective", default="M", choices=["M", "C", "W", "Mt"])
    o.add_argument("--budget", type=int, default=256)
    o.add_argument("--seed", type=int, default=0)
    o.add_argument("--history", help="write per-trial JSON lines here")
    o.add_argument("--out", required=True)
    o.set_defaults(func=cmd_optimize)

    c = sub.add_parser("contract", help="contract a graph file")
    c.add_argument("--graph", required=True)
    c.add_argument("--model", help="model filler for shape-only graphs")
    c.add_argument("--tree", help="use a stored contraction tree")
    c.add_argument("--scheme", default="approx",
                   choices=["approx", "boundary2d", "ctmrg", "hotrg2d",
                            "hotrg3d", "peps3d"])
    c.add_argument("--chi", type=int, required=True)
    c.add_argument("--r", type=int, default=1)
    c.add_argument("--mode", default="early", choices=["early", "late"])
    c.add_argument("--family", default="all",
                   choices=["greedy", "span", "agglom", "boundary", "all"])
    c.add_argument("--objective", default="M", choices=["M", "C", "W", "Mt"])
    c.add_argument("--budget", type=int, default=128)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--exact", action="store_true",
                   help="also contract exactly for reference")
    c.add_argument("--out")
    c.set_defaults(func=cmd_contract)

    b = sub.add_parser("bench", help="run a sweep config")
    b.add_argument("--config", required=True, help="JSON or TOML sweep matrix")
    b.add_argument("--workers", type=int, default=1)
    b.add_argument("--out", required=True)
    b.set_defaults(func=cmd_bench)

    f = sub.add_parser("fit", help="fit results from a bench run")
    f.add_argument("--results", required=True)
    f.add_argument("--kind", default="invchi", choices=["invchi", "surface"])
    f.add_argument("--field", default="f",
                   help="record field to fit against 1/chi (invchi)")
    f.add_argument("--out")
    f.set_defaults(func=cmd_fit)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
