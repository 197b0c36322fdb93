"""Command line entry point.

Subcommands: encode (cache a dataset's pair encoding), cv (run the
cross-validation benchmark), timing (scaling sweep), deltas (compare
two result files), gen-triangle (write the synthetic triangle dataset
in TU text format).
"""

from __future__ import annotations

import argparse
import os
import sys

from .bench import (DEFAULT_RADII, TrainConfig, epoch_timing, foldwise_deltas,
                    read_results_csv, run_cv, write_timing_csv)
from .encoding import encode_batch, save_encoding
from .graphs import GraphError, generate_triangle_dataset, load_tu_dataset, \
    save_tu_dataset
from .layers import ModelSpec, format_model_spec, parse_model_spec

DEFAULT_GRID = ("layer=wl2,T=3,d=32,r=1,pool=mean,act=logistic,lr=0.001",)


def _load_dataset(args):
    if args.triangle_seed is not None:
        graphs, labels, warnings = generate_triangle_dataset(args.triangle_seed)
        for w in warnings:
            print(f"warning: {w}", file=sys.stderr)
        return graphs, labels, "TRIANGLE"
    if args.dataset is None:
        raise GraphError("need --dataset DIR or --triangle-seed N")
    graphs, labels = load_tu_dataset(args.dataset)
    return graphs, labels, os.path.basename(args.dataset.rstrip("/"))


def _dataset_flags(sub):
    sub.add_argument("--dataset", help="directory with a TU-format dataset")
    sub.add_argument("--triangle-seed", type=int, default=None,
                     help="generate the triangle dataset with this seed")


def _cmd_encode(args):
    graphs, _, name = _load_dataset(args)
    radius = args.radius or DEFAULT_RADII.get(name, 1)
    enc = encode_batch(graphs, radius)
    save_encoding(enc, args.out)
    print(f"{name}: {len(graphs)} graphs, radius {radius}, "
          f"m={enc.m} gamma={enc.gamma} -> {args.out}")
    return 0


def _cmd_cv(args):
    graphs, labels, name = _load_dataset(args)
    radius = args.radius or DEFAULT_RADII.get(name)
    if args.grid_file:
        with open(args.grid_file) as fh:
            lines = [ln.strip() for ln in fh if ln.strip()
                     and not ln.lstrip().startswith("#")]
    else:
        lines = list(DEFAULT_GRID)
    grid = [parse_model_spec(ln) for ln in lines]
    if radius is not None:
        from dataclasses import replace
        grid = [replace(s, r=radius) if s.layer == "wl2" else s for s in grid]
    config = TrainConfig(epochs=args.epochs, patience=args.patience,
                         batch_size=args.batch_size, seed=args.seed,
                         folds=args.folds, repeats=args.repeats,
                         workers=args.workers)
    results = run_cv(graphs, labels, grid, config, dataset=name,
                     out_path=args.out)
    accs = [r.test_acc for r in results]
    print(f"{name}: {len(results)} rows -> {args.out}; mean test accuracy "
          f"{sum(accs) / len(accs):.4f}")
    return 0


def _parse_int_list(text):
    return [int(x) for x in text.split(",") if x]


def _cmd_timing(args):
    spec = parse_model_spec(args.spec) if args.spec else ModelSpec()
    rows, warnings = epoch_timing(_parse_int_list(args.n_values),
                                  _parse_int_list(args.d_values),
                                  _parse_int_list(args.r_values),
                                  spec, n_graphs=args.graphs,
                                  epochs=args.epochs, seed=args.seed)
    for w in warnings:
        print(f"warning: {w}", file=sys.stderr)
    write_timing_csv(rows, args.out)
    for r in rows:
        print(f"n={r.n} d={r.d} r={r.r} gamma={r.gamma} "
              f"epoch={r.epoch_seconds:.6f}s")
    print(f"{len(rows)} rows -> {args.out}")
    return 0


def _cmd_deltas(args):
    report = foldwise_deltas(read_results_csv(args.a), read_results_csv(args.b))
    verdict = "significant" if report.significant else "not significant"
    print(f"mean delta {report.mean:+.4f}, std {report.std:.4f} "
          f"over {len(report.deltas)} pairs: {verdict} at two sigma")
    return 0


def _cmd_gen_triangle(args):
    graphs, labels, warnings = generate_triangle_dataset(args.seed)
    for w in warnings:
        print(f"warning: {w}", file=sys.stderr)
    out_dir = os.path.join(args.out_dir, args.name)
    save_tu_dataset(graphs, labels, out_dir, args.name)
    n_mean = sum(g.n for g in graphs) / len(graphs)
    print(f"{len(graphs)} graphs (mean size {n_mean:.1f}, "
          f"{int(labels.sum())} of class B) -> {out_dir}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="wl2gnn")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("encode", help="encode a dataset and cache the dump")
    _dataset_flags(p)
    p.add_argument("--radius", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_encode)

    p = sub.add_parser("cv", help="cross-validated benchmark")
    _dataset_flags(p)
    p.add_argument("--grid-file", help="file with one model spec per line")
    p.add_argument("--radius", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--patience", type=int, default=20)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_cv)

    p = sub.add_parser("timing", help="epoch wall-time scaling sweep")
    p.add_argument("--n-values", required=True, help="comma separated")
    p.add_argument("--d-values", default="2")
    p.add_argument("--r-values", default="1")
    p.add_argument("--spec", help="model spec, default small wl2")
    p.add_argument("--graphs", type=int, default=100)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_timing)

    p = sub.add_parser("deltas", help="paired fold-wise comparison")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.set_defaults(fn=_cmd_deltas)

    p = sub.add_parser("gen-triangle", help="write the triangle dataset "
                                            "in TU format")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--name", default="TRIANGLE")
    p.set_defaults(fn=_cmd_gen_triangle)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (GraphError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
