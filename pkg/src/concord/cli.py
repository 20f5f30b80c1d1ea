"""Command-line surface.

Subcommands: train, eval, ablation-ab, ablation-n, toyset, report,
gen-corpus. Exit codes: 0 on success, 2 on validation/config errors, 3 when
training diverges. CONCORD_THREADS caps --jobs.
"""

from __future__ import annotations

import argparse
import sys

from .errors import ConfigError, DivergenceError


def _parse_seeds(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(p) for p in text.split(",") if p.strip() != "")
    except ValueError as exc:
        raise ConfigError(f"bad --seed value {text!r}: {exc}") from exc


def _parse_ratios(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(p) for p in text.split(",") if p.strip() != "")
    except ValueError as exc:
        raise ConfigError(f"bad --ratio value {text!r}: {exc}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="concord",
                                     description="Consistency-trained point cloud completion experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train one model from a config and dataset")
    p_train.add_argument("--config", required=True)
    p_train.add_argument("--data", required=True)
    p_train.add_argument("--out", required=True)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--data", required=True)
    p_eval.add_argument("--out", required=True)
    p_eval.add_argument("--ratio", default="0.25,0.5,0.75",
                        help="comma-separated missing ratios (default S,M,H)")
    p_eval.add_argument("--seed", default="0", help="evaluation view seed")

    p_ab = sub.add_parser("ablation-ab", help="sweep the (alpha, beta) loss-weight grid")
    p_ab.add_argument("--config", required=True)
    p_ab.add_argument("--data", required=True)
    p_ab.add_argument("--out", required=True)
    p_ab.add_argument("--seed", default="0", help="comma-separated seeds shared by every cell")
    p_ab.add_argument("--grid", default="0,0;0,1;1,0;1,1;0.1,1",
                      help="semicolon-separated alpha,beta cells")
    p_ab.add_argument("--jobs", type=int, default=1)

    p_n = sub.add_parser("ablation-n", help="sweep the view count under an equal-compute budget")
    p_n.add_argument("--config", required=True)
    p_n.add_argument("--data", required=True)
    p_n.add_argument("--out", required=True)
    p_n.add_argument("--seed", default="0")
    p_n.add_argument("--n-list", default="2,3,4,6,12")
    p_n.add_argument("--budget", type=int, default=12, help="total clouds per optimizer step")
    p_n.add_argument("--jobs", type=int, default=1)

    p_toy = sub.add_parser("toyset", help="mine adversarial vs uniform toy datasets and train on both")
    p_toy.add_argument("--config", required=True)
    p_toy.add_argument("--data", required=True)
    p_toy.add_argument("--out", required=True)
    p_toy.add_argument("--seed", default="0", help="mining seed")
    p_toy.add_argument("--k1", type=int, default=100)
    p_toy.add_argument("--k2", type=int, default=5)
    p_toy.add_argument("--size", type=int, default=5000, help="mined dataset size n")
    p_toy.add_argument("--replicas", type=int, default=3)
    p_toy.add_argument("--ratio", default="0.75", help="canonical mining split ratio")
    p_toy.add_argument("--view-policy", default="underside", choices=("underside", "seeded"),
                       help="how the canonical mining split is observed")
    p_toy.add_argument("--jobs", type=int, default=1)

    p_rep = sub.add_parser("report", help="aggregate run directories into CSV + charts")
    p_rep.add_argument("--runs", required=True)
    p_rep.add_argument("--out", required=True)

    p_gen = sub.add_parser("gen-corpus", help="generate a synthetic corpus as a dataset")
    p_gen.add_argument("--out", required=True)
    p_gen.add_argument("--seed", default="0")
    p_gen.add_argument("--kind", default="shapes", choices=("shapes", "shared-top"),
                       help="five parametric families, or shared-tabletop one-to-many groups")
    p_gen.add_argument("--count", type=int, default=100,
                       help="objects per family (shapes) or number of groups (shared-top)")
    p_gen.add_argument("--points", type=int, default=128, help="points per cloud")
    p_gen.add_argument("--format", default="xyz", choices=("xyz", "pcld1"))

    return parser


def _dispatch(args) -> int:
    from . import experiments
    from .dataio import load_dataset, read_config, write_dataset
    from .toyset import (
        ToyParams,
        default_shape_specs,
        generate_one_to_many_corpus,
        generate_shape_corpus,
    )

    if args.command == "train":
        _, history = experiments.cmd_train(args.config, args.data, args.out)
        final = history[-1]
        print(f"trained {len(history)} epochs; final eval cd_l2 = {final.eval_metrics.cd_l2:.6g}")
        return 0

    if args.command == "eval":
        ratios = _parse_ratios(args.ratio)
        seed = _parse_seeds(args.seed)[0]
        rows = experiments.cmd_eval(args.checkpoint, args.data, ratios, args.out, seed=seed)
        for row in rows:
            if row[0] == "aggregate":
                print(f"{row[2]}: cd_l2 = {row[3]:.6g}, f1 = {row[6]:.4g}")
        return 0

    if args.command == "ablation-ab":
        config = read_config(args.config)
        objects = load_dataset(args.data)
        grid = []
        for cell in args.grid.split(";"):
            a, _, b = cell.partition(",")
            grid.append((float(a), float(b)))
        rows = experiments.cmd_ablation_alphabeta(config, objects, args.out, grid=grid,
                                                  seeds=_parse_seeds(args.seed), jobs=args.jobs)
        for alpha, beta, seed, cd in rows:
            if seed == "median":
                print(f"alpha={alpha:g} beta={beta:g}: median final cd_l2 = {cd:.6g}")
        return 0

    if args.command == "ablation-n":
        config = read_config(args.config)
        objects = load_dataset(args.data)
        n_list = tuple(int(x) for x in args.n_list.split(","))
        rows = experiments.cmd_ablation_n(config, objects, args.out, n_list=n_list,
                                          seeds=_parse_seeds(args.seed), budget=args.budget,
                                          jobs=args.jobs)
        for n, batch, seed, cd, ms in rows:
            if seed == "median":
                print(f"n={n} (batch {batch}): median final cd_l2 = {cd:.6g}, {ms:.1f} ms/step")
        return 0

    if args.command == "toyset":
        config = read_config(args.config)
        objects = load_dataset(args.data)
        params = ToyParams(k1=args.k1, k2=args.k2, n=args.size)
        seed = _parse_seeds(args.seed)[0]
        rows, stats = experiments.cmd_toyset_experiment(
            objects, params, config, args.out, replicas=args.replicas,
            mine_seed=seed, split_ratio=float(args.ratio),
            view_policy=args.view_policy, jobs=args.jobs)
        print(f"mined inc-CD {stats['mined_inc_cd']:.6g} < uniform {stats['uniform_inc_cd']:.6g}; "
              f"mined mis-CD {stats['mined_mis_cd']:.6g} > uniform {stats['uniform_mis_cd']:.6g}")
        for name, rep, cd, std in rows:
            if rep == "mean":
                print(f"{name}: eval cd_l2 = {cd:.6g} +/- {std:.3g}")
        return 0

    if args.command == "report":
        summary = experiments.cmd_report(args.runs, args.out)
        print(f"reported {summary['runs']} runs; skipped {summary['skipped_rows']} malformed rows")
        return 0

    if args.command == "gen-corpus":
        seed = _parse_seeds(args.seed)[0]
        if args.kind == "shapes":
            specs = default_shape_specs(points=args.points)
            clouds = generate_shape_corpus(specs, args.count, seed)
        else:
            clouds = generate_one_to_many_corpus(args.count, points=args.points, seed=seed)
        write_dataset(args.out, clouds, fmt=args.format)
        print(f"wrote {len(clouds)} clouds to {args.out}")
        return 0

    raise AssertionError(f"unhandled command {args.command}")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _dispatch(args)
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
