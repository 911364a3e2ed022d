"""Command-line front end: frpcag graph | solve | background | experiment.

Exit codes: 0 success, 1 io/parse, 2 usage or config, 3 solver divergence,
4 inconsistent data. Heavy imports happen inside the commands so the
FRPCAG_THREADS cap can be applied before numpy spins up its thread pools.
"""

import argparse
import json
import os
import sys

EXIT_OK = 0
EXIT_IO = 1
EXIT_USAGE = 2
EXIT_DIVERGED = 3
EXIT_DATA = 4


def _apply_thread_cap():
    cap = os.environ.get("FRPCAG_THREADS")
    if not cap:
        return
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                "NUMEXPR_NUM_THREADS"):
        os.environ[var] = cap


def _sigma2_arg(text: str):
    if text == "auto":
        return "auto"
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"sigma2 must be a number or 'auto', got {text!r}")
    if value <= 0:
        raise argparse.ArgumentTypeError("sigma2 must be positive")
    return value


def cmd_graph(args) -> int:
    from . import graph as g
    from .matrixio import load_matrix

    X = load_matrix(args.input, args.format)
    points = X.values if args.axis == "samples" else X.values.T
    n = points.shape[1]
    if args.k >= n:
        print(f"error: K={args.k} must be smaller than the number of "
              f"{args.axis} ({n})", file=sys.stderr)
        return EXIT_USAGE
    if args.mode == "exact":
        nbrs = g.knn_exact(points, args.k)
    else:
        nbrs = g.knn_approx(points, args.k, args.recall, seed=args.seed)
    sigma2 = g.resolve_sigma2(nbrs, args.sigma2)
    built = g.build_graph(nbrs, sigma2)
    g.save_graph_coo(built, args.output)
    print(f"vertices={built.vertex_count} edges={built.adjacency.nnz // 2} "
          f"sigma2={sigma2:.17g}")
    return EXIT_OK


def cmd_solve(args) -> int:
    from .config import check_keys, parse_keyvalue
    from .graph import load_graph_coo
    from .matrixio import DataMatrix, load_matrix, save_matrix
    from .solver import SolverConfig, fista_solve, save_trace_csv

    options = {}
    if args.config:
        options = parse_keyvalue(args.config)
        check_keys(options, {"loss", "gamma1", "gamma2", "step", "epsilon",
                             "max_iters"}, source=args.config)
    for key in ("loss", "gamma1", "gamma2", "step", "epsilon", "max_iters"):
        flag = getattr(args, key)
        if flag is not None:
            options[key] = flag
    cfg = SolverConfig(**options)

    X = load_matrix(args.input, args.format)
    G1 = load_graph_coo(args.graph1)
    G2 = load_graph_coo(args.graph2)
    if G1.vertex_count != X.sample_count or G2.vertex_count != X.feature_count:
        print(f"error: graphs are {G1.vertex_count}/{G2.vertex_count} vertices but the "
              f"matrix is {X.feature_count} x {X.sample_count}", file=sys.stderr)
        return EXIT_USAGE
    result = fista_solve(X, G1, G2, cfg)
    save_matrix(args.output_u, DataMatrix(result.U.values), fmt="binary-f64")
    if args.output_trace:
        save_trace_csv(result.objective_trace, args.output_trace)
    print(f"iterations={result.iterations} objective={result.objective_trace[-1]:.17g} "
          f"converged={str(result.converged).lower()}")
    return EXIT_OK


def cmd_background(args) -> int:
    from .frames import load_frames, save_frames, separate_background

    seq, names = load_frames(args.frames_dir)
    background, foreground, result = separate_background(
        seq, K=args.k, gamma1=args.gamma1, gamma2=args.gamma2,
        sigma2=args.sigma2, epsilon=args.epsilon, max_iters=args.max_iters)
    os.makedirs(args.out_dir, exist_ok=True)
    save_frames(args.out_dir, background, [f"bg_{n}" for n in names])
    save_frames(args.out_dir, foreground, [f"fg_{n}" for n in names])
    h, w = seq.shape
    print(f"frames={seq.count} size={w}x{h} iterations={result.iterations} "
          f"converged={str(result.converged).lower()}")
    return EXIT_OK


EXPERIMENT_KEYS = {
    "dataset", "format", "labels", "n", "p", "separation", "data_seed",
    "corruption", "fraction", "corruption_seed", "corrupt_after_standardize",
    "image_height", "image_width",
    "knn_k", "sigma2", "graph_method", "recall_target",
    "loss", "gamma", "gamma1", "gamma2", "epsilon", "max_iters", "step",
    "seed", "restarts", "rank_threshold", "cluster_on", "output",
}


def _experiment_data(cfg, source):
    import numpy as np

    from .config import ConfigError
    from .evalcluster import two_gaussians
    from .matrixio import DataMatrix, load_matrix

    dataset = cfg.get("dataset", "two-gaussians")
    if dataset == "two-gaussians":
        return two_gaussians(n=int(cfg.get("n", 200)), p=int(cfg.get("p", 40)),
                             separation=float(cfg.get("separation", 10.0)),
                             seed=int(cfg.get("data_seed", 0)))
    if "labels" not in cfg:
        raise ConfigError(f"{source}: file datasets need a 'labels' path")
    X = load_matrix(dataset, cfg.get("format", "csv"))
    if "image_height" in cfg and "image_width" in cfg:
        X = DataMatrix(X.values, image_dims=(int(cfg["image_height"]),
                                             int(cfg["image_width"])))
    labels = np.loadtxt(cfg["labels"], dtype=np.int64, ndmin=1)
    if labels.size != X.sample_count:
        raise ConfigError(f"{source}: {labels.size} labels for {X.sample_count} samples")
    return X, labels


def _experiment_gammas(cfg, source):
    from .config import ConfigError

    if "gamma" in cfg:
        if "gamma1" in cfg or "gamma2" in cfg:
            raise ConfigError(f"{source}: use either 'gamma' or 'gamma1'/'gamma2'")
        gammas = cfg["gamma"] if isinstance(cfg["gamma"], list) else [cfg["gamma"]]
        return [(float(g), float(g)) for g in gammas]
    return [(float(cfg.get("gamma1", 1.0)), float(cfg.get("gamma2", 1.0)))]


def cmd_experiment(args) -> int:
    from .config import check_keys, parse_keyvalue
    from .evalcluster import GraphConfig, run_experiment
    from .matrixio import CorruptionSpec
    from .solver import SolverConfig

    cfg = parse_keyvalue(args.config)
    check_keys(cfg, EXPERIMENT_KEYS, source=args.config)
    X, labels = _experiment_data(cfg, args.config)

    corruption = None
    kind = cfg.get("corruption", "none")
    if kind != "none":
        corruption = CorruptionSpec(kind=kind, fraction=float(cfg.get("fraction", 0.25)),
                                    seed=int(cfg.get("corruption_seed", 0)))
    graph_cfg = GraphConfig(k=int(cfg.get("knn_k", 10)), sigma2=cfg.get("sigma2", 1.0),
                            method=cfg.get("graph_method", "exact"),
                            recall_target=float(cfg.get("recall_target", 0.9)))
    records = []
    out = open(cfg["output"], "w") if "output" in cfg else None
    try:
        for g1, g2 in _experiment_gammas(cfg, args.config):
            solver_cfg = SolverConfig(loss=cfg.get("loss", "l1"), gamma1=g1, gamma2=g2,
                                      step=cfg.get("step", "auto"),
                                      epsilon=float(cfg.get("epsilon", 1e-6)),
                                      max_iters=int(cfg.get("max_iters", 1000)))
            record = run_experiment(
                X, labels, corruption, graph_cfg, solver_cfg,
                seed=int(cfg.get("seed", 0)),
                restarts=int(cfg.get("restarts", 10)),
                rank_threshold=float(cfg.get("rank_threshold", 0.01)),
                cluster_on=cfg.get("cluster_on", "u"),
                corrupt_after_standardize=bool(cfg.get("corrupt_after_standardize", False)))
            line = json.dumps(record)
            print(line)
            if out:
                out.write(line + "\n")
            records.append(record)
    finally:
        if out:
            out.close()

    print(f"{'gamma1':>8} {'gamma2':>8} {'error':>7} {'raw':>7} {'rank':>5} "
          f"{'s_r':>6} {'iters':>6}")
    for r in records:
        print(f"{r['solver']['gamma1']:>8g} {r['solver']['gamma2']:>8g} "
              f"{r['error']:>7.3f} {r['error_raw']:>7.3f} {r['rank']:>5d} "
              f"{r['s_r']:>6.3f} {r['iterations']:>6d}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="frpcag",
        description="Robust low-rank recovery with dual graph regularization.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("graph", help="build a K-NN graph and write COO triplets")
    p.add_argument("--input", required=True)
    p.add_argument("--format", choices=["csv", "binary-f64"], default="csv")
    p.add_argument("--axis", choices=["samples", "features"], default="samples")
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--sigma2", type=_sigma2_arg, default=1.0)
    p.add_argument("--mode", choices=["exact", "approx"], default="exact")
    p.add_argument("--recall", type=float, default=0.9)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_graph)

    p = sub.add_parser("solve", help="run the dual-graph solver on a matrix")
    p.add_argument("--input", required=True)
    p.add_argument("--format", choices=["csv", "binary-f64"], default="csv")
    p.add_argument("--graph1", required=True, help="sample graph (n x n) COO file")
    p.add_argument("--graph2", required=True, help="feature graph (p x p) COO file")
    p.add_argument("--config", help="key = value solver config; flags override it")
    p.add_argument("--gamma1", type=float)
    p.add_argument("--gamma2", type=float)
    p.add_argument("--loss", choices=["l1", "frobenius_sq"])
    p.add_argument("--step", type=_sigma2_arg, metavar="STEP")
    p.add_argument("--epsilon", type=float)
    p.add_argument("--max-iters", dest="max_iters", type=int)
    p.add_argument("--output-u", required=True, help="recovered U (binary-f64)")
    p.add_argument("--output-trace", help="objective trace CSV")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("background", help="separate static background from PGM frames")
    p.add_argument("--frames-dir", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--gamma1", type=float, default=1.0)
    p.add_argument("--gamma2", type=float, default=1.0)
    p.add_argument("--sigma2", type=_sigma2_arg, default="auto")
    p.add_argument("--epsilon", type=float, default=1e-8)
    p.add_argument("--max-iters", dest="max_iters", type=int, default=1000)
    p.set_defaults(func=cmd_background)

    p = sub.add_parser("experiment", help="run the clustering experiment pipeline")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_experiment)
    return parser


def main(argv=None) -> int:
    _apply_thread_cap()
    args = build_parser().parse_args(argv)
    from .config import ConfigError
    from .frames import FrameDimensionError, FrameFormatError
    from .graph import GraphFormatError
    from .matrixio import MatrixFormatError
    from .solver import DivergedError
    try:
        return args.func(args)
    except (MatrixFormatError, GraphFormatError, FrameFormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except DivergedError as exc:
        print(f"error: solver diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except FrameDimensionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ConfigError, ValueError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
