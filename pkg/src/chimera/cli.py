"""Command-line interface: generate, fit, detect, predict, evaluate, tune, bench."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import io
from .bench import BENCH_HYPERPARAMETERS, bench
from .communities import CommunityAssignment, detect_communities, kmeans, normalize_rows
from .factorization import DivergenceError, Hyperparameters, fit, fit_with_backoff
from .metrics import jaccard, purity
from .prediction import TRACK_POLICIES, fit_forecaster
from .synthetic import SyntheticConfig, generate
from .tuner import DIRECTIONS, SearchSpace, TuningError, tune

logger = logging.getLogger("chimera")


class CLIError(Exception):
    pass


def _round(x, precision):
    return float(io.fmt(x, precision))


def _emit(record: dict, out=None):
    line = json.dumps(record, sort_keys=True)
    if out is None:
        print(line)
    else:
        out.append(line + "\n")


def _require_file(path, what):
    if not Path(path).exists():
        raise CLIError(f"{what} not found: {path}")


# --------------------------------------------------------------------------
# commands


def cmd_generate(args):
    values = io.read_config(args.config) if args.config else {}
    config = io.dataclass_from_config(SyntheticConfig, values, seed=args.seed)
    data = generate(config)
    io.write_dataset(args.out, data.network, labels=data.truth)
    io.write_config(Path(args.out) / "generator.cfg", config)
    _emit({"command": "generate", "nodes": config.n, "terms": config.d, "timestamps": config.T, "out": str(args.out)})


def _hyperparameters(args) -> Hyperparameters:
    values = io.read_config(args.config) if args.config else {}
    return io.dataclass_from_config(Hyperparameters, values, seed=args.seed)


def cmd_fit(args):
    _require_file(args.dataset, "dataset")
    hp = _hyperparameters(args)
    data = io.load_dataset(args.dataset)
    if args.max_halvings:
        result = fit_with_backoff(data.network, hp, max_halvings=args.max_halvings, require_descent=args.require_descent)
    else:
        result = fit(data.network, hp, require_descent=args.require_descent)
    io.save_model(args.out, io.ModelCheckpoint.from_fit(result))
    if args.trace:
        io.atomic_write(args.trace, "".join(f"{i}\t{io.fmt(j, args.precision)}\n" for i, j in enumerate(result.trace)))
    _emit(
        {
            "command": "fit",
            "objective": _round(result.objective, args.precision),
            "iterations": result.iterations,
            "converged": result.converged,
            "alpha": result.hyperparameters.alpha,
            "halvings": result.halvings,
            "out": str(args.out),
        }
    )


def cmd_detect(args):
    _require_file(args.model, "model")
    ckpt = io.load_model(args.model)
    if args.clusters < 1 or args.clusters > ckpt.model.n * ckpt.model.T:
        raise CLIError(f"--clusters must lie in [1, {ckpt.model.n * ckpt.model.T}]")
    ca = detect_communities(ckpt.model, args.clusters, seed=args.seed, restarts=args.restarts, normalize=args.normalize)
    io.write_labels(args.out, ca.labels, ca.timestamps)
    _emit(
        {
            "command": "detect",
            "clusters": ca.c,
            "inertia": _round(ca.inertia, args.precision),
            "sizes": [np.bincount(row, minlength=ca.c).tolist() for row in ca.labels],
            "out": str(args.out),
        }
    )


def cmd_predict(args):
    _require_file(args.model, "model")
    ckpt = io.load_model(args.model)
    if args.horizon < 1:
        raise CLIError("--horizon must be at least 1")
    if args.clusters < 1 or args.clusters > ckpt.model.n:
        raise CLIError(f"--clusters must lie in [1, {ckpt.model.n}]")
    network = None
    if args.track_policy == "a-support":
        if not args.dataset:
            raise CLIError("--track-policy a-support needs --dataset")
        network = io.load_dataset(args.dataset).network
    forecaster = fit_forecaster(
        ckpt.model, args.order, track_policy=args.track_policy, network=network, fallback=args.fallback
    )
    U = forecaster.predict(args.horizon)
    km = kmeans(normalize_rows(U) if args.normalize else U, args.clusters, seed=args.seed, restarts=args.restarts)
    timestamp = ckpt.model.T - 1 + args.horizon
    ca = CommunityAssignment(km.labels[None, :], km.centroids, km.inertia, [timestamp])
    io.write_labels(args.out, ca.labels, ca.timestamps)
    if args.embedding:
        io.write_matrix(args.embedding, U, args.precision)
    _emit(
        {
            "command": "predict",
            "timestamp": timestamp,
            "horizon": args.horizon,
            "order": forecaster.order,
            "track_policy": forecaster.series.policy,
            "tracked_entries": int(len(forecaster.series.coords)),
            "fallback_entries": int((forecaster.ar.fallback != "").sum()),
            "out": str(args.out),
        }
    )


def _truth_labels(path) -> dict:
    if Path(path).is_dir():
        data = io.load_dataset(path)
        if data.labels is None:
            raise CLIError(f"dataset {path} has no labels")
        return {t: row for t, row in enumerate(data.labels)}
    return io.read_labels(path)


def cmd_evaluate(args):
    _require_file(args.labels, "label file")
    _require_file(args.truth, "truth")
    predicted = io.read_labels(args.labels)
    truth = _truth_labels(args.truth)
    lines = []
    all_pred, all_truth = [], []
    for t, labels in predicted.items():
        if t not in truth:
            raise CLIError(f"no ground truth for timestamp {t}")
        if len(truth[t]) != len(labels):
            raise CLIError(f"timestamp {t}: {len(labels)} predicted labels but {len(truth[t])} true labels")
        all_pred.append(labels)
        all_truth.append(truth[t])
        _emit(
            {
                "timestamp": t,
                "purity": _round(purity(labels, truth[t]), args.precision),
                "jaccard": _round(jaccard(labels, truth[t]), args.precision),
            },
            lines,
        )
    if len(predicted) > 1:
        p, q = np.concatenate(all_pred), np.concatenate(all_truth)
        _emit(
            {
                "timestamp": "all",
                "purity": _round(purity(p, q), args.precision),
                "jaccard": _round(jaccard(p, q), args.precision),
            },
            lines,
        )
    if args.out:
        io.atomic_write(args.out, "".join(lines))
    sys.stdout.write("".join(lines))


def cmd_tune(args):
    _require_file(args.dataset, "dataset")
    base = _hyperparameters(args)
    values = io.read_config(args.space) if args.space else {}
    space = io.dataclass_from_config(SearchSpace, values, seed=args.seed)
    data = io.load_dataset(args.dataset)
    log_lines = []

    def record(trial):
        rec = trial.to_record()
        if args.deterministic:
            rec.pop("wall_time")
        _emit(rec, log_lines)

    try:
        result = tune(
            data.network, space, direction=args.direction, base=base, max_halvings=args.max_halvings, on_trial=record
        )
    finally:
        if args.log:
            io.atomic_write(args.log, "".join(log_lines))
    if args.out:
        best = base.replace(**{k: v for k, v in result.best.config.items() if k != "clusters"})
        io.write_config(args.out, best)
    _emit(
        {
            "command": "tune",
            "best": result.best.config,
            "objective": _round(result.best.objective, args.precision),
            "trials": len(result.trials),
            "direction": result.direction,
            "note": result.note,
        }
    )


def cmd_bench(args):
    sizes = [int(s) for s in args.sizes.split(",") if s.strip()]
    if len(sizes) < 3:
        raise CLIError("--sizes needs at least three sizes for a quadratic fit")
    result = bench(sizes, T=args.timestamps, rank=args.rank, iterations=args.iterations, seed=args.seed)
    lines = []
    for p in result.points:
        _emit({"n": p.n, "seconds": _round(p.seconds, args.precision), "iterations": p.iterations, "alpha": p.alpha}, lines)
    a, b, c = result.coefficients
    _emit(
        {
            "fit": "a*n^2 + b*n + c",
            "a": _round(a, args.precision),
            "b": _round(b, args.precision),
            "c": _round(c, args.precision),
            "r2": _round(result.r2, args.precision),
            "quadratic_dominates": bool(result.quadratic_dominates),
        },
        lines,
    )
    if args.out:
        io.atomic_write(args.out, "".join(lines))
    sys.stdout.write("".join(lines))


# --------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="seed for every random choice")
    common.add_argument("--threads", type=int, default=None, help="BLAS threads (default: library default)")
    common.add_argument(
        "--deterministic", action="store_true", help="single-threaded numerics and timing-free logs"
    )
    common.add_argument("--precision", type=int, default=6, help="significant digits of numeric output")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="chimera", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", parents=[common], help="write a synthetic dataset")
    p.add_argument("--config", help="key=value generator settings")
    p.add_argument("--out", required=True, help="dataset directory")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("fit", parents=[common], help="fit the factorization")
    p.add_argument("--dataset", required=True)
    p.add_argument("--config", help="key=value hyperparameters")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--trace", help="objective trace output (iteration, objective)")
    p.add_argument("--max-halvings", type=int, default=0, help="halve alpha on divergence up to N times")
    p.add_argument("--require-descent", action="store_true", help="treat any objective increase as divergence")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("detect", parents=[common], help="temporal community detection")
    p.add_argument("--model", required=True)
    p.add_argument("--clusters", type=int, required=True)
    p.add_argument("--out", required=True, help="label file (timestamp, node, label)")
    p.add_argument("--restarts", type=int, default=10)
    p.add_argument("--normalize", action="store_true", help="cluster unit-normalized rows")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("predict", parents=[common], help="predict communities at T-1+horizon")
    p.add_argument("--model", required=True)
    p.add_argument("--horizon", type=int, default=1)
    p.add_argument("--order", type=int, default=None, help="AR order (default: 1, or 2 from five timestamps on)")
    p.add_argument("--clusters", type=int, required=True)
    p.add_argument("--out", required=True, help="label file for the predicted timestamp")
    p.add_argument("--embedding", help="write the forecast embedding here")
    p.add_argument("--track-policy", choices=TRACK_POLICIES, default="nonzero-u")
    p.add_argument("--dataset", help="needed by the a-support track policy")
    p.add_argument("--fallback", choices=("last-value", "mean"), default="last-value")
    p.add_argument("--restarts", type=int, default=10)
    p.add_argument("--normalize", action="store_true")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", parents=[common], help="purity and Jaccard against ground truth")
    p.add_argument("--labels", required=True)
    p.add_argument("--truth", required=True, help="label file or dataset directory with labels")
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("tune", parents=[common], help="silhouette-driven hyperparameter search")
    p.add_argument("--dataset", required=True)
    p.add_argument("--space", help="key=value search space (comma-separated candidates)")
    p.add_argument("--config", help="key=value base hyperparameters")
    p.add_argument("--direction", choices=DIRECTIONS, default="maximize")
    p.add_argument("--max-halvings", type=int, default=0)
    p.add_argument("--log", help="trial log (JSON lines)")
    p.add_argument("--out", help="best hyperparameters as key=value")
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("bench", parents=[common], help="time fixed-iteration fits over sizes")
    p.add_argument("--sizes", default="250,500,1000,2000")
    p.add_argument("--timestamps", type=int, default=3)
    p.add_argument("--rank", type=int, default=BENCH_HYPERPARAMETERS.rank)
    p.add_argument("--iterations", type=int, default=BENCH_HYPERPARAMETERS.max_iters)
    p.add_argument("--out")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    if args.command in ("detect", "predict", "bench") and args.seed is None:
        args.seed = 0
    if args.precision < 1:
        parser.error("--precision must be at least 1")
    threads = 1 if args.deterministic else args.threads
    try:
        with threadpool_limits(limits=threads):
            args.func(args)
    except (CLIError, io.FormatError, DivergenceError, TuningError, ValueError, OSError) as err:
        print(f"chimera {args.command}: error: {err}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
