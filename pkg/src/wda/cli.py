"""Command-line surface: balancing demos, fitting, evaluation, benchmarks.

Exit codes: 0 success, 2 validation error, 3 parse error, 4 non-convergence,
5 numeric failure. All reports embed the resolved configuration and the
package version; writes are atomic (temp file + rename).

Environment overrides: ``WDA_SEED`` replaces any seed argument and
``WDA_THREADS`` caps BLAS thread counts (applied before numpy loads).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_PARSE = 3
EXIT_NONCONVERGENCE = 4
EXIT_NUMERIC = 5

_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                "NUMEXPR_NUM_THREADS")


def _apply_thread_env():
    threads = os.environ.get("WDA_THREADS")
    if threads:
        for var in _THREAD_VARS:
            os.environ.setdefault(var, threads)


def _version() -> str:
    try:
        from importlib.metadata import version
        return version("wda")
    except Exception:
        return "unknown"


def _atomic_write(path: str, text: str):
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as handle:
        handle.write(text)
    os.replace(tmp, path)


def _emit(report: dict, rows: list, header: list, args) -> None:
    """Write the report as JSON (full) or CSV (tabular part)."""
    if args.format == "json":
        text = json.dumps(report, indent=2, default=float) + "\n"
    else:
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(header)
        writer.writerows(rows)
        text = buf.getvalue()
    if args.output:
        _atomic_write(args.output, text)
    else:
        sys.stdout.write(text)


def _write_projection(path: str, cols) -> None:
    d, p = cols.shape
    lines = [f"{d} {p}"]
    for i in range(d):
        lines.append(" ".join(f"{x:.17g}" for x in cols[i]))
    _atomic_write(path, "\n".join(lines) + "\n")


def read_projection(path: str):
    """Load a projection written by ``wda fit`` (header line ``d p``)."""
    import numpy as np
    from .errors import ParseError
    with open(path, encoding="utf-8") as handle:
        lines = [ln for ln in handle.read().splitlines() if ln.strip()]
    try:
        d, p = (int(tok) for tok in lines[0].split())
        rows = [[float(tok) for tok in ln.split()] for ln in lines[1:]]
    except (ValueError, IndexError) as exc:
        raise ParseError(f"malformed projection file {path}", path=path) from exc
    mat = np.asarray(rows)
    if mat.shape != (d, p):
        raise ParseError(f"projection body {mat.shape} does not match header "
                         f"({d}, {p})", path=path)
    return mat


def _builtin_kernel(name: str):
    import numpy as np
    eps = 1e-8
    if name == "k1":
        return np.array([[1.0, eps], [1.0, 1.0]])
    if name == "k2":
        return np.array([[1.0, eps], [1.0, 1.0], [1.0, 1.0]])
    if name == "uniform":
        return np.ones((4, 4))
    raise ValueError(name)


def _load_kernel_csv(path: str):
    import numpy as np
    from .errors import ParseError
    try:
        with open(path, encoding="utf-8") as handle:
            rows = [[float(cell) for cell in line] for line in csv.reader(handle) if line]
    except (OSError, ValueError) as exc:
        raise ParseError(f"cannot parse kernel file {path}", path=path) from exc
    if not rows or len({len(r) for r in rows}) != 1:
        raise ParseError(f"kernel file {path} is empty or ragged", path=path)
    return np.asarray(rows)


def _dataset_from_args(args):
    from .data import load_csv, make_synthetic
    if args.data:
        label_column = args.label_column
        if label_column is not None:
            try:
                label_column = int(label_column)
            except ValueError:
                pass
        return load_csv(args.data, label_column)
    counts = tuple(int(c) for c in args.counts.split(","))
    return make_synthetic(args.d, counts, args.data_seed)


def _wda_config(args):
    from .driver import WdaConfig
    epsilon = 1.0 if getattr(args, "ridge", False) else 0.0
    return WdaConfig(lam=args.lam, p=args.p, tol=args.tol,
                     max_outer_iter=args.max_outer_iter, epsilon=epsilon,
                     seed=args.seed, init=getattr(args, "init", "random"))


def _config_dict(cfg) -> dict:
    from dataclasses import asdict
    return asdict(cfg)


def _add_dataset_args(parser):
    source = parser.add_mutually_exclusive_group()
    source.add_argument("--data", help="CSV file of features plus a label column")
    source.add_argument("--synthetic", action="store_true",
                        help="use the built-in synthetic generator (default)")
    parser.add_argument("--label-column", default=None,
                        help="label column name or index (default: last column)")
    parser.add_argument("--d", type=int, default=10,
                        help="synthetic feature dimension")
    parser.add_argument("--counts", default="30,40,30",
                        help="synthetic class sizes, comma separated")
    parser.add_argument("--data-seed", type=int, default=42,
                        help="synthetic generator seed")


def _add_fit_args(parser):
    parser.add_argument("--lam", type=float, default=0.01,
                        help="transport regularization strength")
    parser.add_argument("--p", type=int, default=2, help="subspace dimension")
    parser.add_argument("--tol", type=float, default=1e-5)
    parser.add_argument("--max-outer-iter", type=int, default=200)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--ridge", action="store_true",
                        help="add the unit ridge to the within covariance")
    parser.add_argument("--init", choices=("random", "pca", "lda"),
                        default="random")


def _add_output_args(parser):
    parser.add_argument("--output", help="write the report here (default stdout)")
    parser.add_argument("--format", choices=("json", "csv"), default="json")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wda",
        description="Supervised linear embeddings from entropic optimal transport")
    sub = parser.add_subparsers(dest="command", required=True)

    p_bal = sub.add_parser("balance", help="run a matrix-balancing solver")
    src = p_bal.add_mutually_exclusive_group(required=True)
    src.add_argument("--builtin", choices=("k1", "k2", "uniform"),
                     help="built-in test kernels (k1/k2 use eps = 1e-8)")
    src.add_argument("--kernel", help="CSV file with a strictly positive matrix")
    p_bal.add_argument("--alg", choices=("sk", "accsk"), default="accsk")
    p_bal.add_argument("--tol", type=float, default=1e-5)
    p_bal.add_argument("--max-iter", type=int, default=100)
    _add_output_args(p_bal)

    p_fit = sub.add_parser("fit", help="fit a projection")
    _add_dataset_args(p_fit)
    _add_fit_args(p_fit)
    p_fit.add_argument("--out", required=True,
                       help="directory for projection.txt and trace.json")
    _add_output_args(p_fit)

    p_tr = sub.add_parser("tropt", help="debug: solve one trace-ratio problem")
    p_tr.add_argument("--a", required=True, help="CSV file with the numerator matrix")
    p_tr.add_argument("--b", required=True, help="CSV file with the denominator matrix")
    p_tr.add_argument("--p", type=int, required=True)
    p_tr.add_argument("--tol", type=float, default=1e-5)
    p_tr.add_argument("--max-iter", type=int, default=100)
    p_tr.add_argument("--seed", type=int, default=0)
    _add_output_args(p_tr)

    p_ev = sub.add_parser("eval", help="repeated holdout KNN evaluation")
    _add_dataset_args(p_ev)
    _add_fit_args(p_ev)
    p_ev.add_argument("--K", type=int, default=10, help="neighbor count")
    p_ev.add_argument("--repeats", type=int, default=20)
    p_ev.add_argument("--train-fraction", type=float, default=0.5)
    p_ev.add_argument("--method", choices=("wda", "lda", "random"), default="wda")
    _add_output_args(p_ev)

    p_be = sub.add_parser("bench", help="runtime scaling along one axis")
    p_be.add_argument("--axis", choices=("p", "d", "n"), required=True)
    p_be.add_argument("--grid", required=True,
                      help="comma separated grid, ascending, length >= 3")
    p_be.add_argument("--repeats", type=int, default=3)
    p_be.add_argument("--lam", type=float, default=0.01)
    p_be.add_argument("--p", type=int, default=2)
    p_be.add_argument("--seed", type=int, default=0)
    _add_output_args(p_be)

    return parser


def _cmd_balance(args) -> int:
    from .balancing import BalancingConfig, acc_sk, assemble_plan, sk_iterate
    K = _builtin_kernel(args.builtin) if args.builtin else _load_kernel_csv(args.kernel)
    cfg = BalancingConfig(tol=args.tol, max_iter=args.max_iter)
    solver = sk_iterate if args.alg == "sk" else acc_sk
    result = solver(K, cfg)
    plan = assemble_plan(K, result.scaling)
    report = {
        "command": "balance",
        "version": _version(),
        "config": {"alg": args.alg, "tol": args.tol, "max_iter": args.max_iter,
                   "kernel": args.builtin or args.kernel,
                   "shape": list(K.shape)},
        "result": {
            "converged": result.converged,
            "iterations": result.iterations,
            "final_step": result.final_step,
            "marginal_residual": plan.residual,
            "inner_warning": result.inner_warning,
            "step_history": [float(s) for s in result.step_history],
        },
    }
    rows = [(i + 1, float(s)) for i, s in enumerate(result.step_history)]
    _emit(report, rows, ["iteration", "step"], args)
    return EXIT_OK if result.converged else EXIT_NONCONVERGENCE


def _cmd_fit(args) -> int:
    from .data import standardize
    from .driver import fit
    dataset = standardize(_dataset_from_args(args))
    cfg = _wda_config(args)
    projection, trace = fit(dataset, cfg)
    os.makedirs(args.out, exist_ok=True)
    _write_projection(os.path.join(args.out, "projection.txt"), projection.cols)
    trace_payload = {
        "objective": [float(x) for x in trace.objective],
        "subspace_step": [float(x) for x in trace.subspace_step],
        "inner_iterations": trace.inner_iterations,
        "wall_time": [float(x) for x in trace.wall_time],
        "converged": trace.converged,
        "iterations": trace.iterations,
        "monotone": trace.monotone,
        "warnings": trace.warnings,
    }
    _atomic_write(os.path.join(args.out, "trace.json"),
                  json.dumps(trace_payload, indent=2) + "\n")
    report = {
        "command": "fit",
        "version": _version(),
        "config": _config_dict(cfg),
        "result": {
            "converged": trace.converged,
            "iterations": trace.iterations,
            "objective": trace_payload["objective"][-1] if len(trace.objective) else None,
            "projection_file": os.path.join(args.out, "projection.txt"),
            "trace_file": os.path.join(args.out, "trace.json"),
        },
    }
    rows = [(i + 1, float(o), float(s), float(t)) for i, (o, s, t) in
            enumerate(zip(trace.objective, trace.subspace_step, trace.wall_time))]
    _emit(report, rows, ["iteration", "objective", "subspace_step", "seconds"], args)
    return EXIT_OK if trace.converged else EXIT_NONCONVERGENCE


def _cmd_tropt(args) -> int:
    from .traceratio import random_projection, tropt_scf
    A = _load_kernel_csv(args.a)
    B = _load_kernel_csv(args.b)
    P0 = random_projection(A.shape[0], args.p, args.seed)
    result = tropt_scf(A, B, args.p, P0, tol=args.tol, max_iter=args.max_iter)
    report = {
        "command": "tropt",
        "version": _version(),
        "config": {"p": args.p, "tol": args.tol, "max_iter": args.max_iter,
                   "seed": args.seed, "a": args.a, "b": args.b},
        "result": {
            "q": result.q,
            "iterations": result.iterations,
            "residual": result.residual,
            "converged": result.converged,
            "degenerate_gap": result.degenerate_gap,
            "trace": [float(x) for x in result.trace],
        },
    }
    rows = [(i, float(q)) for i, q in enumerate(result.trace)]
    _emit(report, rows, ["iteration", "q"], args)
    return EXIT_OK if result.converged else EXIT_NONCONVERGENCE


def _cmd_eval(args) -> int:
    from .data import SplitSpec, standardize
    from .evaluation import evaluate
    dataset = _dataset_from_args(args)
    if args.data:
        dataset = standardize(dataset)  # recorded stats; split restandardizes
    cfg = _wda_config(args)
    spec = SplitSpec(train_fraction=args.train_fraction, seed=args.seed)
    report_obj = evaluate(dataset, cfg, spec, args.K, args.repeats,
                          method=args.method)
    report = {
        "command": "eval",
        "version": _version(),
        "config": {**_config_dict(cfg), "K": args.K, "repeats": args.repeats,
                   "train_fraction": args.train_fraction, "method": args.method},
        "result": {
            "error": report_obj.error,
            "per_repeat_errors": report_obj.per_repeat_errors,
            "failures": report_obj.failures,
            "mean_wall_time": report_obj.mean_wall_time,
        },
    }
    rows = [(i, float(e)) for i, e in enumerate(report_obj.per_repeat_errors)]
    _emit(report, rows, ["repeat", "error"], args)
    return EXIT_OK


def _cmd_bench(args) -> int:
    from .driver import WdaConfig
    from .evaluation import bench_scaling
    grid = [int(v) for v in args.grid.split(",")]
    cfg = WdaConfig(lam=args.lam, p=args.p, seed=args.seed)
    result = bench_scaling(args.axis, grid, cfg, repeats=args.repeats,
                           seed=args.seed)
    report = {
        "command": "bench",
        "version": _version(),
        "config": {**_config_dict(cfg), "axis": args.axis, "grid": grid,
                   "repeats": args.repeats},
        "result": {
            "rows": [[int(v), float(t)] for v, t in result.rows],
            "loglog_slope": result.loglog_slope,
            "linear_slope": result.linear_slope,
            "r_squared": result.r_squared,
        },
    }
    rows = [(int(v), float(t)) for v, t in result.rows]
    _emit(report, rows, ["value", "mean_seconds"], args)
    return EXIT_OK


def main(argv=None) -> int:
    _apply_thread_env()
    parser = build_parser()
    args = parser.parse_args(argv)

    env_seed = os.environ.get("WDA_SEED")
    if env_seed is not None and hasattr(args, "seed"):
        args.seed = int(env_seed)

    from .errors import (DimensionError, DomainError, NumericError,
                         ParameterError, ParseError)
    handlers = {
        "balance": _cmd_balance,
        "fit": _cmd_fit,
        "tropt": _cmd_tropt,
        "eval": _cmd_eval,
        "bench": _cmd_bench,
    }
    try:
        return handlers[args.command](args)
    except ParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (ParameterError, DimensionError, DomainError, ValueError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_PARSE


if __name__ == "__main__":
    raise SystemExit(main())
