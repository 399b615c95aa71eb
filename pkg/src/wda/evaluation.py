"""KNN scoring of fitted embeddings and a runtime scaling harness."""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .data import LabeledDataset, SplitSpec, make_synthetic, split, standardize
from .driver import WdaConfig, fit, lda_fit, transform
from .errors import ParameterError, WdaError
from .traceratio import Projection, random_projection


def derive_seed(*parts) -> int:
    """Deterministic child seed from integer parts (stable across platforms)."""
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


def knn_predict(train_x: np.ndarray, train_labels, test_x: np.ndarray,
                k: int) -> np.ndarray:
    """Majority-vote K-nearest-neighbor labels under Euclidean distance.

    Ties are broken first by the smaller summed distance of the tied label's
    neighbors, then by label order (ascending). Both rules are deterministic
    and independent of training-point order.
    """
    train_x = np.asarray(train_x, dtype=float)
    test_x = np.asarray(test_x, dtype=float)
    train_labels = np.asarray(train_labels)
    if train_x.ndim != 2 or test_x.ndim != 2 or train_x.shape[0] != test_x.shape[0]:
        raise ParameterError("train and test matrices must be p-by-n and p-by-m")
    n = train_x.shape[1]
    if n == 0:
        raise ParameterError("training set is empty")
    if train_labels.shape[0] != n:
        raise ParameterError(f"expected {n} training labels, got {train_labels.shape[0]}")
    if not 1 <= k <= n:
        raise ParameterError(f"need 1 <= K <= {n}, got K={k}")

    sq_tr = np.sum(train_x * train_x, axis=0)
    sq_te = np.sum(test_x * test_x, axis=0)
    d2 = sq_te[:, None] + sq_tr[None, :] - 2.0 * (test_x.T @ train_x)
    np.maximum(d2, 0.0, out=d2)

    labels = np.unique(train_labels)
    predictions = []
    for i in range(test_x.shape[1]):
        neighbors = np.argpartition(d2[i], k - 1)[:k]
        neighbor_labels = train_labels[neighbors]
        votes = {lab: int(np.sum(neighbor_labels == lab)) for lab in labels}
        top = max(votes.values())
        tied = [lab for lab in labels if votes[lab] == top]
        if len(tied) > 1:
            sums = {lab: float(d2[i][neighbors[neighbor_labels == lab]].sum())
                    for lab in tied}
            closest = min(sums.values())
            tied = [lab for lab in tied if sums[lab] == closest]
        predictions.append(tied[0])
    return np.asarray(predictions)


@dataclass
class EvalReport:
    """Aggregate of repeated split/fit/classify runs.

    ``error`` is the mean of ``per_repeat_errors``; repeats whose fit raised
    are counted in ``failures`` and excluded from the mean.
    """

    error: float
    k: int
    p: int
    repeats: int
    per_repeat_errors: list = field(default_factory=list)
    mean_wall_time: float = 0.0
    failures: int = 0
    method: str = "wda"


def _projection_for(method: str, train: LabeledDataset, cfg: WdaConfig,
                    fit_seed: int) -> Projection:
    if method == "wda":
        projection, _ = fit(train, replace(cfg, seed=fit_seed))
        return projection
    if method == "lda":
        return lda_fit(train, cfg.p, tol=cfg.tropt_tol, epsilon=cfg.epsilon)
    if method == "random":
        return random_projection(train.dim, cfg.p, fit_seed)
    if method == "identity":
        return Projection(np.eye(train.dim))
    raise ParameterError(f"unknown method {method!r}")


def evaluate(data: LabeledDataset, cfg: WdaConfig, split_spec: SplitSpec,
             k: int, repeats: int, method: str = "wda",
             self_test: bool = False) -> EvalReport:
    """Repeated holdout evaluation.

    Per repeat: split (seed derived from the split seed and the repeat
    index), fit a projection on the training side, project the test side,
    classify with KNN, and record the misclassification fraction. Split
    seeds do not depend on ``method``, so reports for different methods are
    paired repeat by repeat.

    ``self_test`` is a diagnostic mode that trains and tests on the full
    standardized dataset (memorization check).
    """
    if repeats < 1:
        raise ParameterError(f"repeats must be >= 1, got {repeats}")
    if k < 1:
        raise ParameterError(f"K must be >= 1, got {k}")
    errors = []
    failures = 0
    elapsed = []
    for r in range(repeats):
        tic = time.perf_counter()
        if self_test:
            train = test = standardize(data)
        else:
            spec = SplitSpec(train_fraction=split_spec.train_fraction,
                             seed=derive_seed(split_spec.seed, r),
                             stratified=split_spec.stratified)
            train, test = split(data, spec)
        try:
            projection = _projection_for(method, train, cfg,
                                         derive_seed(cfg.seed, r))
        except WdaError:
            failures += 1
            continue
        train_x, train_y = train.pooled()
        test_x, test_y = test.pooled()
        predicted = knn_predict(transform(projection, train_x), train_y,
                                transform(projection, test_x), k)
        errors.append(float(np.mean(predicted != test_y)))
        elapsed.append(time.perf_counter() - tic)
    mean_error = float(np.mean(errors)) if errors else float("nan")
    mean_time = float(np.mean(elapsed)) if elapsed else 0.0
    return EvalReport(error=mean_error, k=k, p=cfg.p, repeats=repeats,
                      per_repeat_errors=errors, mean_wall_time=mean_time,
                      failures=failures, method=method)


@dataclass
class BenchResult:
    """Scaling measurement along one axis.

    ``rows`` pairs each grid value with its mean fit wall time. For the d and
    n axes ``loglog_slope`` is the least-squares slope of log(time) against
    log(value); for the p axis ``linear_slope`` and ``r_squared`` describe
    the straight-line fit of time against p.
    """

    axis: str
    rows: list
    loglog_slope: float | None = None
    linear_slope: float | None = None
    r_squared: float | None = None


def _counts_for_total(n: int) -> tuple[int, int, int]:
    # 30/40/30 percent split; multiples of 20 keep every class size even
    if n % 20 != 0:
        raise ParameterError(f"total point count must be a multiple of 20, got {n}")
    return (3 * n // 10, 4 * n // 10, 3 * n // 10)


def bench_scaling(axis: str, grid, base_cfg: WdaConfig | None = None,
                  repeats: int = 1, seed: int = 0) -> BenchResult:
    """Time :func:`fit` along a grid of one problem-size axis.

    ``axis`` is "p" (subspace dimension, d=10, counts (30,40,30)),
    "d" (feature dimension, counts (30,40,30), p from the config), or
    "n" (total points at a 30/40/30 percent split, d=50). Dataset generation
    and standardization are excluded from the timings, and one untimed
    warmup fit runs per grid value before the timed repeats. Times are
    averaged over ``repeats`` fits with distinct starting projections.

    A unit ridge is added to the within covariance unless the config already
    carries one: the d sweep exceeds the point count, where C_w is singular
    and the unridged trace ratio is ill-posed.
    """
    if axis not in ("p", "d", "n"):
        raise ParameterError(f"axis must be one of p, d, n; got {axis!r}")
    grid = [int(g) for g in grid]
    if len(grid) < 3 or sorted(grid) != grid:
        raise ParameterError("grid must be sorted ascending with length >= 3")
    if repeats < 1:
        raise ParameterError(f"repeats must be >= 1, got {repeats}")
    cfg = base_cfg or WdaConfig()
    if cfg.epsilon == 0.0:
        cfg = replace(cfg, epsilon=1.0)

    rows = []
    for value in grid:
        if axis == "p":
            dataset = standardize(make_synthetic(10, (30, 40, 30),
                                                 derive_seed(seed, 10)))
            run = replace(cfg, p=value)
        elif axis == "d":
            dataset = standardize(make_synthetic(value, (30, 40, 30),
                                                 derive_seed(seed, value)))
            run = cfg
        else:
            dataset = standardize(make_synthetic(50, _counts_for_total(value),
                                                 derive_seed(seed, value)))
            run = cfg
        fit(dataset, replace(run, seed=derive_seed(cfg.seed, repeats)))  # warmup
        times = []
        for r in range(repeats):
            run_r = replace(run, seed=derive_seed(cfg.seed, r))
            tic = time.perf_counter()
            fit(dataset, run_r)
            times.append(time.perf_counter() - tic)
        rows.append((value, float(np.mean(times))))

    values = np.array([v for v, _ in rows], dtype=float)
    times = np.array([t for _, t in rows], dtype=float)
    if axis == "p":
        slope, intercept = np.polyfit(values, times, 1)
        fitted = slope * values + intercept
        ss_res = float(np.sum((times - fitted) ** 2))
        ss_tot = float(np.sum((times - times.mean()) ** 2))
        r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
        return BenchResult(axis=axis, rows=rows, linear_slope=float(slope),
                           r_squared=r2)
    slope = float(np.polyfit(np.log(values), np.log(times), 1)[0])
    return BenchResult(axis=axis, rows=rows, loglog_slope=slope)
