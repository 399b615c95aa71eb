"""Bi-level driver: alternate transport-plan refresh and trace-ratio solves.

The fitted objective is ``f(P) = tr(P^T C_b(P) P) / tr(P^T C_w(P) P)`` where
both cross-covariances depend on P through the entropic transport plans of
the projected classes. Each outer iteration freezes the plans at the current
projection, assembles C_b and C_w, and replaces P with the solution of the
resulting fixed-coefficient trace-ratio problem. At ``lam = 0`` the plans are
uniform and the method reduces exactly to classical linear discriminant
analysis.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .balancing import BalancingConfig
from .covariance import class_pairs, cross_covariances
from .data import LabeledDataset
from .errors import DimensionError, DomainError, ParameterError
from .traceratio import (Projection, projection_cols, random_projection,
                         subspace_distance, top_eigenbasis, trace_ratio,
                         tropt_scf)

# Slack for the empirical objective-monotonicity flag on traces.
MONOTONE_SLACK = 1e-10


@dataclass
class WdaConfig:
    """Driver configuration.

    ``lam`` controls the locality of the transport plans (0 recovers LDA);
    ``epsilon`` is an optional ridge added to C_w for rank-deficient data.
    ``init`` selects the starting projection when none is given: "random"
    (seeded), "pca", or "lda".
    """

    lam: float = 0.01
    p: int = 2
    tol: float = 1e-5
    max_outer_iter: int = 200
    epsilon: float = 0.0
    balancing: BalancingConfig = field(default_factory=BalancingConfig)
    tropt_tol: float = 1e-5
    tropt_max_iter: int = 100
    seed: int = 0
    init: str = "random"

    def __post_init__(self):
        if self.lam < 0:
            raise ParameterError(f"lam must be >= 0, got {self.lam}")
        if self.p < 1:
            raise ParameterError(f"p must be >= 1, got {self.p}")
        if self.tol <= 0 or self.tropt_tol <= 0:
            raise ParameterError("tolerances must be positive")
        if self.max_outer_iter < 1 or self.tropt_max_iter < 1:
            raise ParameterError("iteration caps must be >= 1")
        if self.epsilon < 0:
            raise ParameterError(f"epsilon must be >= 0, got {self.epsilon}")
        if self.init not in ("random", "pca", "lda"):
            raise ParameterError(f"unknown init {self.init!r}")


@dataclass
class ConvergenceTrace:
    """Per-outer-iteration record of one fit.

    ``objective[k]`` is f at the k-th iterate with plans refreshed there;
    ``subspace_step[k]`` the largest principal angle to the next iterate;
    ``inner_iterations[k]`` the balancing iteration count per class pair.
    ``monotone`` reports whether the objective was nondecreasing within
    ``MONOTONE_SLACK``; small dips can occur and are surfaced rather than
    raised, since the ascent property is empirical, not guaranteed.
    """

    objective: np.ndarray
    subspace_step: np.ndarray
    inner_iterations: list
    wall_time: np.ndarray
    converged: bool
    iterations: int
    warnings: list = field(default_factory=list)

    @property
    def monotone(self) -> bool:
        return self.worst_dip <= MONOTONE_SLACK

    @property
    def worst_dip(self) -> float:
        diffs = np.diff(self.objective)
        return float(max(0.0, -diffs.min())) if len(diffs) else 0.0


def transform(P, X: np.ndarray) -> np.ndarray:
    """Project points: returns ``P^T X`` of shape (p, n)."""
    cols = projection_cols(P)
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] != cols.shape[0]:
        raise DimensionError(f"X must be {cols.shape[0]}-by-n", actual=X.shape)
    return cols.T @ X


def objective(P, data: LabeledDataset, lam: float,
              cfg: WdaConfig | None = None, epsilon: float | None = None) -> float:
    """Evaluate f(P) with plans computed fresh at P.

    The ridge ``epsilon`` enters C_w exactly as during fitting (defaults to
    the config's value, or 0).
    """
    cfg = cfg or WdaConfig(lam=lam)
    eps = cfg.epsilon if epsilon is None else epsilon
    cov = cross_covariances(P, data, lam, cfg.balancing, eps)
    return trace_ratio(P, cov.cb, cov.cw)


def lda_scatter(data: LabeledDataset) -> tuple[np.ndarray, np.ndarray]:
    """Uniform-weight scatter matrices (the lam = 0 covariances).

    S_b sums (1 / (n_c n_c')) weighted outer products over class pairs,
    S_w sums (1 / n_c^2) weighted outer products within classes.
    """
    if not data.standardized:
        raise DomainError("dataset must be standardized")
    d = data.dim
    between, within = class_pairs(data.n_classes)

    def scatter(pairs):
        C = np.zeros((d, d))
        for ci, cj in pairs:
            X, Y = data.matrices[ci], data.matrices[cj]
            n, m = X.shape[1], Y.shape[1]
            diffs = (X[:, :, None] - Y[:, None, :]).reshape(d, n * m)
            C += (diffs @ diffs.T) / (n * m)
        return 0.5 * (C + C.T)

    return scatter(between), scatter(within)


def lda_fit(data: LabeledDataset, p: int, tol: float = 1e-5,
            epsilon: float = 0.0, max_iter: int = 100) -> Projection:
    """Classical LDA as one trace-ratio solve on the uniform scatter matrices."""
    if data.n_classes < 2:
        raise DomainError("LDA needs at least two classes")
    sb, sw = lda_scatter(data)
    sw = sw + epsilon * np.eye(data.dim)
    P0, _ = top_eigenbasis(sb, p)
    return tropt_scf(sb, sw, p, P0, tol=tol, max_iter=max_iter).P


def pca_projection(data: LabeledDataset, p: int) -> Projection:
    """Top principal directions of the pooled (centered) data."""
    X, _ = data.pooled()
    X = X - X.mean(axis=1, keepdims=True)
    cov = (X @ X.T) / max(1, X.shape[1] - 1)
    P, _ = top_eigenbasis(cov, p)
    return P


def initial_projection(data: LabeledDataset, cfg: WdaConfig) -> Projection:
    if cfg.init == "pca":
        return pca_projection(data, cfg.p)
    if cfg.init == "lda":
        return lda_fit(data, cfg.p, tol=cfg.tropt_tol, epsilon=cfg.epsilon)
    return random_projection(data.dim, cfg.p, cfg.seed)


def fit(data: LabeledDataset, cfg: WdaConfig,
        P0=None) -> tuple[Projection, ConvergenceTrace]:
    """Run the bi-level iteration until the projection stops moving.

    Per outer iteration: refresh the per-pair transport plans at the current
    projection (warm-started from the previous iteration), assemble C_b and
    C_w by factored products, record f, then solve the frozen trace-ratio
    problem initialized at the current projection. Stops when the largest
    principal angle between successive projections falls below ``cfg.tol``.

    Non-convergence at ``max_outer_iter`` returns the best iterate with
    ``trace.converged = False``; inner-solver warnings are collected in
    ``trace.warnings``.
    """
    if not data.standardized:
        raise DomainError("dataset must be standardized before fitting")
    if cfg.p > data.dim:
        raise ParameterError(f"p={cfg.p} exceeds the feature dimension {data.dim}")
    P = initial_projection(data, cfg) if P0 is None else Projection(projection_cols(P0))

    objective_vals = []
    steps = []
    inner = []
    times = []
    warnings = []
    warm: dict = {}
    converged = False
    iterations = 0
    for iterations in range(1, cfg.max_outer_iter + 1):
        tic = time.perf_counter()
        cov = cross_covariances(P, data, cfg.lam, cfg.balancing, cfg.epsilon,
                                warm_start=warm)
        warm = cov.warm_start
        objective_vals.append(trace_ratio(P, cov.cb, cov.cw))
        inner.append([g.iterations for g in cov.diagnostics])
        for g in cov.diagnostics:
            if not g.converged:
                warnings.append(f"iteration {iterations}: balancing for pair "
                                f"{g.pair} stopped at residual {g.residual:.2e}")
            elif g.inner_warning:
                warnings.append(f"iteration {iterations}: inner eigensolver "
                                f"warning for pair {g.pair}")
        result = tropt_scf(cov.cb, cov.cw, cfg.p, P,
                           tol=cfg.tropt_tol, max_iter=cfg.tropt_max_iter)
        if not result.converged:
            warnings.append(f"iteration {iterations}: trace-ratio solve hit "
                            f"its iteration cap")
        step = subspace_distance(result.P, P)
        steps.append(step)
        P = result.P
        times.append(time.perf_counter() - tic)
        if step < cfg.tol:
            converged = True
            break

    trace = ConvergenceTrace(objective=np.asarray(objective_vals),
                             subspace_step=np.asarray(steps),
                             inner_iterations=inner,
                             wall_time=np.asarray(times),
                             converged=converged, iterations=iterations,
                             warnings=warnings)
    return P, trace
