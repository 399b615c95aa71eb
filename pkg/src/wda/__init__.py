"""Wasserstein discriminant analysis via bi-level nonlinear eigenvector solvers.

A supervised linear dimensionality reduction library. The inner level
computes entropic optimal-transport plans between projected classes by an
accelerated Sinkhorn scheme (a self-consistent field iteration on the
eigenvector-dependent eigenproblem of the Sinkhorn fixed-point map); the
outer level maximizes the transport-weighted trace ratio by a second
self-consistent field iteration. At zero regularization the method reduces
exactly to classical linear discriminant analysis.
"""

from .balancing import (BalanceResult, BalancingConfig, KernelMatrix,
                        ScalingPair, TransportPlan, acc_sk, assemble_plan,
                        build_cost_matrix, build_kernel, jacobian_apply,
                        map_R, sk_iterate, solve_plan)
from .covariance import (CovariancePair, cross_covariances,
                         cross_covariances_naive, pair_plan,
                         weighted_difference_factor)
from .data import (LabeledDataset, SplitSpec, load_csv, make_synthetic,
                   split, standardize, write_csv)
from .driver import (ConvergenceTrace, WdaConfig, fit, lda_fit, lda_scatter,
                     objective, transform)
from .errors import (DimensionError, DomainError, NumericError,
                     ParameterError, ParseError, WdaError)
from .evaluation import (BenchResult, EvalReport, bench_scaling, evaluate,
                         knn_predict)
from .traceratio import (Projection, TroptResult, random_projection,
                         subspace_distance, top_eigenbasis, trace_ratio,
                         tropt_scf)

__version__ = "0.1.0"

__all__ = [
    "BalanceResult", "BalancingConfig", "KernelMatrix", "ScalingPair",
    "TransportPlan", "acc_sk", "assemble_plan", "build_cost_matrix",
    "build_kernel", "jacobian_apply", "map_R", "sk_iterate", "solve_plan",
    "CovariancePair", "cross_covariances", "cross_covariances_naive",
    "pair_plan", "weighted_difference_factor",
    "LabeledDataset", "SplitSpec", "load_csv", "make_synthetic", "split",
    "standardize", "write_csv",
    "ConvergenceTrace", "WdaConfig", "fit", "lda_fit", "lda_scatter",
    "objective", "transform",
    "DimensionError", "DomainError", "NumericError", "ParameterError",
    "ParseError", "WdaError",
    "BenchResult", "EvalReport", "bench_scaling", "evaluate", "knn_predict",
    "Projection", "TroptResult", "random_projection", "subspace_distance",
    "top_eigenbasis", "trace_ratio", "tropt_scf",
]
