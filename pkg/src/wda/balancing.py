"""Entropic optimal-transport plans via matrix balancing.

Computes the transport plan between two projected point clouds with uniform
marginals (1/n on rows, 1/m on columns). The plan factorizes as
``D(u) K D(v)`` where ``K = exp(-lam * M)`` is the element-wise exponential of
the squared-distance cost matrix and ``(u, v)`` are positive diagonal
scalings. Two solvers are provided:

* :func:`sk_iterate` -- the classical Sinkhorn-Knopp alternating update,
* :func:`acc_sk` -- an accelerated scheme that treats the Sinkhorn fixed point
  as the dominant eigenvector of the eigenvector-dependent eigenproblem
  ``J_R(v) v = mu v`` and solves it by self-consistent field iteration.

The accelerated solver converges in a handful of outer iterations on kernels
with tiny entries, where plain Sinkhorn stalls.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import ArpackError, ArpackNoConvergence, LinearOperator, eigs

from .errors import DimensionError, DomainError, ParameterError

# Kernel entries below this are clamped up to preserve strict positivity,
# which the Perron-Frobenius argument behind acc_sk requires.
KERNEL_FLOOR = 1e-300

# Dense eigensolve below this many columns; ARPACK needs k < m - 1 anyway.
_DENSE_EIG_CUTOFF = 8


@dataclass(frozen=True)
class KernelMatrix:
    """Element-wise exponential kernel ``exp(-lam * M)`` of a cost matrix.

    Entries are strictly positive and at most 1 (costs are nonnegative).
    """

    entries: np.ndarray
    lam: float

    @property
    def shape(self) -> tuple[int, int]:
        return self.entries.shape


@dataclass(frozen=True)
class ScalingPair:
    """Positive diagonal scalings (u, v), defined up to a common factor."""

    u: np.ndarray
    v: np.ndarray


@dataclass(frozen=True)
class TransportPlan:
    """Nonnegative plan with prescribed uniform marginals.

    ``residual`` records the achieved maximum violation of the row marginal
    1/n and the column marginal 1/m.
    """

    entries: np.ndarray
    row_marginal: float
    col_marginal: float
    residual: float

    @property
    def shape(self) -> tuple[int, int]:
        return self.entries.shape


@dataclass
class BalancingConfig:
    """Stopping parameters for the balancing solvers.

    ``eig_tol`` defaults to ``1e-2 * tol`` when left as None. ``eig_solver``
    selects the inner dominant-eigenvector method for :func:`acc_sk`:
    ``"auto"`` uses a dense eigensolve for small column counts and ARPACK
    (implicitly restarted Arnoldi, matrix-free) otherwise; ``"power"`` forces
    warm-started power iteration.
    """

    tol: float = 1e-5
    max_iter: int = 100
    eig_tol: float | None = None
    eig_max_iter: int = 200
    eig_solver: str = "auto"

    def __post_init__(self):
        if self.tol <= 0:
            raise ParameterError(f"tol must be positive, got {self.tol}")
        if self.max_iter < 1:
            raise ParameterError(f"max_iter must be >= 1, got {self.max_iter}")
        if self.eig_tol is not None and self.eig_tol <= 0:
            raise ParameterError(f"eig_tol must be positive, got {self.eig_tol}")
        if self.eig_max_iter < 1:
            raise ParameterError(f"eig_max_iter must be >= 1, got {self.eig_max_iter}")
        if self.eig_solver not in ("auto", "power", "arpack", "dense"):
            raise ParameterError(f"unknown eig_solver {self.eig_solver!r}")

    @property
    def resolved_eig_tol(self) -> float:
        return self.eig_tol if self.eig_tol is not None else 1e-2 * self.tol


@dataclass
class BalanceResult:
    """Outcome of a balancing run.

    ``step_history[k]`` is the 2-norm distance between successive iterates
    after normalizing each to unit 1-norm; ``converged`` reports whether the
    final step fell below the configured tolerance. A run that exhausts
    ``max_iter`` still returns its best iterate rather than raising.
    """

    scaling: ScalingPair
    iterations: int
    converged: bool
    step_history: np.ndarray
    inner_warning: bool = False
    inner_iterations: list = field(default_factory=list)

    @property
    def final_step(self) -> float:
        return float(self.step_history[-1]) if len(self.step_history) else 0.0


def _kernel_entries(K) -> np.ndarray:
    entries = K.entries if isinstance(K, KernelMatrix) else np.asarray(K, dtype=float)
    if entries.ndim != 2:
        raise DimensionError("kernel must be a 2-d matrix", actual=entries.shape)
    if np.any(entries <= 0) or not np.all(np.isfinite(entries)):
        raise DomainError("kernel entries must be strictly positive and finite")
    return entries


def _check_positive_vector(v: np.ndarray, name: str) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.ndim != 1:
        raise DimensionError(f"{name} must be a vector", actual=v.shape)
    if np.any(v <= 0) or not np.all(np.isfinite(v)):
        raise DomainError(f"{name} must be strictly positive and finite")
    return v


def _normalize(v: np.ndarray) -> np.ndarray:
    """Scale to unit 1-norm with positive entries (the scale-free representative)."""
    return v / np.sum(np.abs(v))


def build_cost_matrix(P, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Squared Euclidean distances between projected columns of X and Y.

    Entry (i, j) is ``||P^T x_i - P^T y_j||_2^2``. X and Y have shape (d, n)
    and (d, m); P is a d-by-p matrix with orthonormal columns.
    """
    cols = getattr(P, "cols", P)
    cols = np.asarray(cols, dtype=float)
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if cols.ndim != 2:
        raise DimensionError("projection must be a 2-d matrix", actual=cols.shape)
    if X.ndim != 2 or Y.ndim != 2:
        raise DimensionError("point sets must be 2-d matrices",
                             actual=(X.shape, Y.shape))
    d = cols.shape[0]
    if X.shape[0] != d or Y.shape[0] != d:
        raise DimensionError(
            f"point sets must share the projection's row dimension {d}",
            expected=d, actual=(X.shape[0], Y.shape[0]))
    A = cols.T @ X
    B = cols.T @ Y
    sq_a = np.sum(A * A, axis=0)
    sq_b = np.sum(B * B, axis=0)
    M = sq_a[:, None] + sq_b[None, :] - 2.0 * (A.T @ B)
    # rounding can produce tiny negatives for near-coincident points
    np.maximum(M, 0.0, out=M)
    if X is Y or (X.shape == Y.shape and np.array_equal(X, Y)):
        np.fill_diagonal(M, 0.0)
    return M


def build_kernel(M: np.ndarray, lam: float) -> KernelMatrix:
    """Element-wise exponential kernel ``exp(-lam * M)`` with underflow guard.

    ``lam = 0`` yields the all-ones matrix. Entries that underflow are clamped
    to ``KERNEL_FLOOR`` to keep the matrix strictly positive.
    """
    if lam < 0:
        raise ParameterError(f"regularization strength must be >= 0, got {lam}")
    M = np.asarray(M, dtype=float)
    if M.ndim != 2:
        raise DimensionError("cost matrix must be 2-d", actual=M.shape)
    if np.any(M < 0):
        raise DomainError("cost matrix entries must be nonnegative")
    entries = np.exp(-lam * M)
    np.maximum(entries, KERNEL_FLOOR, out=entries)
    return KernelMatrix(entries=entries, lam=float(lam))


def map_R(K, v: np.ndarray) -> np.ndarray:
    """One Sinkhorn sweep expressed as a map on v.

    ``R(v) = (1/m) 1 ./ (K^T ((1/n) 1 ./ (K v)))``. R is positively
    homogeneous of degree 1 and its fixed point is the balancing solution.
    """
    entries = _kernel_entries(K)
    v = _check_positive_vector(v, "v")
    n, m = entries.shape
    if v.shape[0] != m:
        raise DimensionError(f"v must have length {m}", expected=m, actual=v.shape[0])
    u = (1.0 / n) / (entries @ v)
    return (1.0 / m) / (entries.T @ u)


def jacobian_apply(K, v: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Matrix-free product ``J_R(v) w`` with the Jacobian of :func:`map_R`.

    Uses the closed form ``(m/n) D^2(R(v)) K^T D^2(S(v)) K w`` where
    ``S(v) = 1 ./ (K v)``; no m-by-m matrix is formed. For positive v,
    ``J_R(v) v = R(v)`` holds identically.
    """
    entries = _kernel_entries(K)
    v = _check_positive_vector(v, "v")
    w = np.asarray(w, dtype=float)
    n, m = entries.shape
    if v.shape[0] != m or w.shape[0] != m:
        raise DimensionError(f"v and w must have length {m}",
                             expected=m, actual=(v.shape[0], w.shape[0]))
    Sv = 1.0 / (entries @ v)
    Rv = (1.0 / m) / (entries.T @ ((1.0 / n) * Sv))
    return (m / n) * (Rv * Rv) * (entries.T @ ((Sv * Sv) * (entries @ w)))


def _jacobian_operator(entries: np.ndarray, v: np.ndarray):
    """Precompute R(v), S(v) and return the J_R(v) matvec plus R(v)."""
    n, m = entries.shape
    Sv = 1.0 / (entries @ v)
    Rv = (1.0 / m) / (entries.T @ ((1.0 / n) * Sv))
    scale = m / n
    Rv2 = Rv * Rv
    Sv2 = Sv * Sv

    def matvec(w):
        return scale * Rv2 * (entries.T @ (Sv2 * (entries @ np.asarray(w, dtype=float).ravel())))

    return matvec, Rv


def _materialize_jacobian(entries: np.ndarray, v: np.ndarray) -> np.ndarray:
    n, m = entries.shape
    Sv = 1.0 / (entries @ v)
    Rv = (1.0 / m) / (entries.T @ ((1.0 / n) * Sv))
    return (m / n) * (Rv * Rv)[:, None] * (entries.T @ ((Sv * Sv)[:, None] * entries))


def _positive_representative(w: np.ndarray) -> np.ndarray:
    """Fix the sign of a computed Perron vector and enforce strict positivity."""
    if w[int(np.argmax(np.abs(w)))] < 0:
        w = -w
    return np.maximum(np.abs(w), KERNEL_FLOOR)


def _power_iteration(matvec, v0: np.ndarray, tol: float, max_iter: int):
    w = v0 / np.linalg.norm(v0)
    it = 0
    converged = False
    for it in range(1, max_iter + 1):
        w_new = matvec(w)
        w_new = w_new / np.linalg.norm(w_new)
        if np.linalg.norm(w_new - w) < tol:
            w = w_new
            converged = True
            break
        w = w_new
    return w, it, converged


def _arpack_eigenvector(matvec, v0: np.ndarray, tol: float, max_iter: int):
    m = v0.shape[0]
    op = LinearOperator((m, m), matvec=matvec, dtype=float)
    try:
        _, vecs = eigs(op, k=1, which="LM", v0=v0.copy(), tol=tol, maxiter=max_iter)
        return np.real(vecs[:, 0]), False
    except ArpackNoConvergence as exc:
        if exc.eigenvectors is not None and exc.eigenvectors.shape[1] > 0:
            return np.real(exc.eigenvectors[:, 0]), True
    except ArpackError:
        pass
    return None, True


def _dominant_eigenvector(entries: np.ndarray, v: np.ndarray, cfg: BalancingConfig):
    """Dominant eigenvector of J_R(v), warm-started at v.

    Returns ``(w, info, warning)`` where info records the solver work (power
    matvec count or solver label). The dominant eigenpair is simple because
    J_R(v) is entrywise positive. The "auto" strategy solves tiny problems
    densely and otherwise runs warm-started power iteration, escalating to
    ARPACK when the eigengap is too small for power iteration to meet the
    tolerance within its budget.
    """
    n, m = entries.shape
    solver = cfg.eig_solver
    if solver == "auto" and m < _DENSE_EIG_CUTOFF:
        solver = "dense"
    elif solver == "arpack" and m < 3:
        solver = "dense"

    if solver == "dense":
        J = _materialize_jacobian(entries, v)
        vals, vecs = np.linalg.eig(J)
        w = np.real(vecs[:, int(np.argmax(vals.real))])
        return _positive_representative(w), "dense", False

    matvec, _ = _jacobian_operator(entries, v)
    if solver == "arpack":
        w, warn = _arpack_eigenvector(matvec, v, cfg.resolved_eig_tol,
                                      cfg.eig_max_iter)
        if w is not None:
            return _positive_representative(w), "arpack", warn
        solver = "power"  # ARPACK breakdown

    w, it, ok = _power_iteration(matvec, v, cfg.resolved_eig_tol, cfg.eig_max_iter)
    if ok or solver == "power":
        return _positive_representative(w), it, not ok

    # auto: power iteration stalled (tiny eigengap); hand its iterate to ARPACK
    w2, warn = _arpack_eigenvector(matvec, _positive_representative(w),
                                   cfg.resolved_eig_tol, cfg.eig_max_iter)
    if w2 is not None:
        return _positive_representative(w2), "arpack", warn
    return _positive_representative(w), it, True


def sk_iterate(K, cfg: BalancingConfig | None = None) -> BalanceResult:
    """Classical Sinkhorn-Knopp balancing.

    Alternates ``v <- (1/m) 1 ./ (K^T u)`` and ``u <- (1/n) 1 ./ (K v)``
    from the uniform start until the successive-iterate distance drops below
    ``cfg.tol``. A run that exhausts ``cfg.max_iter`` returns its best iterate
    with ``converged=False``; stalling is expected on badly scaled kernels.
    """
    cfg = cfg or BalancingConfig()
    entries = _kernel_entries(K)
    n, m = entries.shape
    v = _normalize(np.full(m, 1.0 / m))
    steps = []
    converged = False
    iterations = 0
    for iterations in range(1, cfg.max_iter + 1):
        v_new = _normalize(map_R(entries, v))
        step = float(np.linalg.norm(v_new - v))
        steps.append(step)
        v = v_new
        if step < cfg.tol:
            converged = True
            break
    u = (1.0 / n) / (entries @ v)
    return BalanceResult(scaling=ScalingPair(u=u, v=v), iterations=iterations,
                         converged=converged, step_history=np.asarray(steps))


def acc_sk(K, cfg: BalancingConfig | None = None,
           v0: np.ndarray | None = None) -> BalanceResult:
    """Accelerated Sinkhorn-Knopp via self-consistent field iteration.

    Each outer step replaces v with the dominant eigenvector of the frozen
    Jacobian ``J_R(v)``, normalized to unit 1-norm with positive sign; the
    loop stops when successive normalized iterates are closer than
    ``cfg.tol`` in the 2-norm. Finishes with ``u = (1/n) 1 ./ (K v)``.

    ``v0`` optionally warm-starts the iteration (defaults to uniform 1/m).
    Inner eigensolver failures degrade to a flagged result, never an
    exception.
    """
    cfg = cfg or BalancingConfig()
    entries = _kernel_entries(K)
    n, m = entries.shape
    if v0 is None:
        v = _normalize(np.full(m, 1.0 / m))
    else:
        v = _normalize(_check_positive_vector(v0, "v0"))
        if v.shape[0] != m:
            raise DimensionError(f"v0 must have length {m}", expected=m,
                                 actual=v.shape[0])
    steps = []
    inner = []
    warning = False
    converged = False
    iterations = 0
    for iterations in range(1, cfg.max_iter + 1):
        w, info, warn = _dominant_eigenvector(entries, v, cfg)
        inner.append(info)
        warning = warning or warn
        v_new = _normalize(w)
        step = float(np.linalg.norm(v_new - v))
        steps.append(step)
        v = v_new
        if step < cfg.tol:
            converged = True
            break
    u = (1.0 / n) / (entries @ v)
    return BalanceResult(scaling=ScalingPair(u=u, v=v), iterations=iterations,
                         converged=converged, step_history=np.asarray(steps),
                         inner_warning=warning, inner_iterations=inner)


def assemble_plan(K, scaling: ScalingPair) -> TransportPlan:
    """Form ``T = D(u) K D(v)`` and record the achieved marginal violation."""
    entries = _kernel_entries(K)
    u = _check_positive_vector(scaling.u, "u")
    v = _check_positive_vector(scaling.v, "v")
    n, m = entries.shape
    if u.shape[0] != n or v.shape[0] != m:
        raise DimensionError("scaling lengths must match the kernel shape",
                             expected=(n, m), actual=(u.shape[0], v.shape[0]))
    T = u[:, None] * entries * v[None, :]
    residual = max(
        float(np.max(np.abs(T.sum(axis=1) - 1.0 / n))),
        float(np.max(np.abs(T.sum(axis=0) - 1.0 / m))),
    )
    return TransportPlan(entries=T, row_marginal=1.0 / n, col_marginal=1.0 / m,
                         residual=residual)


def solve_plan(K, cfg: BalancingConfig | None = None,
               v0: np.ndarray | None = None) -> tuple[TransportPlan, BalanceResult]:
    """Convenience wrapper: run :func:`acc_sk` and assemble the plan."""
    result = acc_sk(K, cfg, v0)
    return assemble_plan(K, result.scaling), result
