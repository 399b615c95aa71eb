"""Trace-ratio optimization by self-consistent field iteration.

Maximizes ``q(P) = tr(P^T A P) / tr(P^T B P)`` over d-by-p matrices with
orthonormal columns, for a fixed symmetric A and symmetric positive definite
B. The maximizer is an orthonormal eigenbasis of the p largest eigenvalues of
``H(P) = A - q(P) B``, which :func:`tropt_scf` computes by freezing q,
solving the symmetric eigenproblem, and repeating. The iteration is monotone
in q and globally convergent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import DimensionError, DomainError, NumericError, ParameterError

# Relative eigengap below which the top-p subspace is ambiguous.
_GAP_RTOL = 1e-10


@dataclass(frozen=True)
class Projection:
    """A d-by-p matrix with orthonormal columns (validated on construction)."""

    cols: np.ndarray

    def __post_init__(self):
        cols = np.asarray(self.cols, dtype=float)
        if cols.ndim != 2:
            raise DimensionError("projection must be a 2-d matrix", actual=cols.shape)
        d, p = cols.shape
        if p > d:
            raise DimensionError(f"subspace dimension {p} exceeds ambient {d}",
                                 expected=d, actual=p)
        gram_err = np.linalg.norm(cols.T @ cols - np.eye(p))
        if gram_err >= 1e-10:
            raise DomainError(
                f"columns are not orthonormal (||P^T P - I||_F = {gram_err:.2e})")
        object.__setattr__(self, "cols", cols)

    @property
    def d(self) -> int:
        return self.cols.shape[0]

    @property
    def p(self) -> int:
        return self.cols.shape[1]


@dataclass
class TroptResult:
    """Solution of one trace-ratio optimization.

    ``trace`` holds the q value at every iterate (nondecreasing within
    roundoff); ``residual`` is the eigen-residual
    ``||H(P) P - P (P^T H(P) P)||_F`` at the returned P; ``degenerate_gap``
    flags a (numerically) tied eigenvalue at the subspace boundary, in which
    case the returned basis follows the deterministic ordering and sign
    conventions but is not the unique maximizer.
    """

    P: Projection
    q: float
    iterations: int
    residual: float
    trace: np.ndarray
    converged: bool
    degenerate_gap: bool = False


def projection_cols(P) -> np.ndarray:
    """Accept a Projection or a bare orthonormal ndarray; return the matrix."""
    if isinstance(P, Projection):
        return P.cols
    return Projection(cols=np.asarray(P, dtype=float)).cols


def random_projection(d: int, p: int, seed: int) -> Projection:
    """Seeded random orthonormal basis: QR of a Gaussian matrix, sign-fixed."""
    if not 1 <= p <= d:
        raise ParameterError(f"need 1 <= p <= d, got p={p}, d={d}")
    rng = np.random.default_rng(seed)
    Q, R = np.linalg.qr(rng.standard_normal((d, p)))
    # make the factorization unique so identical seeds give identical bases
    signs = np.sign(np.diag(R))
    signs[signs == 0] = 1.0
    return Projection(cols=Q * signs)


def trace_ratio(P, A: np.ndarray, B: np.ndarray) -> float:
    """The scalar ``tr(P^T A P) / tr(P^T B P)``.

    Raises DomainError when the denominator is not positive, which signals
    that B is not positive definite on the span of P.
    """
    cols = projection_cols(P)
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    d = cols.shape[0]
    if A.shape != (d, d) or B.shape != (d, d):
        raise DimensionError("A and B must be d-by-d", expected=(d, d),
                             actual=(A.shape, B.shape))
    num = float(np.sum((cols.T @ A) * cols.T))
    den = float(np.sum((cols.T @ B) * cols.T))
    if den <= 0:
        raise DomainError(f"tr(P^T B P) = {den:.3e} is not positive")
    return num / den


def _eigh_descending(H: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Full symmetric eigendecomposition, eigenvalues descending, signs fixed.

    Ties keep the eigensolver's stable ordering; each eigenvector is signed
    so that its component of largest magnitude is positive.
    """
    try:
        w, V = scipy.linalg.eigh(H)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
        raise NumericError(
            "symmetric eigendecomposition failed",
            diagnostics={"shape": H.shape,
                         "frobenius_norm": float(np.linalg.norm(H)),
                         "finite": bool(np.all(np.isfinite(H)))},
        ) from exc
    order = np.argsort(-w, kind="stable")
    w = w[order]
    V = V[:, order]
    flip = V[np.argmax(np.abs(V), axis=0), np.arange(V.shape[1])] < 0
    V[:, flip] = -V[:, flip]
    return w, V


def top_eigenbasis(H: np.ndarray, p: int) -> tuple[Projection, np.ndarray]:
    """Orthonormal eigenbasis of the p algebraically largest eigenvalues.

    Eigenvalues come back in descending order; the sign and tie-breaking
    conventions of :func:`_eigh_descending` make the basis deterministic.
    """
    H = np.asarray(H, dtype=float)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise DimensionError("H must be square", actual=H.shape)
    if not 1 <= p <= H.shape[0]:
        raise ParameterError(f"need 1 <= p <= d, got p={p}, d={H.shape[0]}")
    w, V = _eigh_descending(H)
    return Projection(cols=V[:, :p]), w[:p]


def subspace_distance(P, Q) -> float:
    """Largest principal angle (radians) between the column spans of P and Q.

    Evaluated as ``arccos(sigma_min(P^T Q))`` for well-separated subspaces.
    Near-equal spans make that expression ill-conditioned (arccos at 1), so
    the identical quantity is then computed from the orthogonal complement,
    ``arcsin(sigma_max(Q - P P^T Q))``, which resolves angles down to
    machine precision. Zero iff the spans coincide.
    """
    Pc = projection_cols(P)
    Qc = projection_cols(Q)
    if Pc.shape != Qc.shape:
        raise DimensionError("subspaces must share both dimensions",
                             expected=Pc.shape, actual=Qc.shape)
    cross = Pc.T @ Qc
    smin = float(np.linalg.svd(cross, compute_uv=False)[-1])
    if smin < 0.7:
        return float(np.arccos(np.clip(smin, 0.0, 1.0)))
    sines = np.linalg.svd(Qc - Pc @ cross, compute_uv=False)
    return float(np.arcsin(np.clip(float(sines[0]), 0.0, 1.0)))


def nepv_residual(P, A: np.ndarray, B: np.ndarray, q: float | None = None) -> float:
    """``||H P - P (P^T H P)||_F`` with ``H = A - q B`` evaluated at P."""
    cols = projection_cols(P)
    if q is None:
        q = trace_ratio(cols, A, B)
    H = A - q * B
    HP = H @ cols
    return float(np.linalg.norm(HP - cols @ (cols.T @ HP)))


def tropt_scf(A: np.ndarray, B: np.ndarray, p: int, P0,
              tol: float = 1e-5, max_iter: int = 100) -> TroptResult:
    """Solve the trace-ratio problem by SCF iteration.

    From the current iterate, freeze ``q``, take the top-p eigenbasis of
    ``A - q B``, and stop once the largest principal angle between successive
    subspaces falls below ``tol``. The q sequence is monotone; a decrease
    beyond 1e-12 indicates a broken input (non-symmetric A/B) and raises.
    """
    if tol <= 0:
        raise ParameterError(f"tol must be positive, got {tol}")
    if max_iter < 1:
        raise ParameterError(f"max_iter must be >= 1, got {max_iter}")
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    cols = projection_cols(P0)
    d = cols.shape[0]
    if A.shape != (d, d) or B.shape != (d, d):
        raise DimensionError("A and B must match the projection's row dimension",
                             expected=(d, d), actual=(A.shape, B.shape))
    if p != cols.shape[1]:
        raise ParameterError(f"P0 has {cols.shape[1]} columns, expected p={p}")

    qs: list[float] = []

    def record(q: float):
        if qs and q < qs[-1] - 1e-12:
            raise NumericError(
                f"trace ratio decreased from {qs[-1]:.15g} to {q:.15g}; "
                "A or B is likely not symmetric",
                diagnostics={"iteration": len(qs), "drop": qs[-1] - q})
        qs.append(q)

    converged = False
    degenerate = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        record(trace_ratio(cols, A, B))
        w, V = _eigh_descending(A - qs[-1] * B)
        if p < d:
            gap = float(w[p - 1] - w[p])
            if gap <= _GAP_RTOL * max(1.0, abs(float(w[0]))):
                degenerate = True
        basis = V[:, :p]
        step = subspace_distance(Projection(cols=basis), Projection(cols=cols))
        cols = basis
        if step < tol:
            converged = True
            break

    q = trace_ratio(cols, A, B)
    record(q)
    P = Projection(cols=cols)
    return TroptResult(P=P, q=q, iterations=iterations,
                       residual=nepv_residual(cols, A, B, q),
                       trace=np.asarray(qs), converged=converged,
                       degenerate_gap=degenerate)
