"""Randomization variance of the contrast estimator and quadratic variance estimators.

Covariances of observed outcomes are expressed through three mean squares and
products per block (row, column and row-by-column), combined with Kronecker
delta factors. Quadratic estimators ``t' U t`` of the block estimates ``t``
are represented by ``UEstimatorMatrix``.
"""

from __future__ import annotations

import io
import math

import numpy as np

from .design import (
    Contrast,
    DesignError,
    PotentialOutcomeTable,
    block_contrasts,
    compute_means,
)
from .estimators import ContrastEstimate, _centered_sum_of_squares
from .linalg import jacobi_eigenvalues

CLASS_TOL = 1e-10


def _centered_parts(table: PotentialOutcomeTable, b: int):
    """Row deviations (P, PQ), column deviations (Q, PQ), residuals (P, Q, PQ)."""
    d = table.dims
    if not 0 <= b < d.B:
        raise DesignError(f"block index {b} out of range for B={d.B}")
    m = compute_means(table)
    t = d.n_treatments
    block = m.block_treatment_means[b].reshape(t)
    row = m.row_means[b].reshape(d.P, t)
    col = m.col_means[b].reshape(d.Q, t)
    y = table.y[b].reshape(d.P, d.Q, t)
    resid = y - row[:, None, :] - col[None, :, :] + block
    return row - block, col - block, resid


def _flat(table: PotentialOutcomeTable, pq) -> int:
    p, q = pq
    d = table.dims
    if not (0 <= p < d.P and 0 <= q < d.Q):
        raise DesignError(f"treatment {pq} out of range for P={d.P}, Q={d.Q}")
    return d.treatment_index(p, q)


def mean_products(table: PotentialOutcomeTable, b: int, pq1, pq2) -> tuple[float, float, float]:
    """Row, column and row-by-column mean products for one block and treatment pair.

    Treatments are 0-based ``(p, q)`` tuples.
    """
    d = table.dims
    t1, t2 = _flat(table, pq1), _flat(table, pq2)
    R, C, D = _centered_parts(table, b)
    m_row = d.Q * math.fsum(R[:, t1] * R[:, t2]) / (d.P - 1)
    m_col = d.P * math.fsum(C[:, t1] * C[:, t2]) / (d.Q - 1)
    m_rc = math.fsum((D[:, :, t1] * D[:, :, t2]).ravel()) / ((d.P - 1) * (d.Q - 1))
    return m_row, m_col, m_rc


def _delta_factors(P: int, Q: int, pq1, pq2) -> tuple[int, int]:
    (p1, q1), (p2, q2) = pq1, pq2
    return P * (p1 == p2) - 1, Q * (q1 == q2) - 1


def theorem1_covariance(table: PotentialOutcomeTable, b: int, pq1, pq2) -> float:
    """Randomization covariance of the observed outcomes of ``pq1`` and ``pq2`` in block ``b``."""
    d = table.dims
    m_row, m_col, m_rc = mean_products(table, b, pq1, pq2)
    fp, fq = _delta_factors(d.P, d.Q, pq1, pq2)
    return (fp * m_row + fq * m_col + (fp * fq) * m_rc) / (d.P * d.Q)


def mean_product_matrices(table: PotentialOutcomeTable, b: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """All three mean-product families for block ``b`` as PQ x PQ matrices."""
    d = table.dims
    R, C, D = _centered_parts(table, b)
    D = D.reshape(d.P * d.Q, -1)
    return (
        d.Q * (R.T @ R) / (d.P - 1),
        d.P * (C.T @ C) / (d.Q - 1),
        (D.T @ D) / ((d.P - 1) * (d.Q - 1)),
    )


def _delta_factor_matrices(P: int, Q: int) -> tuple[np.ndarray, np.ndarray]:
    p = np.repeat(np.arange(P), Q)
    q = np.tile(np.arange(Q), P)
    fp = P * (p[:, None] == p[None, :]).astype(np.int64) - 1
    fq = Q * (q[:, None] == q[None, :]).astype(np.int64) - 1
    return fp, fq


def covariance_matrix(table: PotentialOutcomeTable, b: int) -> np.ndarray:
    """Covariance matrix of the observed outcome vector of block ``b`` (PQ x PQ)."""
    d = table.dims
    m_row, m_col, m_rc = mean_product_matrices(table, b)
    fp, fq = _delta_factor_matrices(d.P, d.Q)
    w = (fp * m_row + fq * m_col + (fp * fq) * m_rc) / (d.P * d.Q)
    return (w + w.T) / 2


def block_variances(table: PotentialOutcomeTable, l: Contrast) -> np.ndarray:
    """Randomization variance of each block estimate."""
    l.check_dims(table.dims)
    return np.array([max(0.0, float(l.l @ covariance_matrix(table, b) @ l.l)) for b in range(table.dims.B)])


def sampling_variance(table: PotentialOutcomeTable, l: Contrast) -> float:
    """Randomization variance of the pooled contrast estimate."""
    return math.fsum(block_variances(table, l)) / table.dims.B**2


def delta0_bias(table: PotentialOutcomeTable, l: Contrast) -> float:
    """Bias of the conservative variance estimator: spread of the block contrasts."""
    B = table.dims.B
    if B < 2:
        raise DesignError("bias needs at least two blocks")
    return float(_centered_sum_of_squares(block_contrasts(table, l))) / (B * (B - 1))


def permutation_pair_covariance(pairs, k1: int, k2: int) -> float:
    """Covariance of ``x[sigma(k1), 0]`` and ``x[sigma(k2), 1]`` for a uniform random permutation ``sigma``.

    ``pairs`` is an (N, 2) array; ``k1`` and ``k2`` are 0-based positions.
    """
    x = np.asarray(pairs, dtype=float)
    if x.ndim != 2 or x.shape[1] != 2:
        raise DesignError("pairs must have shape (N, 2)")
    N = x.shape[0]
    if N < 2:
        raise DesignError("need at least two pairs")
    if not (0 <= k1 < N and 0 <= k2 < N):
        raise DesignError("positions out of range")
    c = x - x.mean(axis=0)
    return (N * (k1 == k2) - 1) * math.fsum(c[:, 0] * c[:, 1]) / (N * (N - 1))


# -- quadratic estimators --------------------------------------------------


class UEstimatorMatrix:
    """Symmetric nonnegative definite B x B matrix with diagonal 1/B^2 and zero row sums."""

    __slots__ = ("u",)

    def __init__(self, u, tol: float = CLASS_TOL):
        u = np.array(u, dtype=float)
        B = u.shape[0]
        if u.ndim != 2 or u.shape != (B, B) or B < 2:
            raise DesignError("U must be a square matrix of order >= 2")
        if not np.allclose(u, u.T, rtol=0, atol=tol):
            raise DesignError("U must be symmetric")
        if not np.allclose(np.diag(u), 1 / B**2, rtol=0, atol=tol):
            raise DesignError("U must have every diagonal element equal to 1/B^2")
        if not np.allclose(u.sum(axis=1), 0.0, rtol=0, atol=tol):
            raise DesignError("U must have zero row sums")
        if jacobi_eigenvalues(u)[0] < -tol:
            raise DesignError("U must be nonnegative definite")
        u.setflags(write=False)
        object.__setattr__(self, "u", u)

    def __setattr__(self, name, value):
        raise AttributeError("UEstimatorMatrix is immutable")

    def __repr__(self):
        return f"UEstimatorMatrix(B={self.B})"

    @property
    def B(self) -> int:
        return self.u.shape[0]


def u0_matrix(B: int) -> UEstimatorMatrix:
    """The matrix reproducing the conservative variance estimator."""
    if B < 2:
        raise DesignError("B must be >= 2")
    u = (np.eye(B) - 1.0 / B) / (B * (B - 1))
    return UEstimatorMatrix(u)


def is_u0(u: UEstimatorMatrix) -> bool:
    return np.array_equal(u.u, u0_matrix(u.B).u)


def quadratic_variance_estimator(est: ContrastEstimate, u: UEstimatorMatrix) -> float:
    """``t' U t`` for the vector ``t`` of block estimates.

    Zero row sums make the form invariant to shifting ``t``, so it is evaluated
    on centered estimates. For ``U0`` it reduces to the centered sum of squares
    over B(B-1), evaluated exactly as the conservative estimator does.
    """
    B = u.B
    if est.B != B:
        raise DesignError(f"U has order {B} but there are {est.B} block estimates")
    if is_u0(u):
        return float(_centered_sum_of_squares(est.per_block) / (B * (B - 1)))
    d = est.per_block - est.pooled
    return max(0.0, float(d @ u.u @ d))


def max_eigenvalue(u: UEstimatorMatrix) -> float:
    return float(jacobi_eigenvalues(u.u)[-1])


def minimax_bound(B: int) -> float:
    """Lower bound on the largest eigenvalue of any class member, attained only by U0."""
    return 1.0 / (B * (B - 1))


def random_class_v_matrix(B: int, rng: np.random.Generator, rank: int | None = None) -> UEstimatorMatrix:
    """Random member of the class of admissible U matrices.

    Draws ``K K'`` with column-centered ``K``, averages it over conjugation by
    all cyclic shifts to equalize the diagonal, rescales the diagonal to 1/B^2
    and finally relabels the blocks at random. For B <= 3 the class contains
    only U0.
    """
    if B < 2:
        raise DesignError("B must be >= 2")
    rank = int(rng.integers(1, B)) if rank is None else rank
    while True:
        k = rng.standard_normal((B, rank))
        k -= k.mean(axis=0)
        a0 = k @ k.T
        a = sum(np.roll(np.roll(a0, s, axis=0), s, axis=1) for s in range(B)) / B
        tr = np.trace(a)
        if tr > 1e-8:
            break
    u = a / (B * tr)
    perm = rng.permutation(B)
    u = u[np.ix_(perm, perm)]
    return UEstimatorMatrix((u + u.T) / 2)


def matrix_to_csv(matrix: np.ndarray, labels: list[str]) -> str:
    """Row-major CSV with a header row of column labels and a leading label column."""
    buf = io.StringIO()
    buf.write("," + ",".join(labels) + "\n")
    for lab, row in zip(labels, np.asarray(matrix)):
        buf.write(lab + "," + ",".join(repr(float(v)) for v in row) + "\n")
    return buf.getvalue()
