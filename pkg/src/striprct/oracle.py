"""Brute-force randomization moments for small designs.

Everything here is computed by enumerating the per-block assignments and
averaging. Nothing in this module uses the closed-form covariance, variance or
bias formulas; blocks are combined using only their independence.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .design import Contrast, DesignError, PotentialOutcomeTable
from .randomizer import DEFAULT_ENUMERATION_CAP, enumerate_assignments

_INT_LIMIT = 2**20


@dataclass(frozen=True)
class ExactMoments:
    mean_obs: np.ndarray  # (B, P, Q)
    cov_obs: np.ndarray  # (B, PQ, PQ)
    mean_tau_hat: float
    var_tau_hat: float
    mean_var0: float
    n_block_assignments: int


def block_observation_matrix(table: PotentialOutcomeTable, b: int, cap: int = DEFAULT_ENUMERATION_CAP) -> np.ndarray:
    """Observed outcome vectors of block ``b`` under every assignment, shape (P!Q!, PQ)."""
    d = table.dims
    if not 0 <= b < d.B:
        raise DesignError(f"block index {b} out of range for B={d.B}")
    assignments = enumerate_assignments(d, cap)
    yb = table.y[b]
    out = np.empty((len(assignments), d.P * d.Q))
    for i, (rows, cols) in enumerate(assignments):
        for p in range(d.P):
            for q in range(d.Q):
                out[i, p * d.Q + q] = yb[rows[p], cols[q], p, q]
    return out


def _is_small_integer(x: np.ndarray) -> bool:
    return bool(np.all(x == np.round(x)) and np.all(np.abs(x) < _INT_LIMIT))


def _exact_integer_moments(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = x.shape[0]
    xi = x.astype(np.int64).astype(object)
    s1 = xi.sum(axis=0)
    s2 = xi.T.dot(xi)
    mean = np.array([float(Fraction(int(s), n)) for s in s1])
    k = x.shape[1]
    cov = np.empty((k, k))
    for i in range(k):
        for j in range(k):
            cov[i, j] = float(Fraction(n * int(s2[i, j]) - int(s1[i]) * int(s1[j]), n * n))
    return mean, cov


def _float_moments(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n, k = x.shape
    mean = np.array([math.fsum(x[:, j]) / n for j in range(k)])
    dx = x - mean
    cov = np.empty((k, k))
    for i in range(k):
        for j in range(i, k):
            cov[i, j] = cov[j, i] = math.fsum(dx[:, i] * dx[:, j]) / n
    return mean, cov


def exact_block_moments(table: PotentialOutcomeTable, b: int, cap: int = DEFAULT_ENUMERATION_CAP):
    """Exact mean (P, Q) and covariance (PQ, PQ) of block ``b``'s observed outcomes."""
    x = block_observation_matrix(table, b, cap)
    mean, cov = _exact_integer_moments(x) if _is_small_integer(x) else _float_moments(x)
    return mean.reshape(table.dims.P, table.dims.Q), cov


def exact_estimator_moments(table: PotentialOutcomeTable, l: Contrast, cap: int = DEFAULT_ENUMERATION_CAP) -> ExactMoments:
    """Exact moments of the contrast estimate and of the conservative variance estimate."""
    d = table.dims
    l.check_dims(d)
    B = d.B
    means, covs, e1, e2, v = [], [], [], [], []
    n = 0
    for b in range(B):
        x = block_observation_matrix(table, b, cap)
        n = x.shape[0]
        mean, cov = _exact_integer_moments(x) if _is_small_integer(x) else _float_moments(x)
        means.append(mean.reshape(d.P, d.Q))
        covs.append(cov)
        tau = x @ l.l
        m = math.fsum(tau) / n
        var = math.fsum((tau - m) ** 2) / n
        e1.append(m)
        v.append(var)
        e2.append(var + m * m)
    mean_tau = math.fsum(e1) / B
    var_tau = math.fsum(v) / B**2
    second_tau = var_tau + mean_tau**2
    mean_var0 = math.fsum(e2 + [-B * second_tau]) / (B * (B - 1)) if B >= 2 else float("nan")
    return ExactMoments(
        mean_obs=np.array(means),
        cov_obs=np.array(covs),
        mean_tau_hat=mean_tau,
        var_tau_hat=var_tau,
        mean_var0=mean_var0,
        n_block_assignments=n,
    )


def enumerated_permutation_covariance(pairs, k1: int, k2: int) -> float:
    """Covariance of ``x[sigma(k1), 0]`` and ``x[sigma(k2), 1]`` over all N! permutations."""
    x = np.asarray(pairs, dtype=float)
    N = x.shape[0]
    if math.factorial(N) > DEFAULT_ENUMERATION_CAP:
        raise DesignError("too many permutations to enumerate")
    perms = np.array(list(itertools.permutations(range(N))))
    u, w = x[perms[:, k1], 0], x[perms[:, k2], 1]
    n = u.size
    mu, mw = math.fsum(u) / n, math.fsum(w) / n
    return math.fsum((u - mu) * (w - mw)) / n
