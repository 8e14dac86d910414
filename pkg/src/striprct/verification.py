"""Cross-checks of the closed-form results against exhaustive enumeration."""

from __future__ import annotations

import numpy as np

from .design import DesignDims, PotentialOutcomeTable, compute_means, population_contrast, Contrast
from .oracle import exact_block_moments, exact_estimator_moments
from .variance import delta0_bias, sampling_variance, theorem1_covariance

SHAPES = ((2, 2), (2, 3), (3, 2), (3, 3))


def random_integer_table(rng: np.random.Generator, B: int, P: int, Q: int, high: int = 10) -> PotentialOutcomeTable:
    return PotentialOutcomeTable(rng.integers(0, high, size=(B, P, Q, P, Q)).astype(float))


def random_contrast(rng: np.random.Generator, P: int, Q: int) -> Contrast:
    while True:
        l = rng.standard_normal(P * Q)
        l -= l.mean()
        if np.abs(l).max() > 1e-3:
            return Contrast(l, P, Q)


def formula_covariance_matrix(table: PotentialOutcomeTable, b: int) -> np.ndarray:
    d = table.dims
    ts = d.treatments()
    return np.array([[theorem1_covariance(table, b, t1, t2) for t2 in ts] for t1 in ts])


def run_verification(trials: int = 50, seed: int = 0, B_max: int = 2):
    """Random small instances; returns ``(all_ok, report_lines)``."""
    rng = np.random.default_rng(seed)
    worst = {"covariance": 0.0, "mean": 0.0, "unbiased": 0.0, "variance": 0.0, "bias": 0.0}
    for i in range(trials):
        P, Q = SHAPES[i % len(SHAPES)]
        B = int(rng.integers(2, B_max + 1))
        table = random_integer_table(rng, B, P, Q)
        l = random_contrast(rng, P, Q)
        scale = max(1.0, table.scale())
        means = compute_means(table).block_treatment_means
        for b in range(B):
            mean, cov = exact_block_moments(table, b)
            worst["covariance"] = max(worst["covariance"], np.abs(formula_covariance_matrix(table, b) - cov).max() / scale**2)
            worst["mean"] = max(worst["mean"], np.abs(mean - means[b]).max() / scale)
        m = exact_estimator_moments(table, l)
        lscale = scale * np.abs(l.l).sum()
        worst["unbiased"] = max(worst["unbiased"], abs(m.mean_tau_hat - population_contrast(table, l)) / lscale)
        worst["variance"] = max(worst["variance"], abs(m.var_tau_hat - sampling_variance(table, l)) / lscale**2)
        gap = m.mean_var0 - m.var_tau_hat
        worst["bias"] = max(worst["bias"], abs(gap - delta0_bias(table, l)) / lscale**2)

    ok = True
    lines = []
    for name, err in worst.items():
        passed = err <= 1e-10
        ok &= passed
        lines.append(f"{'PASS' if passed else 'FAIL'}  {name:<10} max scaled error {err:.3e} over {trials} tables")
    return ok, lines
