"""Contrast estimates, the conservative variance estimator and normal intervals.

Scalar and batch versions reduce over contiguous last axes with numpy's
pairwise summation, so both give bit-stable results for the same inputs.
"""

from __future__ import annotations

from dataclasses import dataclass
from statistics import NormalDist

import numpy as np

from .design import Contrast, DesignError


@dataclass(frozen=True)
class ContrastEstimate:
    per_block: np.ndarray
    pooled: float
    contrast: Contrast | None = None

    @classmethod
    def from_block_estimates(cls, per_block, contrast: Contrast | None = None) -> ContrastEstimate:
        per_block = np.ascontiguousarray(per_block, dtype=float)
        if per_block.ndim != 1 or per_block.size == 0:
            raise DesignError("per-block estimates must be a non-empty vector")
        per_block.setflags(write=False)
        return cls(per_block, float(_mean(per_block)), contrast)

    @property
    def B(self) -> int:
        return self.per_block.size


@dataclass(frozen=True)
class ConfidenceInterval:
    center: float
    half_width: float
    level: float
    z: float

    @property
    def lower(self) -> float:
        return self.center - self.half_width

    @property
    def upper(self) -> float:
        return self.center + self.half_width

    def contains(self, value: float) -> bool:
        return self.lower <= value <= self.upper


def _mean(x: np.ndarray) -> np.ndarray:
    return np.sum(x, axis=-1) / x.shape[-1]


def _centered_sum_of_squares(x: np.ndarray) -> np.ndarray:
    # shifting by the first entry makes equal inputs give exactly zero
    x = x - x[..., :1]
    d = x - _mean(x)[..., None]
    return np.sum(d * d, axis=-1)


def estimate_contrast(y_obs: np.ndarray, l: Contrast) -> ContrastEstimate:
    """Per-block and pooled estimates from observed outcomes ``y_obs[b, p, q]``."""
    y_obs = np.asarray(y_obs, dtype=float)
    if y_obs.ndim != 3 or y_obs.shape[1:] != (l.P, l.Q):
        raise DesignError(f"observed outcomes of shape {y_obs.shape} do not match contrast P={l.P}, Q={l.Q}")
    per_block = block_estimates_batch(y_obs[None], l.l[None, :])[0, :, 0]
    return ContrastEstimate.from_block_estimates(per_block, l)


def block_estimates_batch(y_obs: np.ndarray, coefs: np.ndarray) -> np.ndarray:
    """``y_obs`` (K, B, P, Q) and contrast rows ``coefs`` (S, PQ) -> (K, B, S)."""
    K, B, P, Q = y_obs.shape
    coefs = np.asarray(coefs, dtype=float)
    # explicit product-sum rather than BLAS, so every batch shape rounds identically
    return np.sum(y_obs.reshape(K, B, 1, P * Q) * coefs[None, None], axis=-1)


def conservative_variance(est: ContrastEstimate) -> float:
    """Between-block variance of the block estimates divided by B."""
    B = est.B
    if B < 2:
        raise DesignError("conservative variance needs at least two blocks")
    return float(_centered_sum_of_squares(est.per_block) / (B * (B - 1)))


def conservative_variance_batch(per_block: np.ndarray) -> np.ndarray:
    """Conservative variance along the last axis (blocks)."""
    per_block = np.ascontiguousarray(per_block, dtype=float)
    B = per_block.shape[-1]
    if B < 2:
        raise DesignError("conservative variance needs at least two blocks")
    return _centered_sum_of_squares(per_block) / (B * (B - 1))


def normal_quantile(level: float) -> float:
    """Two-sided critical value: the (1 + level) / 2 standard normal quantile."""
    if not 0.0 < level < 1.0:
        raise DesignError(f"confidence level must lie in (0, 1), got {level}")
    return NormalDist().inv_cdf((1.0 + level) / 2.0)


def confidence_interval(est: ContrastEstimate, level: float = 0.95) -> ConfidenceInterval:
    z = normal_quantile(level)
    return ConfidenceInterval(est.pooled, z * float(np.sqrt(conservative_variance(est))), level, z)
