"""Monte Carlo coverage study of the conservative normal interval.

Outcomes follow a 2 x 3 strip-plot model whose block means are
``b + b**h * psi(pq)``, so the conservative estimator is unbiased at ``h = 0``
and biased upward for ``h > 0``.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import streams
from .design import Contrast, DesignDims, DesignError, PotentialOutcomeTable, population_contrast
from .estimators import block_estimates_batch, conservative_variance_batch, normal_quantile
from .randomizer import draw_permutations, observe_batch
from .variance import delta0_bias

P_SIM, Q_SIM = 2, 3
DEFAULT_SEED = 20190101
DEFAULT_REPS = 10_000
DEFAULT_H = (0.0, 0.5)
DEFAULT_B = (20, 40, 60)
CHUNK_SIZE = 1000
THREADS_ENV = "STRIP_RCT_THREADS"


def psi(p: int, q: int) -> float:
    """Treatment effect surface, 1-based levels."""
    return math.exp(0.5 * (p - 1.5) + (q - 2) / 3 + (p - 1.5) * (q - 2))


def psi_values() -> np.ndarray:
    return np.array([[psi(p, q) for q in range(1, Q_SIM + 1)] for p in range(1, P_SIM + 1)])


def paper_contrasts() -> list[Contrast]:
    """Normalized contrasts in treatment order 11, 12, 13, 21, 22, 23.

    One for the main effect of F, two for G, two for the interaction.
    """
    rows = [
        np.array([1, 1, 1, -1, -1, -1]) / math.sqrt(6),
        np.array([1, 0, -1, 1, 0, -1]) / 2,
        np.array([1, -2, 1, 1, -2, 1]) / math.sqrt(12),
        np.array([1, 0, -1, -1, 0, 1]) / 2,
        np.array([1, -2, 1, -1, 2, -1]) / math.sqrt(12),
    ]
    return [Contrast(r, P_SIM, Q_SIM) for r in rows]


def _check_h(h: float):
    if not (h >= 0 and math.isfinite(h)):
        raise DesignError(f"h must be a finite nonnegative number, got {h}")


def eq13_noise(B: int, seed: int, start: int, count: int) -> np.ndarray:
    """Centered uniform noise, shape (count, B, P, Q, P, Q) indexed [k, b, r, c, p, q].

    Block ``b`` uses its own substream; draw ``k`` is table replicate ``k``.
    """
    width = (P_SIM * Q_SIM) ** 2
    xi = np.empty((count, B, width))
    for b in range(B):
        key = streams.stream_key(seed, streams.PURPOSE_NOISE, b)
        xi[:, b] = 2.0 * streams.uniforms(key, start, count, width) - 1.0
    xi = xi.reshape(count, B, P_SIM, Q_SIM, P_SIM, Q_SIM)
    return xi - xi.mean(axis=(2, 3), keepdims=True)


def eq13_from_noise(noise: np.ndarray, h: float) -> np.ndarray:
    B = noise.shape[-5]
    b = np.arange(1, B + 1, dtype=float).reshape(B, 1, 1, 1, 1)
    return b + b**h * (psi_values() + noise)


def generate_eq13_table(B: int, h: float, seed: int = DEFAULT_SEED, replicate: int = 0) -> PotentialOutcomeTable:
    """Potential outcomes ``b + b**h * (psi(pq) + centered noise)`` for a 2 x 3 design."""
    _check_h(h)
    dims = DesignDims(B, P_SIM, Q_SIM)
    y = eq13_from_noise(eq13_noise(B, seed, replicate, 1)[0], h)
    return PotentialOutcomeTable(y, dims)


def block_power_mean(B: int, h: float) -> float:
    return math.fsum(b**h for b in range(1, B + 1)) / B


def eq14_bias_factor(B: int, h: float) -> float:
    """Spread of ``b**h`` over blocks; the bias is this times the squared contrast of psi."""
    if B < 2:
        raise DesignError("B must be >= 2")
    _check_h(h)
    m = block_power_mean(B, h)
    return math.fsum((b**h - m) ** 2 for b in range(1, B + 1)) / (B * (B - 1))


def closed_form_tau(B: int, h: float, l: Contrast) -> float:
    return block_power_mean(B, h) * math.fsum(l.l * psi_values().reshape(-1))


@dataclass(frozen=True)
class SimScenario:
    B: int
    h: float
    reps: int = DEFAULT_REPS
    level: float = 0.95
    seed: int = DEFAULT_SEED
    contrasts: tuple[Contrast, ...] = field(default_factory=lambda: tuple(paper_contrasts()))
    redraw_outcomes: bool = False

    def __post_init__(self):
        DesignDims(self.B, P_SIM, Q_SIM)
        _check_h(self.h)
        if self.reps < 1:
            raise DesignError("reps must be >= 1")
        normal_quantile(self.level)
        for l in self.contrasts:
            l.check_dims(DesignDims(self.B, P_SIM, Q_SIM))


@dataclass(frozen=True)
class ContrastCoverage:
    contrast_id: int
    coverage: float
    tau_true: float
    mean_ci_halfwidth: float
    delta0: float
    reps: int


@dataclass(frozen=True)
class CoverageReport:
    scenario: SimScenario
    results: tuple[ContrastCoverage, ...]


def thread_count() -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw:
        try:
            n = int(raw)
        except ValueError:
            raise DesignError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from None
        if n < 1:
            raise DesignError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
        return n
    return min(8, os.cpu_count() or 1)


def _run_chunk(sc: SimScenario, y: np.ndarray | None, coefs: np.ndarray, tau: np.ndarray, z: float, start: int, count: int):
    dims = DesignDims(sc.B, P_SIM, Q_SIM)
    rows, cols = draw_permutations(dims, sc.seed, start, count)
    if y is None:
        tables = eq13_from_noise(eq13_noise(sc.B, sc.seed, start, count), sc.h)
        y_obs = observe_batch(tables, rows, cols)
        block_means = tables.mean(axis=(2, 3)).reshape(count, sc.B, -1)
        truth = (block_means @ coefs.T).mean(axis=1)
    else:
        y_obs = observe_batch(y, rows, cols)
        truth = np.broadcast_to(tau, (count, tau.size))
    per_block = np.ascontiguousarray(block_estimates_batch(y_obs, coefs).transpose(0, 2, 1))
    pooled = per_block.sum(axis=-1) / sc.B
    half = z * np.sqrt(conservative_variance_batch(per_block))
    covered = (pooled - half <= truth) & (truth <= pooled + half)
    return covered.sum(axis=0), half.sum(axis=0), truth.sum(axis=0)


def run_coverage(sc: SimScenario, threads: int | None = None) -> CoverageReport:
    """Coverage of the conservative normal interval over ``sc.reps`` randomizations.

    By default one outcome table is generated and only the assignment is
    redrawn; with ``redraw_outcomes`` each replicate gets a fresh table.
    Work is split into fixed chunks and reduced in chunk order, so the result
    does not depend on the thread count.
    """
    table = generate_eq13_table(sc.B, sc.h, sc.seed)
    coefs = np.array([l.l for l in sc.contrasts])
    tau = np.array([population_contrast(table, l) for l in sc.contrasts])
    delta0 = [delta0_bias(table, l) for l in sc.contrasts]
    z = normal_quantile(sc.level)
    y = None if sc.redraw_outcomes else table.y

    starts = range(0, sc.reps, CHUNK_SIZE)
    jobs = [(s, min(CHUNK_SIZE, sc.reps - s)) for s in starts]
    threads = thread_count() if threads is None else threads
    if threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda j: _run_chunk(sc, y, coefs, tau, z, *j), jobs))
    else:
        parts = [_run_chunk(sc, y, coefs, tau, z, *j) for j in jobs]

    results = []
    for i in range(len(sc.contrasts)):
        hits = sum(int(p[0][i]) for p in parts)
        hw = math.fsum(float(p[1][i]) for p in parts) / sc.reps
        tt = math.fsum(float(p[2][i]) for p in parts) / sc.reps if sc.redraw_outcomes else float(tau[i])
        results.append(ContrastCoverage(i + 1, hits / sc.reps, tt, hw, float(delta0[i]), sc.reps))
    return CoverageReport(sc, tuple(results))


# -- reports ---------------------------------------------------------------

CSV_FIELDS = ("h", "B", "reps", "level", "contrast_id", "coverage", "delta0", "tau_true", "mean_ci_halfwidth", "seed")


def reports_to_csv(reports: list[CoverageReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for rep in reports:
        sc = rep.scenario
        for r in rep.results:
            w.writerow([repr(float(sc.h)), sc.B, sc.reps, repr(sc.level), r.contrast_id, repr(r.coverage),
                        repr(r.delta0), repr(r.tau_true), repr(r.mean_ci_halfwidth), sc.seed])
    return buf.getvalue()


def reports_to_json(reports: list[CoverageReport]) -> str:
    doc = []
    for rep in reports:
        sc = rep.scenario
        doc.append({
            "h": sc.h,
            "B": sc.B,
            "P": P_SIM,
            "Q": Q_SIM,
            "reps": sc.reps,
            "level": sc.level,
            "seed": sc.seed,
            "redraw_outcomes": sc.redraw_outcomes,
            "bias_factor": eq14_bias_factor(sc.B, sc.h),
            "results": [
                {
                    "contrast_id": r.contrast_id,
                    "coefficients": sc.contrasts[r.contrast_id - 1].l.tolist(),
                    "coverage": r.coverage,
                    "delta0": r.delta0,
                    "tau_true": r.tau_true,
                    "mean_ci_halfwidth": r.mean_ci_halfwidth,
                }
                for r in rep.results
            ],
        })
    return json.dumps({"scenarios": doc}, indent=2) + "\n"


def reports_to_table(reports: list[CoverageReport]) -> str:
    """Aligned text table: one row per (h, B), one column per contrast."""
    if not reports:
        return ""
    n = max(len(r.results) for r in reports)
    level = reports[0].scenario.level
    head = f"{'':<16}" + "".join(f"{'tau(' + str(i + 1) + ')':>9}" for i in range(n))
    lines = [f"Simulated coverage, nominal level {level:g}", head]
    for rep in reports:
        sc = rep.scenario
        label = f"h = {sc.h:g}, B = {sc.B}"
        lines.append(f"{label:<16}" + "".join(f"{r.coverage:>9.3f}" for r in rep.results))
    return "\n".join(lines) + "\n"
