"""Strip-plot randomization: independent row and column permutations per block."""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass

import numpy as np

from . import streams
from .design import DesignDims, DesignError, PotentialOutcomeTable

DEFAULT_ENUMERATION_CAP = 40_320


@dataclass(frozen=True)
class SeedSpec:
    """Seed for reproducible assignments.

    Stream policy: block ``b`` and axis ``a`` (rows 0, columns 1) draw from the
    Philox substream keyed by ``(seed, PURPOSE_ASSIGNMENT, b, a)``; replicate
    ``k`` is the ``k``-th permutation of that substream. Adding blocks never
    changes the draws of existing blocks.
    """

    seed: int
    replicate: int = 0

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2**64:
            raise DesignError("seed must be a 64-bit unsigned integer")
        if self.replicate < 0:
            raise DesignError("replicate must be nonnegative")


class Assignment:
    """Per-block permutations, 0-based.

    ``row_perm[b, p]`` is the row given level ``p`` of the row factor and
    ``col_perm[b, q]`` the column given level ``q`` of the column factor.
    """

    __slots__ = ("dims", "row_perm", "col_perm")

    def __init__(self, dims: DesignDims, row_perm, col_perm):
        row_perm = np.array(row_perm, dtype=np.intp)
        col_perm = np.array(col_perm, dtype=np.intp)
        if row_perm.shape != (dims.B, dims.P) or col_perm.shape != (dims.B, dims.Q):
            raise DesignError("permutation arrays do not match design dimensions")
        if not (np.all(np.sort(row_perm, axis=1) == np.arange(dims.P))
                and np.all(np.sort(col_perm, axis=1) == np.arange(dims.Q))):
            raise DesignError("row/column maps must be permutations")
        row_perm.setflags(write=False)
        col_perm.setflags(write=False)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "row_perm", row_perm)
        object.__setattr__(self, "col_perm", col_perm)

    def __setattr__(self, name, value):
        raise AttributeError("Assignment is immutable")

    def __eq__(self, other):
        return (isinstance(other, Assignment) and self.dims == other.dims
                and np.array_equal(self.row_perm, other.row_perm)
                and np.array_equal(self.col_perm, other.col_perm))

    def __repr__(self):
        return f"Assignment(row_perm={self.row_perm.tolist()}, col_perm={self.col_perm.tolist()})"

    @classmethod
    def identity(cls, dims: DesignDims) -> Assignment:
        return cls(dims, np.tile(np.arange(dims.P), (dims.B, 1)), np.tile(np.arange(dims.Q), (dims.B, 1)))

    def to_json(self) -> str:
        return json.dumps({"rowPerm": (self.row_perm + 1).tolist(), "colPerm": (self.col_perm + 1).tolist()})

    @classmethod
    def from_json(cls, text: str) -> Assignment:
        doc = json.loads(text)
        try:
            rows = np.array(doc["rowPerm"], dtype=np.intp) - 1
            cols = np.array(doc["colPerm"], dtype=np.intp) - 1
        except (KeyError, TypeError, ValueError):
            raise DesignError("assignment JSON needs integer arrays rowPerm and colPerm") from None
        if rows.ndim != 2 or cols.ndim != 2 or rows.shape[0] != cols.shape[0]:
            raise DesignError("rowPerm/colPerm must be B x P and B x Q arrays")
        return cls(DesignDims(rows.shape[0], rows.shape[1], cols.shape[1]), rows, cols)


def _as_seedspec(seed) -> SeedSpec:
    return seed if isinstance(seed, SeedSpec) else SeedSpec(int(seed))


def draw_permutations(dims: DesignDims, seed: int, start: int, count: int) -> tuple[np.ndarray, np.ndarray]:
    """Row and column permutations for replicates ``start .. start+count-1``.

    Returns arrays of shape (count, B, P) and (count, B, Q).
    """
    rows = np.empty((count, dims.B, dims.P), dtype=np.intp)
    cols = np.empty((count, dims.B, dims.Q), dtype=np.intp)
    for b in range(dims.B):
        rk = streams.stream_key(seed, streams.PURPOSE_ASSIGNMENT, b, streams.ROW_AXIS)
        ck = streams.stream_key(seed, streams.PURPOSE_ASSIGNMENT, b, streams.COL_AXIS)
        rows[:, b] = streams.permutations(rk, start, count, dims.P)
        cols[:, b] = streams.permutations(ck, start, count, dims.Q)
    return rows, cols


def draw_assignment(dims: DesignDims, seed: SeedSpec | int) -> Assignment:
    """One strip-plot randomization, fully determined by ``seed``."""
    spec = _as_seedspec(seed)
    rows, cols = draw_permutations(dims, spec.seed, spec.replicate, 1)
    return Assignment(dims, rows[0], cols[0])


def observe(table: PotentialOutcomeTable, a: Assignment) -> np.ndarray:
    """Observed outcomes ``y_obs[b, p, q]`` under assignment ``a``."""
    if table.dims != a.dims:
        raise DesignError(f"assignment dims {a.dims} do not match table dims {table.dims}")
    return observe_batch(table.y, a.row_perm[None], a.col_perm[None])[0]


def observe_batch(y: np.ndarray, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """Vectorized ``observe`` over many assignments.

    ``y`` has shape (B, P, Q, P, Q), or (K, B, P, Q, P, Q) for one table per
    assignment; ``rows``/``cols`` have shape (K, B, P) and (K, B, Q).
    Returns shape (K, B, P, Q).
    """
    K, B, P = rows.shape
    Q = cols.shape[2]
    b = np.arange(B)[None, :, None, None]
    p = np.arange(P)[None, None, :, None]
    q = np.arange(Q)[None, None, None, :]
    r = rows[:, :, :, None]
    c = cols[:, :, None, :]
    if y.ndim == 5:
        return y[b, r, c, p, q]
    k = np.arange(K)[:, None, None, None]
    return y[k, b, r, c, p, q]


def n_block_assignments(dims: DesignDims) -> int:
    return math.factorial(dims.P) * math.factorial(dims.Q)


def enumerate_assignments(dims: DesignDims, cap: int = DEFAULT_ENUMERATION_CAP):
    """Every single-block ``(row_perm, col_perm)`` pair, each exactly once."""
    n = n_block_assignments(dims)
    if n > cap:
        raise DesignError(f"{n} per-block assignments exceed the enumeration cap {cap}")
    row_perms = list(itertools.permutations(range(dims.P)))
    col_perms = list(itertools.permutations(range(dims.Q)))
    return [(r, c) for r in row_perms for c in col_perms]
