"""Potential-outcome tables, treatment contrasts and block/population means.

Internally every index is 0-based. Treatment ``(p, q)`` is flattened to
``p * Q + q`` so that for P=2, Q=3 the order is 11, 12, 13, 21, 22, 23.
File formats use 1-based indices.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class DesignError(ValueError):
    """Invalid dimensions, tables, contrasts or indices."""


@dataclass(frozen=True)
class DesignDims:
    B: int
    P: int
    Q: int

    def __post_init__(self):
        for name in ("B", "P", "Q"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or isinstance(v, bool):
                raise DesignError(f"{name} must be an integer, got {v!r}")
            if v < 2:
                raise DesignError(f"{name} must be >= 2, got {v}")

    @property
    def n_treatments(self) -> int:
        return self.P * self.Q

    def treatment_index(self, p: int, q: int) -> int:
        """Flat 0-based index of treatment (p, q) (both 0-based)."""
        return p * self.Q + q

    def treatments(self) -> list[tuple[int, int]]:
        return [(p, q) for p in range(self.P) for q in range(self.Q)]


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


class PotentialOutcomeTable:
    """Full science table ``y[b, r, c, p, q]``.

    ``y[b, r, c, p, q]`` is the outcome of the unit in row ``r``, column ``c``
    of block ``b`` under treatment ``(p, q)``.
    """

    __slots__ = ("dims", "y")

    def __init__(self, y, dims: DesignDims | None = None):
        y = np.asarray(y, dtype=float)
        if y.ndim != 5:
            raise DesignError(f"table must be 5-dimensional [b][r][c][p][q], got shape {y.shape}")
        B, P, Q, P2, Q2 = y.shape
        if P != P2 or Q != Q2:
            raise DesignError(f"rows/levels or columns/levels mismatch in shape {y.shape}")
        if dims is None:
            dims = DesignDims(B, P, Q)
        elif (dims.B, dims.P, dims.Q) != (B, P, Q):
            raise DesignError(f"shape {y.shape} does not match {dims}")
        if not np.all(np.isfinite(y)):
            raise DesignError("table contains non-finite values")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "y", _readonly(y))

    def __setattr__(self, name, value):
        raise AttributeError("PotentialOutcomeTable is immutable")

    def __repr__(self):
        d = self.dims
        return f"PotentialOutcomeTable(B={d.B}, P={d.P}, Q={d.Q})"

    @classmethod
    def from_function(cls, dims: DesignDims, fn) -> PotentialOutcomeTable:
        """Build a table from ``fn(b, r, c, p, q)`` using 1-based indices."""
        y = np.empty((dims.B, dims.P, dims.Q, dims.P, dims.Q))
        for idx in np.ndindex(*y.shape):
            y[idx] = fn(*(i + 1 for i in idx))
        return cls(y, dims)

    def scale(self) -> float:
        return float(np.max(np.abs(self.y))) if self.y.size else 0.0


class Contrast:
    """Treatment contrast coefficients ``l`` in flat treatment order."""

    __slots__ = ("P", "Q", "l")

    def __init__(self, l, P: int, Q: int, *, tol: float = 1e-9):
        l = np.asarray(l, dtype=float).reshape(-1)
        if l.size != P * Q:
            raise DesignError(f"contrast needs {P * Q} coefficients, got {l.size}")
        if not np.all(np.isfinite(l)):
            raise DesignError("contrast contains non-finite values")
        top = float(np.max(np.abs(l)))
        if top == 0.0:
            raise DesignError("contrast coefficients must not all be zero")
        if abs(math.fsum(l)) > tol * max(1.0, top) * l.size:
            raise DesignError(f"contrast coefficients must sum to zero (sum={math.fsum(l)!r})")
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "l", _readonly(l))

    def __setattr__(self, name, value):
        raise AttributeError("Contrast is immutable")

    def __repr__(self):
        return f"Contrast({self.l.tolist()}, P={self.P}, Q={self.Q})"

    def check_dims(self, dims: DesignDims):
        if (self.P, self.Q) != (dims.P, dims.Q):
            raise DesignError(f"contrast is for P={self.P}, Q={self.Q}; design has P={dims.P}, Q={dims.Q}")

    def combine(self, a: float, other: Contrast, a2: float) -> Contrast:
        """The contrast ``a * self + a2 * other``."""
        if (self.P, self.Q) != (other.P, other.Q):
            raise DesignError("contrasts have different dimensions")
        return Contrast(a * self.l + a2 * other.l, self.P, self.Q)


def basis_contrasts(P: int, Q: int) -> list[Contrast]:
    """PQ - 1 linearly independent contrasts ``e_t - e_0``."""
    out = []
    for t in range(1, P * Q):
        l = np.zeros(P * Q)
        l[0], l[t] = -1.0, 1.0
        out.append(Contrast(l, P, Q))
    return out


@dataclass(frozen=True)
class MeanSummary:
    """Mean potential outcomes.

    block_treatment_means: shape (B, P, Q), indexed [b, p, q]
    row_means: shape (B, P, P, Q), indexed [b, r, p, q]
    col_means: shape (B, Q, P, Q), indexed [b, c, p, q]
    pop_means: shape (P, Q)
    """

    block_treatment_means: np.ndarray
    row_means: np.ndarray
    col_means: np.ndarray
    pop_means: np.ndarray


def compute_means(table: PotentialOutcomeTable) -> MeanSummary:
    y = table.y
    row = y.mean(axis=2)
    col = y.mean(axis=1)
    block = y.mean(axis=(1, 2))
    return MeanSummary(
        block_treatment_means=_readonly(block),
        row_means=_readonly(row),
        col_means=_readonly(col),
        pop_means=_readonly(block.mean(axis=0)),
    )


def block_contrasts(table: PotentialOutcomeTable, l: Contrast) -> np.ndarray:
    """All block-level contrasts as a length-B vector."""
    l.check_dims(table.dims)
    means = compute_means(table).block_treatment_means.reshape(table.dims.B, -1)
    return np.array([math.fsum(l.l * m) for m in means])


def block_contrast(table: PotentialOutcomeTable, l: Contrast, b: int) -> float:
    """Block-level contrast for 0-based block ``b``."""
    if not 0 <= b < table.dims.B:
        raise DesignError(f"block index {b} out of range for B={table.dims.B}")
    return float(block_contrasts(table, l)[b])


def population_contrast(table: PotentialOutcomeTable, l: Contrast) -> float:
    """Population contrast, the average over blocks of the block contrasts."""
    return math.fsum(block_contrasts(table, l)) / table.dims.B


def population_contrast_from_means(table: PotentialOutcomeTable, l: Contrast) -> float:
    """Same quantity computed from the population treatment means instead."""
    l.check_dims(table.dims)
    return math.fsum(l.l * compute_means(table).pop_means.reshape(-1))


def default_tolerance(table: PotentialOutcomeTable) -> float:
    return 1e-9 * table.scale()


def is_between_block_additive(table: PotentialOutcomeTable, tol: float | None = None) -> bool:
    """Whether block-mean treatment differences are the same in every block."""
    tol = default_tolerance(table) if tol is None else tol
    if tol < 0:
        raise DesignError("tol must be nonnegative")
    m = compute_means(table).block_treatment_means.reshape(table.dims.B, -1)
    diff = m - m[:, :1]
    return bool(np.all(diff.max(axis=0) - diff.min(axis=0) <= tol))


def is_strictly_additive(table: PotentialOutcomeTable, tol: float | None = None) -> bool:
    """Whether unit-level treatment differences are the same for every unit."""
    tol = default_tolerance(table) if tol is None else tol
    if tol < 0:
        raise DesignError("tol must be nonnegative")
    d = table.dims
    y = table.y.reshape(d.B * d.P * d.Q, d.n_treatments)
    diff = y - y[:, :1]
    return bool(np.all(diff.max(axis=0) - diff.min(axis=0) <= tol))


# -- serialization ---------------------------------------------------------


def table_to_json(table: PotentialOutcomeTable) -> str:
    d = table.dims
    return json.dumps({"B": d.B, "P": d.P, "Q": d.Q, "y": table.y.tolist()})


def table_from_json(text: str) -> PotentialOutcomeTable:
    doc = json.loads(text)
    try:
        dims = DesignDims(int(doc["B"]), int(doc["P"]), int(doc["Q"]))
        raw = doc["y"]
    except (KeyError, TypeError) as exc:
        raise DesignError(f"table JSON needs keys B, P, Q, y: {exc}") from None
    try:
        y = np.array(raw, dtype=float)
    except (ValueError, TypeError):
        raise DesignError("table JSON 'y' is ragged or non-numeric") from None
    if y.shape != (dims.B, dims.P, dims.Q, dims.P, dims.Q):
        raise DesignError(
            f"table JSON 'y' has shape {y.shape}, expected {(dims.B, dims.P, dims.Q, dims.P, dims.Q)}"
        )
    return PotentialOutcomeTable(y, dims)


CSV_COLUMNS = ("b", "r", "c", "p", "q", "value")


def table_to_csv(table: PotentialOutcomeTable) -> str:
    lines = [",".join(CSV_COLUMNS)]
    for idx in np.ndindex(*table.y.shape):
        one = ",".join(str(i + 1) for i in idx)
        lines.append(f"{one},{float(table.y[idx])!r}")
    return "\n".join(lines) + "\n"


def table_from_csv(text: str) -> PotentialOutcomeTable:
    reader = csv.DictReader(text.splitlines())
    if reader.fieldnames is None or tuple(f.strip() for f in reader.fieldnames) != CSV_COLUMNS:
        raise DesignError(f"table CSV header must be {','.join(CSV_COLUMNS)}")
    cells = {}
    for lineno, row in enumerate(reader, start=2):
        try:
            key = tuple(int(row[k]) for k in CSV_COLUMNS[:5])
            val = float(row["value"])
        except (TypeError, ValueError):
            raise DesignError(f"bad CSV row at line {lineno}") from None
        if key in cells:
            raise DesignError(f"duplicate cell {key} at line {lineno}")
        cells[key] = val
    if not cells:
        raise DesignError("table CSV has no rows")
    B, P, Q = (max(k[i] for k in cells) for i in (0, 1, 2))
    dims = DesignDims(B, P, Q)
    y = np.empty((B, P, Q, P, Q))
    for idx in np.ndindex(*y.shape):
        key = tuple(i + 1 for i in idx)
        if key not in cells:
            raise DesignError(f"table CSV is missing cell (b,r,c,p,q)={key}")
        y[idx] = cells.pop(key)
    if cells:
        raise DesignError(f"table CSV has out-of-range cells, e.g. {next(iter(cells))}")
    return PotentialOutcomeTable(y, dims)


def load_table(path) -> PotentialOutcomeTable:
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() == ".csv":
        return table_from_csv(text)
    return table_from_json(text)
