"""Design matrices for covariate subsets: linear or additive penalized splines.

Spline terms are cubic B-splines with interior knots at covariate quantiles
and a difference penalty on the coefficients. Differences are divided by the
spacing of the Greville abscissae, so coefficient vectors that reproduce a
polynomial of degree < ``penalty_order`` carry zero penalty even with uneven
knots; for equally spaced knots the penalty reduces to plain differences.

Each term is built from ``spline_df + 1`` raw basis functions. Columns are
centered on the training data and the last one is dropped (its coefficient is
fixed at zero), which removes the partition-of-unity dependence on the
intercept and leaves ``spline_df`` identifiable columns per covariate.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy.interpolate import BSpline

from .data import Dataset

DEGREE = 3


class BasisError(ValueError):
    """A design could not be built for the requested subset."""


class RankDeficiencyError(BasisError):
    pass


class BasisKind(str, enum.Enum):
    LINEAR = "linear"
    SPLINE = "spline"


@dataclass(frozen=True)
class BasisSpec:
    kind: BasisKind = BasisKind.LINEAR
    spline_df: int = 8
    penalty_order: int = 2
    intercept: bool = True

    def __post_init__(self):
        object.__setattr__(self, "kind", BasisKind(self.kind))
        if self.kind is BasisKind.SPLINE:
            if self.spline_df < DEGREE:
                raise ValueError(f"spline_df must be at least {DEGREE}")
            if not 1 <= self.penalty_order <= self.spline_df:
                raise ValueError("penalty_order must lie in [1, spline_df]")


LINEAR = BasisSpec(BasisKind.LINEAR)
SPLINE = BasisSpec(BasisKind.SPLINE)


@dataclass(frozen=True)
class Term:
    """How one covariate maps to its design columns."""

    name: str
    knots: np.ndarray | None = None
    center: np.ndarray | None = None

    @property
    def n_raw(self) -> int:
        return len(self.knots) - DEGREE - 1


@dataclass(frozen=True)
class Design:
    matrix: np.ndarray
    penalty: np.ndarray
    columns: tuple[str, ...]
    subset: tuple[int, ...]
    names: tuple[str, ...]
    spec: BasisSpec
    terms: tuple[Term, ...]

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def q(self) -> int:
        return self.matrix.shape[1]

    @property
    def penalized(self) -> bool:
        return bool(np.any(self.penalty))


def raw_bspline(x: np.ndarray, knots: np.ndarray) -> np.ndarray:
    """Cubic B-spline basis values, extended linearly beyond the boundary knots."""
    x = np.asarray(x, dtype=float)
    k = len(knots) - DEGREE - 1
    lo, hi = knots[DEGREE], knots[-DEGREE - 1]
    spline = BSpline(knots, np.eye(k), DEGREE, extrapolate=True)
    xc = np.clip(x, lo, hi)
    out = spline(xc)
    below, above = x < lo, x > hi
    if below.any() or above.any():
        deriv = spline.derivative()
        if below.any():
            out[below] += np.outer(x[below] - lo, deriv(lo))
        if above.any():
            out[above] += np.outer(x[above] - hi, deriv(hi))
    return out


def greville(knots: np.ndarray) -> np.ndarray:
    k = len(knots) - DEGREE - 1
    return np.array([knots[j + 1:j + DEGREE + 1].mean() for j in range(k)])


def difference_matrix(points: np.ndarray, order: int) -> np.ndarray:
    """Scaled divided-difference operator of ``order`` over ``points``.

    Row ``i`` maps a coefficient sequence to its ``order``-th divided difference
    on ``points[i:i+order+1]``, multiplied by ``order! * h**order`` with ``h`` the
    mean spacing, so equally spaced points give ordinary differences.
    """
    points = np.asarray(points, dtype=float)
    k = len(points)
    D = np.eye(k)
    for m in range(1, order + 1):
        span = points[m:] - points[:-m]
        D = (D[1:] - D[:-1]) / span[:, None]
    h = (points[-1] - points[0]) / (k - 1)
    return D * (math.factorial(order) * h ** order)


def _quantile_knots(x: np.ndarray, n_raw: int) -> np.ndarray:
    n_interior = n_raw - DEGREE - 1
    lo, hi = float(np.min(x)), float(np.max(x))
    probs = np.arange(1, n_interior + 1) / (n_interior + 1)
    interior = np.quantile(x, probs)
    inner = np.concatenate([[lo], interior, [hi]])
    if np.any(np.diff(inner) <= 0):
        raise BasisError("knots collapse: too few distinct covariate values")
    return np.concatenate([[lo] * DEGREE, inner, [hi] * DEGREE])


def _fit_term(name: str, x: np.ndarray, spec: BasisSpec) -> Term:
    if spec.kind is BasisKind.LINEAR:
        return Term(name)
    if np.unique(x).size < spec.spline_df:
        raise BasisError(f"covariate {name!r} has fewer than {spec.spline_df} distinct values")
    knots = _quantile_knots(x, spec.spline_df + 1)
    center = raw_bspline(x, knots).mean(axis=0)
    return Term(name, knots=knots, center=center)


def _term_columns(term: Term, x: np.ndarray) -> np.ndarray:
    if term.knots is None:
        return np.asarray(x, dtype=float).reshape(-1, 1)
    raw = raw_bspline(x, term.knots) - term.center
    return raw[:, :-1]


def _term_penalty(term: Term, spec: BasisSpec) -> np.ndarray:
    if term.knots is None:
        return np.zeros((1, 1))
    D = difference_matrix(greville(term.knots), spec.penalty_order)[:, :-1]
    return D.T @ D


def _assemble(columns: Mapping[str, np.ndarray], terms: Sequence[Term], spec: BasisSpec, n: int) -> np.ndarray:
    blocks = [np.ones((n, 1))] if spec.intercept else []
    for term in terms:
        if term.name not in columns:
            raise KeyError(f"missing covariate column {term.name!r}")
        blocks.append(_term_columns(term, np.asarray(columns[term.name], dtype=float)))
    return np.hstack(blocks) if blocks else np.empty((n, 0))


def build_design(data: Dataset, subset: Sequence[int], spec: BasisSpec = LINEAR) -> Design:
    """Build the design matrix and penalty for covariates ``subset`` (0-based)."""
    subset = tuple(int(j) for j in subset)
    if len(set(subset)) != len(subset):
        raise BasisError("subset contains duplicates")
    if any(j < 0 or j >= data.p for j in subset):
        raise BasisError(f"subset {subset} out of range for p={data.p}")
    names = tuple(data.names[j] for j in subset)
    terms = tuple(_fit_term(name, data.X[:, j], spec) for name, j in zip(names, subset))

    matrix = _assemble(data.columns(), terms, spec, data.n)
    blocks = ([np.zeros((1, 1))] if spec.intercept else []) + [_term_penalty(t, spec) for t in terms]
    q = sum(b.shape[0] for b in blocks)
    penalty = np.zeros((q, q))
    labels = ["(Intercept)"] if spec.intercept else []
    start = 0
    for b in blocks:
        size = b.shape[0]
        penalty[start:start + size, start:start + size] = b
        start += size
    for t in terms:
        if t.knots is None:
            labels.append(t.name)
        else:
            labels.extend(f"s({t.name}).{i + 1}" for i in range(t.n_raw - 1))

    if matrix.shape[1] > matrix.shape[0] or np.linalg.matrix_rank(matrix) < matrix.shape[1]:
        raise RankDeficiencyError(f"design for {names} is rank deficient")
    matrix.setflags(write=False)
    penalty.setflags(write=False)
    return Design(matrix, penalty, tuple(labels), subset, names, spec, terms)


def eval_basis(design: Design, x_new) -> np.ndarray:
    """Evaluate ``design``'s basis at new covariate rows.

    ``x_new`` is a :class:`Dataset` or a mapping from covariate name to values.
    Centering constants and knots come from the training data.
    """
    columns = x_new.columns() if isinstance(x_new, Dataset) else x_new
    missing = [t.name for t in design.terms if t.name not in columns]
    if missing:
        raise KeyError(f"missing covariate column(s): {', '.join(missing)}")
    if design.terms:
        n = len(columns[design.terms[0].name])
    else:
        n = len(next(iter(columns.values()))) if columns else 0
    return _assemble(columns, design.terms, design.spec, n)
