"""Penalized maximum likelihood for canonical-link GLMs by Newton/IRLS.

The maximized objective is ``loglik(beta) - lam/2 * beta' Omega beta``. Each
iteration solves ``(X'WX + lam*Omega) delta = X'(y - mu) - lam*Omega*beta`` and
halves the step until the objective does not decrease.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .basis import Design
from .edf import POISSON_THETA_CAP, Family, Kind, NumericOverflowError

log = logging.getLogger(__name__)

MAX_ITER = 100
MAX_HALVINGS = 30
REL_OBJ_TOL = 1e-10
STEP_TOL = 1e-8
SEPARATION_CAP = 30.0
DEFAULT_LAMBDA_GRID = tuple(np.logspace(-4, 4, 9))


class FitError(RuntimeError):
    pass


@dataclass(frozen=True)
class FitResult:
    beta: np.ndarray
    edf: float
    loglik: float
    bic: float
    lam: float
    converged: bool
    iterations: int
    eta: np.ndarray
    n: int
    separated: bool = False
    objective_trace: tuple[float, ...] = field(default=(), repr=False)

    @property
    def penalized_objective(self) -> float:
        return self.objective_trace[-1] if self.objective_trace else math.nan


def bic_value(loglik: float, edf: float, n: int) -> float:
    return -2.0 * loglik + edf * math.log(n)


def solve_spd(H: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Solve ``H x = g`` for symmetric positive (semi)definite ``H``."""
    try:
        return scipy.linalg.cho_solve(scipy.linalg.cho_factor(H, lower=True), g)
    except (np.linalg.LinAlgError, ValueError):
        q = H.shape[0]
        jitter = 1e-10 * max(np.trace(H), 1.0) / q
        try:
            return scipy.linalg.cho_solve(scipy.linalg.cho_factor(H + jitter * np.eye(q), lower=True), g)
        except (np.linalg.LinAlgError, ValueError):
            return np.linalg.lstsq(H, g, rcond=None)[0]


def _loglik_cols(family: Family, Y: np.ndarray, E: np.ndarray) -> np.ndarray:
    """Per-column log-likelihood kernel; ``-inf`` where a Poisson column overflows."""
    if family.kind is Kind.POISSON:
        bad = E.max(axis=0, initial=-np.inf) > POISSON_THETA_CAP
        if bad.any():
            E = np.where(bad, 0.0, E)
            ll = np.sum(Y * E - family.b(E), axis=0) / family.dispersion
            ll[bad] = -np.inf
            return ll
    return np.sum(Y * E - family.b(E), axis=0) / family.dispersion


def _loglik(family: Family, y: np.ndarray, eta: np.ndarray) -> float:
    return float(_loglik_cols(family, y[:, None], eta[:, None])[0])


def initial_beta(family: Family, design: Design, y: np.ndarray) -> np.ndarray:
    beta = np.zeros(design.q)
    if design.spec.intercept and design.q:
        n = y.size
        mu = float(np.mean(y))
        if family.kind is Kind.BERNOULLI:
            mu = min(max(mu, 1.0 / (n + 1)), n / (n + 1.0))
        else:
            mu = max(mu, 1.0 / (n + 1))
        beta[0] = float(family.link(mu))
    return beta


def _edf(X: np.ndarray, w: np.ndarray, penalty: np.ndarray, lam: float) -> float:
    if lam == 0 or not np.any(penalty):
        return float(X.shape[1])
    XtWX = (X.T * w) @ X
    return float(np.trace(solve_spd(XtWX + lam * penalty, XtWX)))


@dataclass
class _NewtonState:
    beta: np.ndarray  # q x m
    eta: np.ndarray  # n x m
    converged: np.ndarray
    separated: np.ndarray
    iterations: np.ndarray
    traces: list


def _newton(family: Family, X: np.ndarray, Y: np.ndarray, lam_pen: np.ndarray, B0: np.ndarray,
            max_iter: int) -> _NewtonState:
    """Damped Newton ascent run independently on each column of ``Y``.

    Each column has its own step length, convergence flag and stopping
    iteration. Batch width can still move results at rounding level (BLAS
    kernels differ), so reproducible callers keep batch composition fixed.
    Traces record objectives after ascent steps; a final step taken below
    float resolution, kept because it shrinks the score, is not recorded.
    """
    m = Y.shape[1]
    B = np.array(B0, dtype=float)
    E = X @ B
    obj = _loglik_cols(family, Y, E) - 0.5 * np.einsum("im,ij,jm->m", B, lam_pen, B)
    if not np.all(np.isfinite(obj)):
        raise NumericOverflowError("objective is not finite at the starting point")
    traces = [[o] for o in obj]
    converged = np.zeros(m, bool)
    separated = np.zeros(m, bool)
    iterations = np.zeros(m, int)
    settling = np.zeros(m, bool)
    active = np.arange(m)

    for it in range(1, max_iter + 1):
        if active.size == 0:
            break
        iterations[active] = it
        Ba, Ea = B[:, active], E[:, active]
        W = family.variance(Ea)
        G = X.T @ (Y[:, active] - family.mean(Ea)) - lam_pen @ Ba
        D = np.empty_like(Ba)
        for c in range(active.size):
            D[:, c] = solve_spd((X.T * W[:, c]) @ X + lam_pen, G[:, c])

        step = np.ones(active.size)
        cand = Ba + D
        cand_eta = X @ cand
        cand_obj = _loglik_cols(family, Y[:, active], cand_eta) - 0.5 * np.einsum("im,ij,jm->m", cand, lam_pen, cand)
        # predicted gain of the full step; below float resolution there is nothing to halve for
        resolution = 1e-13 * (np.abs(obj[active]) + 1.0)
        flat = np.einsum("qm,qm->m", G, D) < resolution
        stuck = np.zeros(active.size, bool)
        worse = cand_obj < obj[active]
        stuck[worse & flat] = True
        todo = np.flatnonzero(worse & ~flat)
        for _ in range(MAX_HALVINGS):
            if todo.size == 0:
                break
            step[todo] *= 0.5
            cand[:, todo] = Ba[:, todo] + step[todo] * D[:, todo]
            cand_eta[:, todo] = X @ cand[:, todo]
            cand_obj[todo] = _loglik_cols(family, Y[:, active[todo]], cand_eta[:, todo]) \
                - 0.5 * np.einsum("im,ij,jm->m", cand[:, todo], lam_pen, cand[:, todo])
            todo = todo[cand_obj[todo] < obj[active[todo]]]
        stuck[todo] = True

        done = []
        for c, col in enumerate(active):
            if stuck[c]:
                # the objective cannot tell the points apart; keep the step only if it shrinks the score
                if flat[c] and worse[c]:
                    g_new = X.T @ (Y[:, col] - family.mean(cand_eta[:, c])) - lam_pen @ cand[:, c]
                    if np.max(np.abs(g_new)) < np.max(np.abs(G[:, c])):
                        B[:, col], E[:, col], obj[col] = cand[:, c], cand_eta[:, c], cand_obj[c]
                converged[col] = True
                done.append(c)
                continue
            moved = float(np.max(np.abs(step[c] * D[:, c]), initial=0.0))
            gain = cand_obj[c] - obj[col]
            B[:, col], E[:, col], obj[col] = cand[:, c], cand_eta[:, c], cand_obj[c]
            traces[col].append(float(cand_obj[c]))
            if family.kind is Kind.BERNOULLI and np.max(np.abs(B[:, col]), initial=0.0) > SEPARATION_CAP:
                separated[col] = True
                done.append(c)
            elif settling[col]:
                converged[col] = True
                done.append(c)
            elif moved < STEP_TOL or gain < REL_OBJ_TOL * abs(obj[col]):
                # one more Newton step drives the score to rounding level
                settling[col] = True
        active = np.delete(active, done)

    converged &= ~separated
    return _NewtonState(B, E, converged, separated, iterations, traces)


def fit_glm(
    family: Family,
    design: Design,
    y,
    lam: float = 0.0,
    *,
    beta0: np.ndarray | None = None,
    max_iter: int = MAX_ITER,
) -> FitResult:
    """Penalized MLE of ``beta`` for ``y ~ family(design.matrix @ beta)``.

    Returns a result with ``converged=False`` (and ``separated=True`` for
    Bernoulli coefficients beyond the separation cap) instead of raising when
    the iteration does not settle.
    """
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    y = family.check_support(y)
    X = design.matrix
    n = X.shape[0]
    if y.shape != (n,):
        raise ValueError(f"y has shape {y.shape}, design has {n} rows")
    lam = float(lam)
    beta = initial_beta(family, design, y) if beta0 is None else np.array(beta0, dtype=float)
    st = _newton(family, X, y[:, None], lam * design.penalty, beta[:, None], max_iter)
    beta, eta = st.beta[:, 0], st.eta[:, 0]
    if not st.converged[0]:
        log.debug("fit on %s did not converge after %d iterations", design.names, st.iterations[0])
    loglik = _loglik(family, y, eta)
    edf = _edf(X, family.variance(eta), design.penalty, lam)
    return FitResult(
        beta=beta,
        edf=edf,
        loglik=loglik,
        bic=bic_value(loglik, edf, n),
        lam=lam,
        converged=bool(st.converged[0]),
        iterations=int(st.iterations[0]),
        eta=eta,
        n=n,
        separated=bool(st.separated[0]),
        objective_trace=tuple(st.traces[0]),
    )


def fit_glm_columns(family: Family, design: Design, Y, lam: float, beta0: np.ndarray | None = None,
                    max_iter: int = MAX_ITER) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Fit every column of ``Y`` (n x m) on the same design and weight.

    Returns ``(beta, eta, converged)`` with shapes (q, m), (n, m), (m,).
    Each column follows the same iteration as :func:`fit_glm`.
    """
    Y = family.check_support(Y)
    if Y.ndim != 2 or Y.shape[0] != design.n:
        raise ValueError(f"Y must be ({design.n}, m); got {Y.shape}")
    if beta0 is None:
        B0 = np.column_stack([initial_beta(family, design, Y[:, c]) for c in range(Y.shape[1])])
    else:
        B0 = np.repeat(np.asarray(beta0, dtype=float)[:, None], Y.shape[1], axis=1)
    st = _newton(family, design.matrix, Y, float(lam) * design.penalty, B0, max_iter)
    return st.beta, st.eta, st.converged


def gcv_score(family: Family, fit: FitResult, y: np.ndarray) -> float:
    """``n * D / (n - edf)**2`` with ``D`` the Pearson statistic."""
    mu = family.mean(fit.eta)
    D = float(np.sum((y - mu) ** 2 / (family.variance(fit.eta) * family.dispersion)))
    resid_df = fit.n - fit.edf
    if resid_df <= 0:
        return math.inf
    return fit.n * D / resid_df ** 2


def select_lambda(family: Family, design: Design, y, grid=None) -> tuple[float, FitResult]:
    """Pick the smoothing weight minimizing GCV; ties go to the larger weight.

    Unpenalized designs are fitted once, at ``lam = 0`` for the default grid
    and at the grid minimum otherwise.
    """
    y = family.check_support(y)
    if not design.penalized:
        lam = 0.0 if grid is None else float(min(grid))
        return lam, fit_glm(family, design, y, lam)

    grid = DEFAULT_LAMBDA_GRID if grid is None else tuple(grid)
    if not grid or min(grid) < 0:
        raise ValueError("grid must be a non-empty list of nonnegative values")

    best = None
    beta0 = None
    for lam in sorted(set(float(g) for g in grid), reverse=True):
        try:
            fit = fit_glm(family, design, y, lam, beta0=beta0)
        except (NumericOverflowError, np.linalg.LinAlgError) as exc:
            log.debug("lambda=%g failed: %s", lam, exc)
            continue
        beta0 = fit.beta if fit.converged else None
        key = (not fit.converged, gcv_score(family, fit, y))
        # strict improvement only, so equal scores keep the larger lambda
        if best is None or key < best[0]:
            best = (key, lam, fit)
    if best is None:
        raise FitError(f"every lambda in the grid failed for {design.names}")
    return best[1], best[2]


def loglik_at(family: Family, matrix: np.ndarray, y, beta) -> float:
    """Log-likelihood kernel of ``beta`` evaluated on an arbitrary design."""
    matrix = np.asarray(matrix, dtype=float)
    beta = np.asarray(beta, dtype=float)
    y = family.check_support(y)
    if matrix.ndim != 2 or matrix.shape[1] != beta.shape[0] or matrix.shape[0] != y.shape[0]:
        raise ValueError(
            f"shape mismatch: matrix {matrix.shape}, beta {beta.shape}, y {y.shape}"
        )
    return float(np.sum(y * (matrix @ beta) - family.b(matrix @ beta)) / family.dispersion)
