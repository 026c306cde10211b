"""Two-sided tests of perfect dispersion for a fitted GLM.

Under the null the Pearson risk of the fitted model equals the dispersion
a(phi) = 1. ``chisq_test`` uses the chi-squared reference with ``n - edf``
degrees of freedom (Poisson); ``bootstrap_test`` resamples responses from the
fitted law, refits, and compares Pearson statistics.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass
from functools import partial

import numpy as np

from . import chi2
from ._parallel import pmap
from ._rng import substream
from .basis import Design
from .edf import Family, Kind, NumericOverflowError, pearson_sq
from .fit import FitResult, fit_glm_columns

BOOTSTRAP_BLOCK = 25
MAX_FAILURE_SHARE = 0.10


class TestMethod(str, enum.Enum):
    CHISQ = "chisq"
    BOOTSTRAP = "bootstrap"

    __test__ = False


class DispersionTestError(RuntimeError):
    pass


@dataclass(frozen=True)
class TestResult:
    statistic: float
    edf_used: float
    p_value: float
    method: TestMethod
    accepted: bool
    alpha: float
    bootstrap_reps: int = 0

    __test__ = False  # not a pytest class


def pearson_statistic(family: Family, y, eta) -> float:
    """Sum of squared Pearson residuals at natural parameters ``eta``."""
    y = np.asarray(y, dtype=float)
    eta = np.asarray(eta, dtype=float)
    if y.shape != eta.shape:
        raise ValueError(f"length mismatch: y {y.shape} vs eta {eta.shape}")
    return float(np.sum(pearson_sq(family, y, eta)))


def _check_alpha(alpha: float):
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")


def acceptance_bounds(df: float, alpha: float) -> tuple[float, float]:
    """Chi-squared quantiles at ``alpha/2`` and ``1 - alpha/2``."""
    return chi2.ppf(alpha / 2, df), chi2.ppf(1 - alpha / 2, df)


def chisq_test(family: Family, fit: FitResult, y, alpha: float = 0.05, *, force: bool = False) -> TestResult:
    """Compare the Pearson statistic with chi-squared on ``n - edf`` df."""
    _check_alpha(alpha)
    if family.kind is not Kind.POISSON:
        if not force:
            raise DispersionTestError("chi-squared dispersion test is only supported for Poisson")
        warnings.warn(f"chi-squared reference forced for the {family.name} family", stacklevel=2)
    df = fit.n - fit.edf
    if df < 1:
        raise DispersionTestError(f"degenerate residual degrees of freedom {df:.3g}")
    stat = pearson_statistic(family, y, fit.eta)
    lower, upper = chi2.cdf(stat, df), chi2.sf(stat, df)
    p = min(1.0, 2.0 * min(lower, upper))
    return TestResult(stat, fit.edf, p, TestMethod.CHISQ, p >= alpha, alpha)


def _bootstrap_block(
    bounds: tuple[int, int], family: Family, design: Design, fit: FitResult, seed: int, budget: int
) -> tuple[list[float], int]:
    """Statistics for replicates ``start..stop-1``, refitted as one batch.

    A replicate whose refit fails is redrawn from its next substream
    ``(seed, index, attempt + 1)``; redraws form their own batches.
    """
    start, stop = bounds
    pending = list(range(start, stop))
    attempts = dict.fromkeys(pending, 0)
    stats: dict[int, float] = {}
    failures = 0
    while pending:
        Y = np.column_stack([
            family.sample(fit.eta, substream(seed, "bootstrap", i, attempts[i])) for i in pending
        ])
        try:
            _, E, ok = fit_glm_columns(family, design, Y, fit.lam, beta0=fit.beta)
        except (NumericOverflowError, np.linalg.LinAlgError):
            E, ok = None, np.zeros(len(pending), bool)
        retry = []
        for c, i in enumerate(pending):
            if ok[c]:
                stats[i] = pearson_statistic(family, Y[:, c], E[:, c])
            else:
                failures += 1
                attempts[i] += 1
                retry.append(i)
        if failures > budget:
            break
        pending = retry
    return [stats[i] for i in sorted(stats)], failures


def bootstrap_statistics(
    family: Family, fit: FitResult, design: Design, B: int, seed: int, threads: int | None = None
) -> np.ndarray:
    """Pearson statistics of ``B`` parametric-bootstrap refits.

    Replicates are grouped in fixed blocks of consecutive indices and each
    draws from substream ``(seed, index, attempt)``; workers only change which
    process handles a block, so the output is identical for any worker count.
    """
    budget = int(MAX_FAILURE_SHARE * B)
    blocks = [(s, min(s + BOOTSTRAP_BLOCK, B)) for s in range(0, B, BOOTSTRAP_BLOCK)]
    work = partial(_bootstrap_block, family=family, design=design, fit=fit, seed=seed, budget=budget)
    results = pmap(work, blocks, threads)
    failures = sum(f for _, f in results)
    if failures > budget:
        raise DispersionTestError(f"{failures} bootstrap refits failed for B={B}")
    return np.array([s for stats, _ in results for s in stats])


def bootstrap_test(
    family: Family,
    fit: FitResult,
    design: Design,
    y,
    alpha: float = 0.05,
    B: int = 500,
    seed: int = 0,
    *,
    threads: int | None = None,
) -> TestResult:
    """Two-sided parametric bootstrap test with plus-one counting."""
    _check_alpha(alpha)
    if B < 19:
        raise ValueError("bootstrap needs B >= 19")
    if not fit.converged:
        raise DispersionTestError("cannot bootstrap a fit that did not converge")
    stat = pearson_statistic(family, y, fit.eta)
    reps = bootstrap_statistics(family, fit, design, B, seed, threads)
    # relative slack so that a tie is not lost to rounding in the refit
    tol = 1e-12 * max(abs(stat), 1.0)
    upper = (1 + np.count_nonzero(reps >= stat - tol)) / (B + 1)
    lower = (1 + np.count_nonzero(reps <= stat + tol)) / (B + 1)
    p = min(1.0, 2.0 * min(upper, lower))
    return TestResult(stat, fit.edf, p, TestMethod.BOOTSTRAP, p >= alpha, alpha, B)
