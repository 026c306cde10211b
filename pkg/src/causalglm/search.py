"""Search for the causal parent set of a GLM target.

``full_search`` fits every covariate subset, keeps the subsets whose fitted
model passes the dispersion test, and picks the candidate with the smallest
BIC. ``stepwise_search`` grows the model greedily on dispersion p-values and
then prunes it on BIC.
"""

from __future__ import annotations

import enum
import itertools
import logging
import math
from dataclasses import dataclass, field
from functools import partial
from typing import Sequence

import numpy as np

from ._parallel import pmap
from ._rng import derive_seed
from .basis import LINEAR, BasisError, BasisSpec, build_design
from .data import Dataset
from .disptest import DispersionTestError, TestMethod, TestResult, bootstrap_test, chisq_test
from .edf import Family, NumericOverflowError
from .fit import FitError, FitResult, select_lambda

log = logging.getLogger(__name__)

MAX_EXHAUSTIVE_P = 25


class SearchError(ValueError):
    pass


class Strategy(str, enum.Enum):
    FULL = "full"
    STEPWISE = "stepwise"


@dataclass(frozen=True)
class SearchConfig:
    alpha: float = 0.05
    method: TestMethod = TestMethod.CHISQ
    basis: BasisSpec = LINEAR
    strategy: Strategy = Strategy.FULL
    bootstrap_B: int = 199
    seed: int = 0
    max_subset_size: int | None = None
    lambda_grid: tuple[float, ...] | None = None
    force_chisq: bool = False
    threads: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "method", TestMethod(self.method))
        object.__setattr__(self, "strategy", Strategy(self.strategy))
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if self.method is TestMethod.BOOTSTRAP and self.bootstrap_B < 19:
            raise ValueError("bootstrap_B must be at least 19")
        if self.max_subset_size is not None and self.max_subset_size < 0:
            raise ValueError("max_subset_size must be nonnegative")


@dataclass(frozen=True)
class CandidateRecord:
    subset: tuple[int, ...]
    fit: FitResult | None
    test: TestResult | None
    is_candidate: bool
    note: str = ""

    @property
    def bic(self) -> float:
        return self.fit.bic if self.fit is not None else math.inf

    @property
    def p_value(self) -> float | None:
        return self.test.p_value if self.test is not None else None


@dataclass
class SearchReport:
    strategy: Strategy
    names: tuple[str, ...]
    all_records: list[CandidateRecord]
    candidates: list[tuple[int, ...]]
    selected: tuple[int, ...] | None
    selected_fit: FitResult | None
    trace: list[dict] = field(default_factory=list)

    @property
    def selected_names(self) -> tuple[str, ...] | None:
        if self.selected is None:
            return None
        return tuple(self.names[j] for j in self.selected)

    def record(self, subset: Sequence[int]) -> CandidateRecord | None:
        key = tuple(sorted(subset))
        for rec in self.all_records:
            if rec.subset == key:
                return rec
        return None


def canonical(subset: Sequence[int]) -> tuple[int, ...]:
    return tuple(sorted(int(j) for j in subset))


def subset_seed(seed: int, subset: Sequence[int]) -> int:
    return derive_seed(seed, "subset", *canonical(subset))


def evaluate_subset(
    subset: Sequence[int], data: Dataset, family: Family, cfg: SearchConfig, with_test: bool = True
) -> CandidateRecord:
    """Fit one subset and, optionally, test its dispersion.

    Fitting or testing failures produce a non-candidate record, never an error.
    """
    subset = canonical(subset)
    try:
        design = build_design(data, subset, cfg.basis)
        _, fit = select_lambda(family, design, data.y, cfg.lambda_grid)
    except (BasisError, FitError, NumericOverflowError, np.linalg.LinAlgError) as exc:
        return CandidateRecord(subset, None, None, False, note=f"fit failed: {exc}")

    if not with_test:
        return CandidateRecord(subset, fit, None, False, note="not tested")
    if not fit.converged:
        note = "separation" if fit.separated else "fit did not converge"
        return CandidateRecord(subset, fit, None, False, note=note)
    try:
        if cfg.method is TestMethod.CHISQ:
            test = chisq_test(family, fit, data.y, cfg.alpha, force=cfg.force_chisq)
        else:
            # bootstrap runs serially here; parallelism lives at the subset level
            test = bootstrap_test(
                family, fit, design, data.y, cfg.alpha, cfg.bootstrap_B,
                subset_seed(cfg.seed, subset), threads=1,
            )
    except DispersionTestError as exc:
        return CandidateRecord(subset, fit, None, False, note=f"test failed: {exc}")
    return CandidateRecord(subset, fit, test, test.accepted)


def bic_refine(records: Sequence[CandidateRecord]) -> tuple[int, ...] | None:
    """Candidate subset with minimal BIC; ties go to fewer covariates, then lexicographic order."""
    pool = [r for r in records if r.is_candidate]
    if not pool:
        return None
    best = min(pool, key=lambda r: (r.fit.bic, len(r.subset), r.subset))
    return best.subset


def enumerate_subsets(p: int, max_size: int | None = None) -> list[tuple[int, ...]]:
    top = p if max_size is None else min(p, max_size)
    return [s for k in range(top + 1) for s in itertools.combinations(range(p), k)]


def _evaluate_many(subsets, data, family, cfg, with_test=True) -> list[CandidateRecord]:
    work = partial(evaluate_subset, data=data, family=family, cfg=cfg, with_test=with_test)
    return pmap(work, subsets, cfg.threads)


def full_search(data: Dataset, family: Family, cfg: SearchConfig = SearchConfig()) -> SearchReport:
    """Exhaustive search over every subset (up to ``cfg.max_subset_size``)."""
    if data.p > MAX_EXHAUSTIVE_P and cfg.max_subset_size is None:
        raise SearchError(
            f"exhaustive search over p={data.p} covariates is infeasible; set max_subset_size"
        )
    subsets = enumerate_subsets(data.p, cfg.max_subset_size)
    records = _evaluate_many(subsets, data, family, cfg)
    candidates = [r.subset for r in records if r.is_candidate]
    selected = bic_refine(records)
    selected_fit = next((r.fit for r in records if r.subset == selected), None)
    trace = [] if selected is not None else [{"phase": "refine", "action": "none", "reason": "no candidate model"}]
    return SearchReport(Strategy.FULL, data.names, records, candidates, selected, selected_fit, trace)


def stepwise_search(data: Dataset, family: Family, cfg: SearchConfig = SearchConfig()) -> SearchReport:
    """Greedy forward selection on dispersion p-values, then backward BIC pruning."""
    names = data.names
    visited: dict[tuple[int, ...], CandidateRecord] = {}
    trace: list[dict] = []

    def evaluate(subsets, with_test=True):
        # phase 2 (untested fits) only ever follows phase 1, so a cached record suffices
        todo = [s for s in subsets if s not in visited]
        for rec in _evaluate_many(todo, data, family, cfg, with_test):
            visited[rec.subset] = rec
        return [visited[s] for s in subsets]

    current: tuple[int, ...] = ()
    (start,) = evaluate([current])
    p_cur = start.p_value if start.p_value is not None else 0.0
    trace.append({"phase": 1, "action": "start", "subset": [], "p_value": start.p_value})

    while len(current) < data.p and (cfg.max_subset_size is None or len(current) < cfg.max_subset_size):
        additions = [j for j in range(data.p) if j not in current]
        trials = evaluate([canonical(current + (j,)) for j in additions])
        scored = []
        for j, rec in zip(additions, trials):
            if rec.p_value is None:
                trace.append({"phase": 1, "action": "skip", "variable": names[j], "reason": rec.note})
            else:
                scored.append((j, rec.p_value))
        if not scored:
            break
        # max p-value, ties to the smallest covariate index
        k, p_k = max(scored, key=lambda t: (t[1], -t[0]))
        if p_k > p_cur or p_k > cfg.alpha:
            current = canonical(current + (k,))
            trace.append({"phase": 1, "action": "add", "variable": names[k], "p_value": p_k,
                          "previous_p_value": p_cur})
            p_cur = p_k
        else:
            trace.append({"phase": 1, "action": "stop", "best_variable": names[k], "p_value": p_k,
                          "current_p_value": p_cur})
            break

    candidates = [r.subset for r in _ordered(visited) if r.is_candidate]
    if not candidates:
        trace.append({"phase": 1, "action": "reject", "subset": [names[j] for j in current],
                      "reason": "no visited model passed the dispersion test"})
        return SearchReport(Strategy.STEPWISE, names, _ordered(visited), candidates, None, None, trace)

    terminal = visited[current]
    trace.append({"phase": 1, "action": "terminal", "subset": [names[j] for j in current],
                  "accepted": terminal.is_candidate})
    if terminal.fit is None:
        return SearchReport(Strategy.STEPWISE, names, _ordered(visited), candidates, None, None, trace)
    b_cur = terminal.fit.bic
    while current:
        removals = list(current)
        trials = evaluate([tuple(j for j in current if j != r) for r in removals], with_test=False)
        scored = [(r, rec.fit.bic) for r, rec in zip(removals, trials)
                  if rec.fit is not None and rec.fit.converged]
        if not scored:
            break
        k, b_k = min(scored, key=lambda t: (t[1], t[0]))
        if b_k < b_cur:
            current = tuple(j for j in current if j != k)
            trace.append({"phase": 2, "action": "remove", "variable": names[k], "bic": b_k,
                          "previous_bic": b_cur})
            b_cur = b_k
        else:
            trace.append({"phase": 2, "action": "stop", "best_variable": names[k], "bic": b_k,
                          "current_bic": b_cur})
            break

    records = _ordered(visited)
    candidates = [r.subset for r in records if r.is_candidate]
    return SearchReport(Strategy.STEPWISE, names, records, candidates, current, visited[current].fit, trace)


def _ordered(visited: dict) -> list[CandidateRecord]:
    return [visited[k] for k in sorted(visited, key=lambda s: (len(s), s))]


def run_search(data: Dataset, family: Family, cfg: SearchConfig) -> SearchReport:
    if cfg.strategy is Strategy.FULL:
        return full_search(data, family, cfg)
    return stepwise_search(data, family, cfg)
