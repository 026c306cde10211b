"""Simulation benchmarks: detection tables and population risk contrasts.

Every replicate draws its data from ``derive_seed(master, experiment, n, rep)``
so any single cell can be rerun on its own. Replicates are spread over worker
processes; the searches inside a replicate run serially.
"""

from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass
from functools import partial
from pathlib import Path
from typing import Sequence

import numpy as np

from ._parallel import pmap
from ._rng import derive_seed
from .basis import LINEAR, SPLINE, BasisSpec, build_design
from .data import Dataset
from .disptest import TestMethod, pearson_statistic
from .edf import BERNOULLI, POISSON, Family
from .fit import fit_glm, loglik_at
from .search import SearchConfig, Strategy, run_search
from .simulate import apply_shift, gen_fig1, gen_fig3, gen_fig4

FIG3_N = (100, 150, 200, 250, 500, 1000)
FIG4_N = (250, 500, 1000)
FIG1_N = 100_000
FIG1_SIGMA2 = (0.0, 5.0, 10.0)
PARENTS = ("X2", "X3")

EXPERIMENTS = ("fig3-table", "fig4-rates", "fig1-population")


class BenchError(ValueError):
    pass


def cell_seed(master: int, experiment: str, n: int, rep) -> int:
    return derive_seed(master, experiment, n, rep)


@dataclass(frozen=True)
class Replicate:
    n: int
    rep: int
    full_hit: bool
    step_hit: bool
    full_seconds: float
    step_seconds: float


def _timed_search(data: Dataset, family: Family, cfg: SearchConfig):
    t0 = time.perf_counter()
    report = run_search(data, family, cfg)
    return report, time.perf_counter() - t0


def _detection_replicate(
    cell: tuple[int, int], experiment: str, master: int, family: Family, basis: BasisSpec,
    method: TestMethod, alpha: float, bootstrap_B: int, pi: float,
) -> Replicate:
    n, rep = cell
    seed = cell_seed(master, experiment, n, rep)
    data = gen_fig3(n, seed) if experiment == "fig3-table" else gen_fig4(n, seed, pi)
    hits, secs = [], []
    for strategy in (Strategy.FULL, Strategy.STEPWISE):
        cfg = SearchConfig(alpha=alpha, method=method, basis=basis, strategy=strategy,
                           bootstrap_B=bootstrap_B, seed=seed, threads=1)
        report, dt = _timed_search(data, family, cfg)
        hits.append(report.selected_names == PARENTS)
        secs.append(dt)
    return Replicate(n, rep, hits[0], hits[1], secs[0], secs[1])


def _tabulate(reps: Sequence[Replicate], n_list: Sequence[int]) -> list[dict]:
    rows = []
    for n in n_list:
        cell = [r for r in reps if r.n == n]
        rows.append({
            "n": n,
            "reps": len(cell),
            "full_detect_pct": 100.0 * np.mean([r.full_hit for r in cell]),
            "step_detect_pct": 100.0 * np.mean([r.step_hit for r in cell]),
            "full_seconds": float(np.mean([r.full_seconds for r in cell])),
            "step_seconds": float(np.mean([r.step_seconds for r in cell])),
        })
    return rows


def _detection(experiment, reps, seed, n_list, threads, **kw) -> list[dict]:
    if reps < 1:
        raise BenchError("reps must be positive")
    cells = [(n, r) for n in n_list for r in range(reps)]
    work = partial(_detection_replicate, experiment=experiment, master=seed, **kw)
    return _tabulate(pmap(work, cells, threads), n_list)


def fig3_table(reps: int = 100, seed: int = 11, n_list: Sequence[int] = FIG3_N,
               threads: int | None = None, alpha: float = 0.05) -> list[dict]:
    """Detection rates of {X2, X3} on the seven-covariate Poisson model."""
    return _detection("fig3-table", reps, seed, n_list, threads, family=POISSON, basis=SPLINE,
                      method=TestMethod.CHISQ, alpha=alpha, bootstrap_B=199, pi=0.1)


def fig4_rates(reps: int = 100, seed: int = 11, n_list: Sequence[int] = FIG4_N,
               threads: int | None = None, alpha: float = 0.05, bootstrap_B: int = 199,
               pi: float = 0.1) -> list[dict]:
    """Detection rates of {X2, X3} on the logistic model with bootstrap testing."""
    return _detection("fig4-rates", reps, seed, n_list, threads, family=BERNOULLI, basis=LINEAR,
                      method=TestMethod.BOOTSTRAP, alpha=alpha, bootstrap_B=bootstrap_B, pi=pi)


FIG1_MODELS = {"beta1": ("X1",), "beta2": ("X2",), "beta12": ("X1", "X2")}


def fig1_population(seed: int = 11, n: int = FIG1_N, sigma2_list: Sequence[float] = FIG1_SIGMA2,
                    threads: int | None = None) -> list[dict]:
    """Pearson risks and log-likelihoods of the fig1 models across shifts.

    The three regression models are fitted on observational data. Each is then
    refitted on every environment (``pearson_refit``) and also evaluated there
    with its observational coefficients (``pearson_transfer``, ``loglik_transfer``).
    The causal model keeps ``beta = (0, 1)`` on ``X1`` throughout.
    """
    experiment = "fig1-population"
    train = gen_fig1(n, cell_seed(seed, experiment, n, "train"))
    fitted = {}
    for label, cols in FIG1_MODELS.items():
        design = build_design(train, train.indices(cols), LINEAR)
        fitted[label] = (cols, fit_glm(POISSON, design, train.y).beta)
    fitted["causal"] = (("X1",), np.array([0.0, 1.0]))

    rows = []
    envs = [(s, apply_shift(train, s, ("X1", "X2"), cell_seed(seed, experiment, n, f"shift-{s!r}")))
            for s in sigma2_list]
    for sigma2, env in [(None, train)] + envs:
        for label, (cols, beta) in fitted.items():
            design = build_design(env, env.indices(cols), LINEAR)
            eta = design.matrix @ beta
            if label == "causal":
                refit = eta
            else:
                refit = fit_glm(POISSON, design, env.y).eta
            rows.append({
                "environment": "train" if sigma2 is None else f"sigma2={sigma2:g}",
                "sigma2": 0.0 if sigma2 is None else float(sigma2),
                "model": label,
                "pearson_refit": pearson_statistic(POISSON, env.y, refit) / env.n,
                "pearson_transfer": pearson_statistic(POISSON, env.y, eta) / env.n,
                "loglik_transfer": loglik_at(POISSON, design.matrix, env.y, beta),
            })
    return rows


def run_experiment(experiment: str, reps: int = 100, seed: int = 11,
                   n_list: Sequence[int] | None = None, threads: int | None = None,
                   **kw) -> list[dict]:
    if experiment == "fig3-table":
        return fig3_table(reps, seed, n_list or FIG3_N, threads, **kw)
    if experiment == "fig4-rates":
        return fig4_rates(reps, seed, n_list or FIG4_N, threads, **kw)
    if experiment == "fig1-population":
        n = n_list[0] if n_list else FIG1_N
        return fig1_population(seed, n, threads=threads)
    raise BenchError(f"unknown experiment {experiment!r}; choose from {', '.join(EXPERIMENTS)}")


def rows_to_csv(rows: Sequence[dict], path=None) -> str:
    buf = io.StringIO()
    if rows:
        writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text
