"""Causal parent discovery for GLM targets via Pearson-risk dispersion tests."""

from .basis import BasisSpec, Design, build_design, eval_basis
from .data import Dataset, read_csv, write_csv
from .disptest import TestResult, bootstrap_test, chisq_test, pearson_statistic
from .edf import BERNOULLI, POISSON, Family, NumericOverflowError, cumulant, loglik_kernel, pearson_sq
from .fit import FitResult, fit_glm, loglik_at, select_lambda
from .search import CandidateRecord, SearchConfig, SearchReport, bic_refine, full_search, stepwise_search
from .simulate import ScmSpec, apply_shift, gen_fig1, gen_fig3, gen_fig4, generate

__version__ = "0.1.0"

__all__ = [
    "BERNOULLI",
    "POISSON",
    "BasisSpec",
    "CandidateRecord",
    "Dataset",
    "Design",
    "Family",
    "FitResult",
    "NumericOverflowError",
    "ScmSpec",
    "SearchConfig",
    "SearchReport",
    "TestResult",
    "apply_shift",
    "bic_refine",
    "bootstrap_test",
    "build_design",
    "chisq_test",
    "cumulant",
    "eval_basis",
    "fit_glm",
    "full_search",
    "gen_fig1",
    "gen_fig3",
    "gen_fig4",
    "generate",
    "loglik_at",
    "loglik_kernel",
    "pearson_sq",
    "pearson_statistic",
    "read_csv",
    "select_lambda",
    "stepwise_search",
    "write_csv",
]
