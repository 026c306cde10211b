"""Command-line front end: ``causal-glm {simulate,discover,disptest,bench}``.

Exit codes: 0 success, 1 data error, 2 configuration error, 3 no candidate
model survived the dispersion test.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .basis import BasisError, BasisKind, BasisSpec, build_design
from .bench import EXPERIMENTS, BenchError, rows_to_csv, run_experiment
from .data import DataError, Dataset, read_csv, write_csv
from .disptest import DispersionTestError, TestMethod, bootstrap_test, chisq_test
from .edf import Family, Kind, NumericOverflowError, SupportError, get_family
from .fit import FitError, select_lambda
from .search import CandidateRecord, SearchConfig, SearchError, Strategy, run_search
from .simulate import GENERATORS, ScmError, ScmSpec, generate

SCHEMA = "causal-glm/1"

EXIT_OK = 0
EXIT_DATA = 1
EXIT_CONFIG = 2
EXIT_NO_CANDIDATE = 3

log = logging.getLogger("causalglm")


class ConfigError(ValueError):
    pass


@dataclass
class RunReport:
    command: str
    config: dict
    records: list[dict]
    selected: list[str] | None
    timing: dict
    seed: int
    version: str = __version__
    schema: str = SCHEMA
    trace: list[dict] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, allow_nan=True)

    @classmethod
    def from_json(cls, text: str) -> "RunReport":
        doc = json.loads(text)
        if doc.get("schema") != SCHEMA:
            raise ValueError(f"unsupported report schema {doc.get('schema')!r}")
        return cls(**doc)


def _num(x) -> float | None:
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else None


def record_dict(rec: CandidateRecord, names) -> dict:
    fit, test = rec.fit, rec.test
    return {
        "subset": [names[j] for j in rec.subset],
        "statistic": _num(test.statistic) if test else None,
        "edf": _num(fit.edf) if fit else None,
        "p_value": _num(test.p_value) if test else None,
        "bic": _num(fit.bic) if fit else None,
        "lambda": _num(fit.lam) if fit else None,
        "converged": bool(fit.converged) if fit else False,
        "accepted": bool(rec.is_candidate),
        "note": rec.note,
    }


# ---------------------------------------------------------------- helpers

def _basis(args) -> BasisSpec:
    try:
        return BasisSpec(BasisKind(args.basis), spline_df=args.spline_df)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _load(args, family: Family) -> Dataset:
    data = read_csv(args.data, args.target)
    try:
        family.check_support(data.y)
    except SupportError as exc:
        raise DataError(str(exc)) from None
    if family.kind is Kind.BERNOULLI and np.ptp(data.y) == 0:
        raise ConfigError("binomial target is constant; no model can be fitted")
    return data


def _check_test(args, family: Family):
    if args.test == TestMethod.CHISQ.value and family.kind is not Kind.POISSON and not args.force:
        raise ConfigError("the chi-squared test needs --family poisson (or --force)")


def _write(text: str, out):
    if out is None or out == "-":
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
    else:
        Path(out).write_text(text)


def _config_echo(args) -> dict:
    skip = {"func", "command"}
    return {k: v for k, v in vars(args).items() if k not in skip}


# ---------------------------------------------------------------- commands

def cmd_simulate(args) -> int:
    if args.model.startswith("spec:"):
        spec = ScmSpec.from_json(Path(args.model[5:]))
    elif args.model in GENERATORS:
        spec = GENERATORS[args.model](args.pi) if args.model == "fig4" else GENERATORS[args.model]()
    else:
        raise ConfigError(f"unknown model {args.model!r}")
    shift = None
    if args.shift_sigma2 is not None or args.shift_vars:
        if args.shift_sigma2 is None or not args.shift_vars:
            raise ConfigError("--shift-sigma2 and --shift-vars go together")
        shift = {"sigma2": args.shift_sigma2, "variables": args.shift_vars.split(",")}
    data = generate(spec, args.n, args.seed, shift)
    write_csv(data, args.out)
    meta = {k: v for k, v in data.meta.items() if k != "spec"}
    print(json.dumps(meta, sort_keys=True))
    return EXIT_OK


def cmd_discover(args) -> int:
    family = get_family(args.family)
    _check_test(args, family)
    basis = _basis(args)
    data = _load(args, family)
    try:
        cfg = SearchConfig(alpha=args.alpha, method=args.test, basis=basis, strategy=args.search,
                           bootstrap_B=args.B, seed=args.seed, max_subset_size=args.max_size,
                           force_chisq=args.force, threads=args.threads)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    t0 = time.perf_counter()
    try:
        report = run_search(data, family, cfg)
    except SearchError as exc:
        raise ConfigError(str(exc)) from None
    elapsed = time.perf_counter() - t0
    run = RunReport(
        command="discover",
        config=_config_echo(args),
        records=[record_dict(r, data.names) for r in report.all_records],
        selected=None if report.selected is None else list(report.selected_names),
        timing={"seconds": elapsed},
        seed=args.seed,
        trace=report.trace,
    )
    _write(run.to_json(), args.out)
    if report.selected is None:
        log.warning("no candidate model passed the dispersion test")
        return EXIT_NO_CANDIDATE
    return EXIT_OK


def cmd_disptest(args) -> int:
    family = get_family(args.family)
    _check_test(args, family)
    basis = _basis(args)
    data = _load(args, family)
    names = [s.strip() for s in args.subset.split(",") if s.strip()] if args.subset else []
    try:
        subset = data.indices(names)
    except KeyError as exc:
        raise ConfigError(f"unknown covariate(s) {exc.args[0]}") from None
    t0 = time.perf_counter()
    design = build_design(data, subset, basis)
    _, fit = select_lambda(family, design, data.y)
    if args.test == TestMethod.CHISQ.value:
        test = chisq_test(family, fit, data.y, args.alpha, force=args.force)
    else:
        test = bootstrap_test(family, fit, design, data.y, args.alpha, args.B, args.seed,
                              threads=args.threads)
    rec = CandidateRecord(tuple(sorted(subset)), fit, test, test.accepted)
    run = RunReport(
        command="disptest",
        config=_config_echo(args),
        records=[record_dict(rec, data.names)],
        selected=None,
        timing={"seconds": time.perf_counter() - t0},
        seed=args.seed,
    )
    _write(run.to_json(), args.out)
    return EXIT_OK


def cmd_bench(args) -> int:
    n_list = [int(s) for s in args.n_list.split(",")] if args.n_list else None
    rows = run_experiment(args.experiment, args.reps, args.seed, n_list, args.threads)
    _write(rows_to_csv(rows), args.out)
    if args.experiment == "fig4-rates":
        log.warning("fig4 uses assumed defaults pi=0.1 and unit noise variances")
    return EXIT_OK


# ---------------------------------------------------------------- parser

def _model_flags(p):
    p.add_argument("--data", required=True, help="input CSV with a header row")
    p.add_argument("--target", default="Y")
    p.add_argument("--family", default="poisson", choices=["poisson", "binomial", "bernoulli"])
    p.add_argument("--basis", default="linear", choices=[k.value for k in BasisKind])
    p.add_argument("--spline-df", type=int, default=8)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--test", default="chisq", choices=[m.value for m in TestMethod])
    p.add_argument("--B", type=int, default=199, help="bootstrap replicates")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--force", action="store_true", help="allow the chi-squared test for binomial targets")
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--out", default=None, help="report path (default stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="causal-glm", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="draw a dataset from a structural model")
    p.add_argument("--model", required=True, help="fig1, fig3, fig4 or spec:<path.json>")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--shift-sigma2", type=float, default=None)
    p.add_argument("--shift-vars", default=None, help="comma-separated covariates to shift")
    p.add_argument("--pi", type=float, default=0.1, help="fig4 label-noise constant")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("discover", help="search for the causal parent set")
    _model_flags(p)
    p.add_argument("--search", default="full", choices=[s.value for s in Strategy])
    p.add_argument("--max-size", type=int, default=None)
    p.set_defaults(func=cmd_discover)

    p = sub.add_parser("disptest", help="test one subset for perfect dispersion")
    _model_flags(p)
    p.add_argument("--subset", default="", help="comma-separated covariates (empty: intercept only)")
    p.set_defaults(func=cmd_disptest)

    p = sub.add_parser("bench", help="reproduce simulation tables")
    p.add_argument("--experiment", required=True, help=", ".join(EXPERIMENTS))
    p.add_argument("--reps", type=int, default=100)
    p.add_argument("--seed", type=int, default=11)
    p.add_argument("--n-list", default=None, help="comma-separated sample sizes")
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except (DataError, FileNotFoundError, IsADirectoryError) as exc:
        log.error("data error: %s", exc)
        return EXIT_DATA
    except (ConfigError, BenchError, ScmError, BasisError, KeyError, ValueError) as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG
    except (FitError, DispersionTestError, NumericOverflowError) as exc:
        log.error("model error: %s", exc)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
