"""Seeded structural causal model simulator.

A model is a set of structural assignments ``node = expr(parents) + noise``
plus a target drawn from a Poisson or Bernoulli law with natural parameter
``expr(parents)``. A target may instead be tied to a latent node Z through
``Y = F^{-1}(Phi(eps_Z / sd_Z))``: Y then has exactly the stated law given its
parents while staying coupled to every child of Z.

Each node draws its noise from its own substream keyed by
``(seed, node name, row block)``, so output does not depend on declaration
order and blocks can be generated independently.
"""

from __future__ import annotations

import ast
import graphlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.special import ndtr, pdtr, pdtrc

from ._rng import substream
from .data import Dataset
from .edf import POISSON, get_family

ROW_BLOCK = 8192
LAWS = ("poisson", "bernoulli")


class ScmError(ValueError):
    pass


# -- expressions -------------------------------------------------------------

_FUNCS: dict[str, Callable] = {
    "sin": np.sin,
    "exp": np.exp,
    "cube": lambda v: v * v * v,
}


class Expr:
    """Arithmetic over named parents: ``+ - *``, unary minus, constants, sin/cube/exp."""

    def __init__(self, source: str):
        self.source = source.strip() or "0"
        try:
            tree = ast.parse(self.source, mode="eval")
        except SyntaxError as exc:
            raise ScmError(f"cannot parse expression {source!r}: {exc.msg}") from None
        self.names: set[str] = set()
        self._check(tree.body)
        self._code = compile(tree, "<expr>", "eval")

    def _check(self, node):
        if isinstance(node, ast.BinOp) and isinstance(node.op, (ast.Add, ast.Sub, ast.Mult)):
            self._check(node.left)
            self._check(node.right)
        elif isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            self._check(node.operand)
        elif isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) \
                and not isinstance(node.value, bool):
            pass
        elif isinstance(node, ast.Name):
            if node.id in _FUNCS:
                raise ScmError(f"function {node.id!r} used as a variable")
            self.names.add(node.id)
        elif isinstance(node, ast.Call) and isinstance(node.func, ast.Name) \
                and node.func.id in _FUNCS and len(node.args) == 1 and not node.keywords:
            self._check(node.args[0])
        else:
            raise ScmError(f"unsupported construct in expression {self.source!r}")

    def __call__(self, env: Mapping[str, np.ndarray], n: int) -> np.ndarray:
        scope = dict(_FUNCS)
        scope.update({k: env[k] for k in self.names})
        value = eval(self._code, {"__builtins__": {}}, scope)  # vetted by _check
        return np.broadcast_to(np.asarray(value, dtype=float), (n,)).copy()


# -- model specification -----------------------------------------------------

@dataclass(frozen=True)
class NodeSpec:
    name: str
    parents: tuple[str, ...] = ()
    expr: str = "0"
    noise_var: float = 1.0
    hidden: bool = False


@dataclass(frozen=True)
class TargetSpec:
    name: str
    law: str
    expr: str
    parents: tuple[str, ...] = ()
    latent: str | None = None


@dataclass(frozen=True)
class ScmSpec:
    nodes: tuple[NodeSpec, ...]
    target: TargetSpec
    label: str = "custom"
    notes: tuple[str, ...] = field(default=())

    def __post_init__(self):
        nodes = tuple(NodeSpec(n.name, tuple(n.parents), n.expr, float(n.noise_var), bool(n.hidden))
                      for n in self.nodes)
        t = self.target
        target = TargetSpec(t.name, t.law.lower(), t.expr, tuple(t.parents), t.latent)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "target", target)
        object.__setattr__(self, "notes", tuple(self.notes))
        self._validate()

    # validation ---------------------------------------------------------
    def _validate(self):
        names = [n.name for n in self.nodes] + [self.target.name]
        if len(set(names)) != len(names):
            raise ScmError("node names must be unique")
        if self.target.law not in LAWS:
            raise ScmError(f"target law must be one of {LAWS}")
        known = set(names)
        for n in self.nodes:
            if n.noise_var < 0:
                raise ScmError(f"node {n.name!r}: negative noise variance")
            self._check_parents(n.name, n.parents, Expr(n.expr), known)
        self._check_parents(self.target.name, self.target.parents, Expr(self.target.expr), known)
        if self.target.latent is not None:
            latent = self.node(self.target.latent)
            if latent.noise_var <= 0:
                raise ScmError("latent node needs positive noise variance")
        self.order()  # raises on cycles

    @staticmethod
    def _check_parents(name, parents, expr, known):
        unknown = set(parents) - known
        if unknown:
            raise ScmError(f"node {name!r}: unknown parents {sorted(unknown)}")
        undeclared = expr.names - set(parents)
        if undeclared:
            raise ScmError(f"node {name!r}: expression uses undeclared parents {sorted(undeclared)}")

    def node(self, name: str) -> NodeSpec:
        for n in self.nodes:
            if n.name == name:
                return n
        raise ScmError(f"no node named {name!r}")

    def graph(self) -> dict[str, set[str]]:
        g = {n.name: set(n.parents) for n in self.nodes}
        g[self.target.name] = set(self.target.parents) | ({self.target.latent} if self.target.latent else set())
        return g

    def order(self) -> list[str]:
        try:
            return list(graphlib.TopologicalSorter(self.graph()).static_order())
        except graphlib.CycleError as exc:
            raise ScmError(f"graph is cyclic: {exc.args[1]}") from None

    @property
    def observed(self) -> tuple[str, ...]:
        hidden = {n.name for n in self.nodes if n.hidden}
        if self.target.latent:
            hidden.add(self.target.latent)
        return tuple(n.name for n in self.nodes if n.name not in hidden)

    # serialization ------------------------------------------------------
    def to_dict(self) -> dict:
        out = {
            "label": self.label,
            "nodes": [dict(asdict(n), parents=list(n.parents)) for n in self.nodes],
            "target": dict(asdict(self.target), parents=list(self.target.parents)),
        }
        if self.notes:
            out["notes"] = list(self.notes)
        return out

    @classmethod
    def from_dict(cls, doc: Mapping) -> "ScmSpec":
        try:
            nodes = tuple(NodeSpec(n["name"], tuple(n.get("parents", ())), n.get("expr", "0"),
                                   float(n.get("noise_var", 1.0)), bool(n.get("hidden", False)))
                          for n in doc["nodes"])
            t = doc["target"]
            target = TargetSpec(t["name"], t["law"], t["expr"], tuple(t.get("parents", ())), t.get("latent"))
        except (KeyError, TypeError) as exc:
            raise ScmError(f"malformed model document: {exc}") from None
        return cls(nodes, target, doc.get("label", "custom"), tuple(doc.get("notes", ())))

    @classmethod
    def from_json(cls, path) -> "ScmSpec":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")


# -- sampling ----------------------------------------------------------------

def _blocked(seed: int, kind: str, name: str, n: int, draw: str = "normal") -> np.ndarray:
    out = np.empty(n)
    for b, start in enumerate(range(0, n, ROW_BLOCK)):
        stop = min(start + ROW_BLOCK, n)
        rng = substream(seed, kind, name, b)
        out[start:stop] = rng.standard_normal(stop - start) if draw == "normal" else rng.random(stop - start)
    return out


def poisson_quantile_normal(z: np.ndarray, mu: np.ndarray) -> np.ndarray:
    """Poisson(mu) quantile at probability ``Phi(z)``, by exact CDF inversion.

    Returns the smallest ``k`` with ``P(K <= k) >= Phi(z)``. The upper half is
    worked on the survival scale so probabilities near one keep full precision.
    A Cornish-Fisher guess is refined by unit steps.
    """
    z = np.asarray(z, dtype=float)
    mu = np.broadcast_to(np.asarray(mu, dtype=float), z.shape)
    k = np.floor(mu + np.sqrt(mu) * z + (z * z - 1.0) / 6.0)
    k = np.maximum(k, 0.0)
    upper = z > 0
    p_lo = ndtr(z)
    p_hi = ndtr(-z)

    def reached(kk, idx):
        # P(K <= kk) >= Phi(z) for the entries idx
        with np.errstate(invalid="ignore"):
            return np.where(upper[idx], pdtrc(kk, mu[idx]) <= p_hi[idx], pdtr(kk, mu[idx]) >= p_lo[idx])

    idx = np.arange(z.size)
    flat_k = k.reshape(-1)
    up = idx[~reached(flat_k, idx)]
    while up.size:
        flat_k[up] += 1
        up = up[~reached(flat_k[up], up)]
    down = idx[(flat_k > 0)]
    down = down[reached(flat_k[down] - 1, down)]
    while down.size:
        flat_k[down] -= 1
        down = down[flat_k[down] > 0]
        down = down[reached(flat_k[down] - 1, down)]
    return flat_k.reshape(z.shape)


def generate(spec: ScmSpec, n: int, seed: int, shift: Mapping | None = None) -> Dataset:
    """Draw ``n`` rows from ``spec``.

    ``shift`` is ``{"sigma2": s, "variables": [...]}``: each named node receives
    an extra independent N(0, s) term in its assignment, and descendants respond.
    """
    if n < 1:
        raise ScmError("n must be at least 1")
    if seed < 0:
        raise ScmError("seed must be nonnegative")
    shift_vars: set[str] = set()
    sigma2 = 0.0
    if shift:
        sigma2 = float(shift.get("sigma2", 0.0))
        shift_vars = set(shift.get("variables", ()))
        if sigma2 < 0:
            raise ScmError("shift variance must be nonnegative")
        if spec.target.name in shift_vars:
            raise ScmError("cannot shift the target")
        unknown = shift_vars - {nd.name for nd in spec.nodes}
        if unknown:
            raise ScmError(f"unknown shift variables {sorted(unknown)}")

    nodes = {nd.name: nd for nd in spec.nodes}
    env: dict[str, np.ndarray] = {}
    raw_noise: dict[str, np.ndarray] = {}
    for name in spec.order():
        if name == spec.target.name:
            env[name] = _draw_target(spec, env, raw_noise, n, seed)
            continue
        nd = nodes[name]
        z = _blocked(seed, "noise", name, n)
        raw_noise[name] = z
        value = Expr(nd.expr)(env, n) + math.sqrt(nd.noise_var) * z
        if name in shift_vars:
            value = value + math.sqrt(sigma2) * _blocked(seed, "shift", name, n)
        env[name] = value

    meta = {
        "generator": spec.label,
        "seed": int(seed),
        "n": int(n),
        "shift": {"sigma2": sigma2, "variables": sorted(shift_vars)} if shift else None,
        "spec": spec.to_dict(),
    }
    if spec.notes:
        meta["notes"] = list(spec.notes)
    cols = {name: env[name] for name in spec.observed}
    cols[spec.target.name] = env[spec.target.name]
    return Dataset.from_columns(cols, target=spec.target.name, meta=meta)


def _draw_target(spec: ScmSpec, env, raw_noise, n: int, seed: int) -> np.ndarray:
    t = spec.target
    family = get_family(t.law)
    theta = Expr(t.expr)(env, n)
    mu = family.mean(theta)  # raises past the Poisson overflow cap
    if t.latent is not None:
        z = raw_noise[t.latent]
    else:
        z = _blocked(seed, "target", t.name, n)
    if family is POISSON:
        return poisson_quantile_normal(z, mu)
    # Bernoulli quantile: 1 exactly when Phi(z) > 1 - mu
    return (ndtr(-z) < mu).astype(float)


# -- the three simulation designs ----------------------------------------------

def fig1_spec() -> ScmSpec:
    return ScmSpec(
        nodes=(
            NodeSpec("X1", (), "0", 1.0),
            NodeSpec("Z", ("X1",), "X1", 1.0, hidden=True),
            NodeSpec("X2", ("Z",), "Z", 1.0),
        ),
        target=TargetSpec("Y", "poisson", "X1", ("X1",), latent="Z"),
        label="fig1",
    )


def fig3_spec() -> ScmSpec:
    v = 0.04
    return ScmSpec(
        nodes=(
            NodeSpec("X1", (), "0", v),
            NodeSpec("X2", ("X1",), "X1", v),
            NodeSpec("X3", ("X1", "X2"), "X1 + X2", v),
            NodeSpec("Z", ("X2", "X3"), "sin(5*X2) + cube(X3)", v, hidden=True),
            NodeSpec("X4", ("X2",), "X2", v),
            NodeSpec("X5", ("Z",), "Z", v),
            NodeSpec("X6", ("Z",), "Z", v),
            NodeSpec("X7", ("X6",), "X6", v),
        ),
        target=TargetSpec("Y", "poisson", "sin(5*X2) + cube(X3)", ("X2", "X3"), latent="Z"),
        label="fig3",
    )


def fig4_spec(pi: float = 0.1, noise_var: float = 1.0) -> ScmSpec:
    if not 0.0 < pi < 1.0:
        raise ScmError("pi must lie in (0, 1)")
    return ScmSpec(
        nodes=(
            NodeSpec("X1", (), "0", noise_var),
            NodeSpec("X2", ("X1",), "X1", noise_var),
            NodeSpec("X3", (), "0", noise_var),
            NodeSpec("X4", ("X2",), "X2", noise_var),
            NodeSpec("X5", ("Y",), f"{1.0 - pi!r}*Y + {pi!r}*(1 - Y)", noise_var),
        ),
        target=TargetSpec("Y", "bernoulli", "0.8*X2 - 0.9*X3", ("X2", "X3")),
        label="fig4",
        notes=(f"pi={pi!r} and noise variance {noise_var!r} are assumed defaults",),
    )


def gen_fig1(n: int, seed: int) -> Dataset:
    return generate(fig1_spec(), n, seed)


def gen_fig3(n: int, seed: int) -> Dataset:
    return generate(fig3_spec(), n, seed)


def gen_fig4(n: int, seed: int, pi: float = 0.1) -> Dataset:
    return generate(fig4_spec(pi), n, seed)


def apply_shift(data: Dataset, sigma2: float, variables: Sequence[str], seed: int) -> Dataset:
    """Regenerate ``data``'s model with extra N(0, sigma2) noise on ``variables``."""
    doc = data.meta.get("spec")
    if doc is None:
        raise ScmError("dataset carries no generating model; cannot apply a shift")
    spec = ScmSpec.from_dict(doc)
    if spec.target.name in variables:
        raise ScmError("cannot shift the target")
    missing = set(variables) - set(spec.observed)
    if missing:
        raise KeyError(", ".join(sorted(missing)))
    return generate(spec, data.n, seed, {"sigma2": sigma2, "variables": list(variables)})


GENERATORS = {"fig1": fig1_spec, "fig3": fig3_spec, "fig4": fig4_spec}
