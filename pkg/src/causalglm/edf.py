"""Exponential dispersion families with canonical link.

Only the one-parameter members with a(phi) = 1 are shipped: Poisson and
Bernoulli. All functions accept scalars or numpy arrays for ``theta``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

# exp(709.78) overflows a float64; stop a little earlier with a clear error.
POISSON_THETA_CAP = 700.0


class NumericOverflowError(ArithmeticError):
    """Raised when a natural parameter would overflow the cumulant function."""


class SupportError(ValueError):
    """Raised when a response value lies outside the family support."""


class Kind(str, enum.Enum):
    POISSON = "poisson"
    BERNOULLI = "bernoulli"


@dataclass(frozen=True)
class Family:
    """An exponential dispersion family ``exp{(y*theta - b(theta))/a + c(y)}``."""

    kind: Kind
    dispersion: float = 1.0

    def __post_init__(self):
        if not self.dispersion > 0:
            raise ValueError("dispersion must be positive")

    @property
    def name(self) -> str:
        return self.kind.value

    def _guard(self, theta):
        theta = np.asarray(theta, dtype=float)
        if not np.all(np.isfinite(theta)):
            raise NumericOverflowError("natural parameter is not finite")
        if self.kind is Kind.POISSON and np.any(theta > POISSON_THETA_CAP):
            raise NumericOverflowError(
                f"Poisson natural parameter exceeds cap {POISSON_THETA_CAP:g}"
            )
        return theta

    def b(self, theta):
        theta = self._guard(theta)
        if self.kind is Kind.POISSON:
            return np.exp(theta)
        return np.maximum(theta, 0.0) + np.log1p(np.exp(-np.abs(theta)))

    def mean(self, theta):
        """First derivative of the cumulant function, the conditional mean."""
        theta = self._guard(theta)
        if self.kind is Kind.POISSON:
            return np.exp(theta)
        return expit(theta)

    def variance(self, theta):
        """Second derivative of the cumulant function (variance / dispersion)."""
        theta = self._guard(theta)
        if self.kind is Kind.POISSON:
            return np.exp(theta)
        return expit(theta) * expit(-theta)

    def link(self, mu):
        """Canonical link, the inverse of :meth:`mean`."""
        mu = np.asarray(mu, dtype=float)
        if self.kind is Kind.POISSON:
            return np.log(mu)
        return np.log(mu) - np.log1p(-mu)

    def check_support(self, y):
        y = np.asarray(y, dtype=float)
        if self.kind is Kind.POISSON:
            ok = (y >= 0) & (y == np.floor(y))
        else:
            ok = (y == 0) | (y == 1)
        if not np.all(ok):
            raise SupportError(f"response outside the {self.name} support")
        return y

    def sample(self, theta, rng: np.random.Generator):
        """Draw responses at natural parameters ``theta``."""
        mu = self.mean(theta)
        if self.kind is Kind.POISSON:
            return rng.poisson(mu).astype(float)
        return (rng.random(np.shape(mu)) < mu).astype(float)


POISSON = Family(Kind.POISSON)
BERNOULLI = Family(Kind.BERNOULLI)


def get_family(name: str) -> Family:
    """Look up a family by name; ``binomial`` and ``logistic`` alias Bernoulli."""
    key = name.strip().lower()
    if key == "poisson":
        return POISSON
    if key in ("bernoulli", "binomial", "logistic"):
        return BERNOULLI
    raise ValueError(f"unknown family {name!r}")


def cumulant(family: Family, theta):
    """Return ``(b, b_dot, b_ddot)`` at ``theta``."""
    return family.b(theta), family.mean(theta), family.variance(theta)


def pearson_sq(family: Family, y, theta):
    """Squared Pearson residual ``(y - b'(theta))**2 / (b''(theta) a)``."""
    y = family.check_support(y)
    mu = family.mean(theta)
    return (y - mu) ** 2 / (family.variance(theta) * family.dispersion)


def loglik_kernel(family: Family, y, theta) -> float:
    """Sum of ``(y*theta - b(theta)) / a``; the base measure c(y) is omitted."""
    y = family.check_support(np.atleast_1d(y))
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    if y.shape != theta.shape:
        raise ValueError(f"length mismatch: y {y.shape} vs theta {theta.shape}")
    return float(np.sum(y * theta - family.b(theta)) / family.dispersion)
