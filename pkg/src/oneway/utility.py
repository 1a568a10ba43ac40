"""User utility models and the clamped demand response.

A user facing price ``p`` consumes the amount that maximizes ``U(q) - p*q``
over its private box ``[m, M]``.  For a strictly concave ``U`` this is the
inverse marginal utility clamped to the box.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.optimize import brentq

from .errors import DomainError, UnsupportedModelError

#: grid size used to estimate curvature for models without closed forms
CURVATURE_GRID_POINTS = 100_000
#: finite-difference step, relative to the interval width
CURVATURE_FD_STEP = 1e-6


class UtilityModel(ABC):
    """A strongly concave, increasing utility of a single allocation."""

    @abstractmethod
    def value(self, q: float) -> float:
        ...

    @abstractmethod
    def derivative(self, q: float) -> float:
        ...

    def inverse_derivative(self, p: float) -> float:
        """Allocation at which the marginal utility equals ``p``.

        Models without a closed form return ``nan``; :func:`demand` then
        falls back to root finding on the box.
        """
        return math.nan

    def curvature(self, m: float, M: float) -> tuple[float, float]:
        """``(mu, lsmooth)``: min and max of ``-U''`` on ``[m, M]``."""
        return _grid_curvature(self, m, M)


@dataclass(frozen=True)
class LogUtility(UtilityModel):
    """``U(q) = a * log(b + q)``."""

    a: float
    b: float

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise ValueError(f"LogUtility needs a > 0 and b > 0, got a={self.a}, b={self.b}")

    def value(self, q):
        return self.a * math.log(self.b + q)

    def derivative(self, q):
        return self.a / (self.b + q)

    def second_derivative(self, q):
        return -self.a / (self.b + q) ** 2

    def inverse_derivative(self, p):
        if p == 0:
            return math.inf
        return self.a / p - self.b

    def curvature(self, m, M):
        _check_interval(m, M)
        if m <= -self.b:
            raise UnsupportedModelError(f"log utility undefined at q={m} (b={self.b})")
        return self.a / (self.b + M) ** 2, self.a / (self.b + m) ** 2


@dataclass(frozen=True)
class GenericUtility(UtilityModel):
    """Utility given by plain callables.

    ``derivative`` is mandatory.  ``second_derivative`` is used for the
    curvature constants when present, otherwise ``-U''`` is estimated by
    central differences of ``derivative``.
    """

    value_fn: Callable[[float], float]
    derivative_fn: Callable[[float], float]
    inverse_derivative_fn: Optional[Callable[[float], float]] = None
    second_derivative_fn: Optional[Callable[[float], float]] = None

    def value(self, q):
        return float(self.value_fn(q))

    def derivative(self, q):
        return float(self.derivative_fn(q))

    def inverse_derivative(self, p):
        if self.inverse_derivative_fn is None:
            return math.nan
        return float(self.inverse_derivative_fn(p))


def _check_interval(m, M):
    if not m < M:
        raise DomainError(f"need m < M, got m={m}, M={M}")


def _vectorized(fn, x):
    try:
        out = np.asarray(fn(x), dtype=float)
        if out.shape == x.shape:
            return out
    except (TypeError, ValueError):
        pass
    return np.array([float(fn(v)) for v in x])


def _grid_curvature(model, m, M, points=CURVATURE_GRID_POINTS):
    _check_interval(m, M)
    q = np.linspace(m, M, points)
    second = getattr(model, "second_derivative_fn", None) or getattr(model, "second_derivative", None)
    with np.errstate(all="ignore"):
        if second is not None:
            neg_curv = -_vectorized(second, q)
        else:
            h = (M - m) * CURVATURE_FD_STEP
            deriv = getattr(model, "derivative_fn", model.derivative)
            f = lambda x: _vectorized(deriv, x)  # noqa: E731
            inner = q[1:-1]
            neg_curv = np.empty_like(q)
            neg_curv[1:-1] = -(f(inner + h) - f(inner - h)) / (2 * h)
            # second-order one-sided differences keep the stencil inside [m, M]
            ends = np.array([m, M])
            f0, f1, f2 = f(ends), f(ends + np.array([h, -h])), f(ends + np.array([2 * h, -2 * h]))
            neg_curv[0] = -(-3 * f0[0] + 4 * f1[0] - f2[0]) / (2 * h)
            neg_curv[-1] = -(3 * f0[1] - 4 * f1[1] + f2[1]) / (2 * h)
    if not np.all(np.isfinite(neg_curv)):
        raise UnsupportedModelError("utility is not twice differentiable on [m, M]")
    mu, lsmooth = float(neg_curv.min()), float(neg_curv.max())
    if mu <= 0:
        raise UnsupportedModelError(f"utility is not strongly concave on [{m}, {M}] (min -U'' = {mu})")
    return mu, lsmooth


def curvature_on_interval(model: UtilityModel, m: float, M: float) -> tuple[float, float]:
    """Strong-concavity modulus and gradient Lipschitz constant of ``model`` on ``[m, M]``."""
    return model.curvature(m, M)


@dataclass(frozen=True)
class UserProfile:
    """A user's private data: utility and consumption box ``[m, M]``.

    ``p_lo = U'(M)`` and ``p_hi = U'(m)`` are the prices at which the
    demand saturates at ``M`` and ``m``.
    """

    id: int
    utility: UtilityModel
    m: float
    M: float
    p_lo: float = field(init=False)
    p_hi: float = field(init=False)
    mu: float = field(init=False, repr=False)
    lsmooth: float = field(init=False, repr=False)

    def __post_init__(self):
        if self.m < 0:
            raise DomainError(f"user {self.id}: lower bound m={self.m} is negative")
        _check_interval(self.m, self.M)
        p_lo = self.utility.derivative(self.M)
        p_hi = self.utility.derivative(self.m)
        if not (0 <= p_lo < p_hi):
            raise UnsupportedModelError(
                f"user {self.id}: need 0 <= U'(M) < U'(m), got {p_lo}, {p_hi}"
            )
        mu, lsmooth = self.utility.curvature(self.m, self.M)
        object.__setattr__(self, "p_lo", p_lo)
        object.__setattr__(self, "p_hi", p_hi)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "lsmooth", lsmooth)


def breakpoints(profile: UserProfile) -> tuple[float, float]:
    return profile.p_lo, profile.p_hi


def demand(profile: UserProfile, p: float) -> float:
    """Utility-maximizing consumption of ``profile`` at price ``p``.

    At ``p = 0`` the inverse marginal utility of an increasing utility is
    unbounded, so the demand is ``M`` (the limit as ``p -> 0+``).
    """
    if not p >= 0:
        raise DomainError(f"price must be nonnegative, got {p}")
    if p <= profile.p_lo:
        return profile.M
    if p >= profile.p_hi:
        return profile.m
    q = profile.utility.inverse_derivative(p)
    if math.isnan(q):
        u = profile.utility
        q = brentq(lambda x: u.derivative(x) - p, profile.m, profile.M, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    return min(max(q, profile.m), profile.M)
