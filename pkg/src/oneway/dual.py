"""Dual function of the capacity-constrained allocation problem and the
projected dual-descent price update.

For a price ``p >= 0`` the dual function is

    D(p) = sum_i U_i(q_i(p)) - p * (sum_i q_i(p) - Q)

with gradient ``D'(p) = Q - sum_i q_i(p)``, the capacity slack that the
supplier can measure.  Sums over users always run in ascending id order so
trajectories are bit-reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .errors import DomainError, InfeasibleInstanceError
from .utility import UserProfile, demand

FEASIBLE_OPTIMAL = "feasible-optimal"
FEASIBLE_CUSTOM = "feasible-custom"
CONVERGENT_ONLY = "convergent-only-custom"
STEP_MODES = (FEASIBLE_OPTIMAL, FEASIBLE_CUSTOM, CONVERGENT_ONLY)


@dataclass(frozen=True)
class ProblemInstance:
    users: tuple[UserProfile, ...]
    Q: float

    def __post_init__(self):
        users = tuple(sorted(self.users, key=lambda u: u.id))
        if not users:
            raise ValueError("an instance needs at least one user")
        ids = [u.id for u in users]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate user ids: {ids}")
        object.__setattr__(self, "users", users)
        lo = sum(u.m for u in users)
        hi = sum(u.M for u in users)
        if not lo <= self.Q <= hi:
            raise InfeasibleInstanceError(
                f"capacity Q={self.Q} outside [sum m, sum M] = [{lo}, {hi}]"
            )

    @property
    def n(self) -> int:
        return len(self.users)

    @property
    def mu(self) -> float:
        """Instance-wide strong-concavity modulus (min over users)."""
        return min(u.mu for u in self.users)

    @property
    def lsmooth(self) -> float:
        """Instance-wide utility smoothness constant (max over users)."""
        return max(u.lsmooth for u in self.users)

    @property
    def sum_m(self) -> float:
        return sum(u.m for u in self.users)

    @property
    def sum_M(self) -> float:
        return sum(u.M for u in self.users)


def aggregate_demand(instance: ProblemInstance, p: float) -> float:
    total = 0.0
    for user in instance.users:
        total += demand(user, p)
    return total


def dual_gradient(instance: ProblemInstance, p: float) -> float:
    """``D'(p) = Q - sum_i q_i(p)``; nondecreasing in ``p``."""
    return instance.Q - aggregate_demand(instance, p)


def dual_value(instance: ProblemInstance, p: float) -> float:
    if not p >= 0:
        raise DomainError(f"price must be nonnegative, got {p}")
    utility = 0.0
    load = 0.0
    for user in instance.users:
        q = demand(user, p)
        utility += user.utility.value(q)
        load += q
    return utility - p * (load - instance.Q)


def dual_component(user: UserProfile, Q: float, N: int, p: float) -> float:
    """Per-user share ``U_i(q_i) - p*q_i + p*Q/N`` of the dual function.

    Summing this over the users of an instance gives ``dual_value``; its
    derivative is ``Q/N - q_i(p)``.
    """
    q = demand(user, p)
    return user.utility.value(q) - p * q + p * Q / N


def max_feasible_step(instance: ProblemInstance) -> float:
    """Largest step ``mu/N`` that keeps every iterate primal-feasible."""
    return instance.mu / instance.n


@dataclass(frozen=True)
class StepSizePolicy:
    """How the supplier's step size is chosen.

    ``feasible-optimal`` uses ``mu/N``; ``feasible-custom`` accepts any
    ``0 < gamma <= mu/N``; ``convergent-only-custom`` accepts
    ``0 < gamma < 2*mu/N``, which converges but may overload the network.
    """

    mode: str = FEASIBLE_OPTIMAL
    gamma: Optional[float] = None

    def __post_init__(self):
        if self.mode not in STEP_MODES:
            raise ValueError(f"unknown step mode {self.mode!r}; expected one of {STEP_MODES}")
        if self.mode == FEASIBLE_OPTIMAL:
            if self.gamma is not None:
                raise ValueError("feasible-optimal derives gamma from the instance; do not pass one")
        elif self.gamma is None or not self.gamma > 0:
            raise ValueError(f"{self.mode} needs an explicit gamma > 0, got {self.gamma}")

    def resolve(self, instance: ProblemInstance) -> float:
        bound = max_feasible_step(instance)
        if self.mode == FEASIBLE_OPTIMAL:
            return bound
        if self.mode == FEASIBLE_CUSTOM and self.gamma > bound:
            raise ValueError(f"gamma={self.gamma} exceeds the feasible bound mu/N={bound}")
        if self.mode == CONVERGENT_ONLY and self.gamma >= 2 * bound:
            raise ValueError(f"gamma={self.gamma} outside the convergent window ]0, 2mu/N={2 * bound}[")
        return self.gamma


@dataclass(frozen=True)
class DualState:
    p: float
    t: int = 0

    def __post_init__(self):
        if not self.p >= 0:
            raise DomainError(f"price must be nonnegative, got {self.p}")


def price_step(state: DualState, gradient: float, gamma: float) -> DualState:
    """Projected descent step ``p <- max(0, p - gamma * D'(p))``."""
    if not gamma > 0:
        raise ValueError(f"step size must be positive, got {gamma}")
    return DualState(max(0.0, state.p - gamma * gradient), state.t + 1)


@dataclass(frozen=True)
class StoppingConfig:
    """Stop when ``|D'(p)| <= grad_tol`` or after ``max_iters`` updates.

    ``grad_tol=None`` means ``1e-9 * Q``.
    """

    grad_tol: Optional[float] = None
    max_iters: int = 100_000

    def tolerance(self, Q: float) -> float:
        return 1e-9 * Q if self.grad_tol is None else self.grad_tol

