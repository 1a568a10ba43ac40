"""Reference solutions for the allocation problem.

:func:`solve` finds the optimal price interval by bisection on the monotone
dual gradient.  :func:`brute_force_primal` maximizes total utility over a
lattice of allocations without touching prices at all, and is used to check
the former.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .dual import ProblemInstance, dual_gradient, dual_value
from .utility import demand

BRUTE_FORCE_MAX_USERS = 4


@dataclass(frozen=True)
class OracleSolution:
    p_star_lo: float
    p_star_hi: float
    q_star: tuple[float, ...]
    primal_value: float
    dual_value_at_pstar: float
    tol: float

    @property
    def p_star(self) -> float:
        """The feasible-side optimal price, the target of descent from above."""
        return self.p_star_hi

    def dist(self, p: float) -> float:
        """Distance from ``p`` to the optimal price interval."""
        return max(0.0, self.p_star_lo - p, p - self.p_star_hi)


def default_tol(instance: ProblemInstance) -> float:
    return 1e-12 * (1.0 + max(u.p_hi for u in instance.users))


def _bisect(instance, left, right, go_right, tol):
    # keeps go_right(left) true and go_right(right) false
    while right - left > tol:
        mid = 0.5 * (left + right)
        if mid <= left or mid >= right:
            break
        if go_right(dual_gradient(instance, mid)):
            left = mid
        else:
            right = mid
    return left, right


def solve(instance: ProblemInstance, tol: Optional[float] = None) -> OracleSolution:
    """Optimal price interval ``[p_lo*, p_hi*]`` and allocation ``q(p_hi*)``.

    The interval endpoints are bracketed to width ``tol`` on the outside, so
    ``D'(p_star_hi) >= 0`` and the returned allocation never exceeds ``Q``.
    When ``Q == sum(m)`` every price above ``max_i p_hi_i`` is optimal; the
    reported upper endpoint is then ``max_i p_hi_i``.
    """
    if tol is None:
        tol = default_tol(instance)
    if not tol > 0:
        raise ValueError(f"tol must be positive, got {tol}")
    top = max(u.p_hi for u in instance.users)

    if dual_gradient(instance, top) <= 0:
        hi = top
    else:
        _, hi = _bisect(instance, 0.0, top, lambda g: g <= 0, tol)

    if dual_gradient(instance, 0.0) >= 0:
        lo = 0.0
    else:
        lo, _ = _bisect(instance, 0.0, top, lambda g: g < 0, tol)

    q_star = tuple(demand(u, hi) for u in instance.users)
    primal = 0.0
    for user, q in zip(instance.users, q_star):
        primal += user.utility.value(q)
    return OracleSolution(
        p_star_lo=lo,
        p_star_hi=hi,
        q_star=q_star,
        primal_value=primal,
        dual_value_at_pstar=dual_value(instance, hi),
        tol=tol,
    )


@dataclass(frozen=True)
class GridSolution:
    q: tuple[float, ...]
    value: float


def brute_force_primal(instance: ProblemInstance, pitch: float) -> GridSolution:
    """Exact maximum of ``sum_i U_i(q_i)`` over the lattice ``q_i = m_i + k*pitch``.

    Feasibility is ``q_i <= M_i`` and ``sum_i q_i <= Q``.  The search is a
    max-plus dynamic program over the integer budget ``sum_i k_i <= K``,
    which visits the same set of lattice points as full enumeration.  Among
    tied maximizers the lexicographically smallest index vector wins.
    """
    if not pitch > 0:
        raise ValueError(f"grid pitch must be positive, got {pitch}")
    if instance.n > BRUTE_FORCE_MAX_USERS:
        raise ValueError(f"brute force is limited to {BRUTE_FORCE_MAX_USERS} users, got {instance.n}")

    budget = int(math.floor((instance.Q - instance.sum_m) / pitch + 1e-9))
    tables = []
    for user in instance.users:
        count = int(math.floor((user.M - user.m) / pitch + 1e-9))
        tables.append(np.array([user.utility.value(user.m + k * pitch) for k in range(count + 1)]))

    # best[i][j]: optimum for users i.. with at most j budget units
    best = [None] * (instance.n + 1)
    best[instance.n] = np.zeros(budget + 1)
    for i in range(instance.n - 1, -1, -1):
        values, tail = tables[i], best[i + 1]
        cur = np.full(budget + 1, -np.inf)
        for k in range(min(len(values), budget + 1)):
            np.maximum(cur[k:], values[k] + tail[: budget + 1 - k], out=cur[k:])
        best[i] = cur

    ks = []
    remaining = budget
    for i in range(instance.n):
        values, tail = tables[i], best[i + 1]
        target = best[i][remaining]
        for k in range(min(len(values), remaining + 1)):
            if values[k] + tail[remaining - k] == target:
                break
        ks.append(k)
        remaining -= k

    q = tuple(user.m + k * pitch for user, k in zip(instance.users, ks))
    value = 0.0
    for user, qi in zip(instance.users, q):
        value += user.utility.value(qi)
    return GridSolution(q, value)
