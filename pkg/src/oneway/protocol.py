"""Discrete-time simulation of the broadcast-price protocol.

Each round the supplier broadcasts one scalar price, every user responds
with its private demand, and the supplier observes only the total load.
The :class:`Supplier` never sees a utility, a bound or an individual
demand: its whole input per round is one float.
"""

from __future__ import annotations

import csv
import io
import logging
import os
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Optional, Sequence, Union

from .dual import DualState, ProblemInstance, StepSizePolicy, StoppingConfig, price_step
from .errors import DomainError
from .utility import UserProfile, demand

log = logging.getLogger(__name__)

HALT = "halt"
RECORD_AND_CONTINUE = "record-and-continue"
BLACKOUT_POLICIES = (HALT, RECORD_AND_CONTINUE)

GRADIENT_TOLERANCE = "gradient-tolerance"
MAX_ITERATIONS = "max-iterations"
BLACKOUT_HALT = "blackout-halt"

CSV_COLUMNS = ("t", "p", "aggregate_demand", "gradient", "feasible", "dist_to_pstar", "dual_gap")


class Supplier:
    """Price-setting side of the protocol.

    Parameters
    ----------
    Q : float
        Capacity.
    gamma : float
        Step size.
    p : float
        Initial price.
    blackout_policy : str
        ``"halt"`` stops the run on the first overload,
        ``"record-and-continue"`` keeps iterating.
    """

    def __init__(self, Q: float, gamma: float, p: float, blackout_policy: str = RECORD_AND_CONTINUE):
        if blackout_policy not in BLACKOUT_POLICIES:
            raise ValueError(f"unknown blackout policy {blackout_policy!r}")
        if not gamma > 0:
            raise ValueError(f"step size must be positive, got {gamma}")
        self.Q = Q
        self.gamma = gamma
        self.blackout_policy = blackout_policy
        self._state = DualState(p)

    @property
    def p(self) -> float:
        return self._state.p

    def broadcast(self) -> float:
        return self._state.p

    def measure(self, load: float) -> float:
        """Dual gradient from the metered load: ``Q - load``."""
        return self.Q - load

    def update(self, gradient: float) -> None:
        self._state = price_step(self._state, gradient, self.gamma)


class UserAgent:
    """A user holding its profile privately and answering price broadcasts."""

    def __init__(self, profile: UserProfile):
        self._profile = profile
        self.last_price: Optional[float] = None
        self.last_demand: Optional[float] = None

    @property
    def id(self) -> int:
        return self._profile.id

    def receive(self, p: float) -> float:
        self.last_price = p
        self.last_demand = demand(self._profile, p)
        return self.last_demand


def _meter(agents: Sequence[UserAgent], p: float) -> float:
    # agents are in ascending id order; single accumulator for reproducibility
    load = 0.0
    for agent in agents:
        load += agent.receive(p)
    return load


@dataclass(frozen=True)
class IterationRecord:
    t: int
    p: float
    aggregate_demand: float
    gradient: float
    feasible: bool
    dist_to_pstar: Optional[float] = None
    dual_gap: Optional[float] = None


@dataclass(frozen=True)
class Trajectory:
    records: tuple[IterationRecord, ...]
    terminated_reason: str
    Q: float
    gamma: float
    n_users: int
    final_demands: tuple[float, ...] = field(default=(), repr=False)

    @property
    def p0(self) -> float:
        return self.records[0].p

    @property
    def prices(self) -> list[float]:
        return [r.p for r in self.records]

    @property
    def aggregates(self) -> list[float]:
        return [r.aggregate_demand for r in self.records]

    def __len__(self):
        return len(self.records)


def run(
    instance: ProblemInstance,
    p0: float,
    policy: StepSizePolicy = StepSizePolicy(),
    stop: StoppingConfig = StoppingConfig(),
    blackout_policy: str = RECORD_AND_CONTINUE,
    p_star_hi: Optional[float] = None,
) -> Trajectory:
    """Simulate synchronous rounds of broadcast, response, metering, update.

    ``p_star_hi`` is optional knowledge of the upper optimal price, used
    only to warn when ``p0`` starts below it (no feasibility guarantee).
    """
    if not p0 >= 0:
        raise DomainError(f"initial price must be nonnegative, got {p0}")
    gamma = policy.resolve(instance)
    if p_star_hi is not None and p0 < p_star_hi:
        log.warning("p0=%r is below the optimal price %r; iterates may overload the network", p0, p_star_hi)

    supplier = Supplier(instance.Q, gamma, p0, blackout_policy)
    agents = [UserAgent(u) for u in instance.users]
    tol = stop.tolerance(instance.Q)

    records = []
    t = 0
    while True:
        p = supplier.broadcast()
        load = _meter(agents, p)
        gradient = supplier.measure(load)
        feasible = load <= instance.Q
        records.append(IterationRecord(t, p, load, gradient, feasible))
        if not feasible:
            log.debug("overload at t=%d: load %r > Q=%r", t, load, instance.Q)
            if supplier.blackout_policy == HALT:
                reason = BLACKOUT_HALT
                break
        if abs(gradient) <= tol:
            reason = GRADIENT_TOLERANCE
            break
        if t >= stop.max_iters:
            reason = MAX_ITERATIONS
            break
        supplier.update(gradient)
        t += 1

    return Trajectory(
        records=tuple(records),
        terminated_reason=reason,
        Q=instance.Q,
        gamma=gamma,
        n_users=instance.n,
        final_demands=tuple(a.last_demand for a in agents),
    )


class FeasibilityResult(NamedTuple):
    feasible: bool
    first_violation: Optional[int]


def feasibility_certificate(traj: Trajectory) -> FeasibilityResult:
    """Exact check that the metered load never exceeded capacity."""
    if not traj.records:
        raise ValueError("empty trajectory")
    for rec in traj.records:
        if not rec.aggregate_demand <= traj.Q:
            return FeasibilityResult(False, rec.t)
    return FeasibilityResult(True, None)


def replay_aggregate(instance: ProblemInstance, prices: Iterable[float]) -> list[float]:
    """Loads that :func:`run` would meter at each of ``prices``."""
    agents = [UserAgent(u) for u in instance.users]
    out = []
    for p in prices:
        if not p >= 0:
            raise DomainError(f"price must be nonnegative, got {p}")
        out.append(_meter(agents, p))
    return out


def _fmt(x: Optional[float]) -> str:
    return "" if x is None else format(x, ".17g")


def write_csv(traj: Trajectory, dest: Union[str, os.PathLike, io.TextIOBase]) -> None:
    """Write the trajectory as CSV, one row per iteration."""
    if isinstance(dest, (str, os.PathLike)):
        with open(dest, "w", newline="") as fh:
            write_csv(traj, fh)
        return
    writer = csv.writer(dest, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in traj.records:
        writer.writerow([
            r.t, _fmt(r.p), _fmt(r.aggregate_demand), _fmt(r.gradient),
            1 if r.feasible else 0, _fmt(r.dist_to_pstar), _fmt(r.dual_gap),
        ])


def _opt(s: str) -> Optional[float]:
    return None if s == "" else float(s)


def read_csv(src: Union[str, os.PathLike, io.TextIOBase]) -> list[IterationRecord]:
    if isinstance(src, (str, os.PathLike)):
        with open(src, newline="") as fh:
            return read_csv(fh)
    reader = csv.DictReader(src)
    if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
        raise ValueError(f"unexpected trajectory header {reader.fieldnames}; expected {list(CSV_COLUMNS)}")
    return [
        IterationRecord(
            t=int(row["t"]),
            p=float(row["p"]),
            aggregate_demand=float(row["aggregate_demand"]),
            gradient=float(row["gradient"]),
            feasible=row["feasible"] == "1",
            dist_to_pstar=_opt(row["dist_to_pstar"]),
            dual_gap=_opt(row["dual_gap"]),
        )
        for row in reader
    ]
