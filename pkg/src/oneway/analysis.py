"""Assumption checks and convergence-rate certificates.

Certificates compare a finished trajectory against the bound a theorem
promises under its hypotheses.  Hypotheses are checked first; calling a
certificate outside them raises :class:`InapplicableCertificateError`
rather than returning a meaningless verdict.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, replace
from typing import Optional, Sequence, Union

from .dual import ProblemInstance, dual_value, max_feasible_step
from .errors import InapplicableCertificateError, UnsupportedModelError
from .oracle import OracleSolution
from .protocol import Trajectory
from .utility import LogUtility

SLACK = 1e-9

SUBLINEAR = "sublinear-1t"
LINEAR_GENERAL = "linear-general"
LINEAR_N_INDEPENDENT = "linear-n-independent"


@dataclass(frozen=True)
class PriceInterval:
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo <= self.hi:
            raise ValueError(f"empty interval [{self.lo}, {self.hi}]")

    def __contains__(self, p: float) -> bool:
        return self.lo <= p <= self.hi


@dataclass(frozen=True)
class DisconnectedReport:
    """First gap in the union of user price intervals.

    ``left_user`` owns the interval ending at ``gap_lo``; ``right_user`` the
    one starting at ``gap_hi``.
    """

    left_user: int
    right_user: int
    gap_lo: float
    gap_hi: float

    @property
    def width(self) -> float:
        return self.gap_hi - self.gap_lo


@dataclass(frozen=True)
class RateCertificate:
    kind: str
    c: Optional[float]
    holds: bool
    worst_violation: float
    checked_range: tuple[int, int]
    detail: str = ""

    def as_dict(self) -> dict:
        return asdict(self)


def interval_dist(p: float, lo: float, hi: float) -> float:
    return max(0.0, lo - p, p - hi)


def check_connectivity(instance: ProblemInstance) -> Union[PriceInterval, DisconnectedReport]:
    """Merge the users' ``[p_lo_i, p_hi_i]`` intervals, or report the first gap."""
    order = sorted(instance.users, key=lambda u: (u.p_lo, u.p_hi))
    first = order[0]
    lo, hi, owner = first.p_lo, first.p_hi, first.id
    for user in order[1:]:
        if user.p_lo > hi:
            return DisconnectedReport(owner, user.id, hi, user.p_lo)
        if user.p_hi > hi:
            hi, owner = user.p_hi, user.id
    return PriceInterval(lo, hi)


def _log_users(instance):
    for u in instance.users:
        if not isinstance(u.utility, LogUtility):
            raise UnsupportedModelError(f"user {u.id} does not have a logarithmic utility")
    return instance.users


def check_prop6_condition(instance: ProblemInstance) -> bool:
    """Ordering test for log utilities with ``m_i = 0`` and a common ``M``.

    User ``i`` saturates on ``[a_i/(b_i + M), a_i/b_i]``.  With users sorted
    by ``a_i/b_i``, adjacent intervals overlap iff
    ``b_i * a_{i+1} <= (b_{i+1} + M) * a_i``, which for ``b = 1`` is
    ``(1 + M) * a_i >= a_{i+1}``.  A chain of overlaps makes the union an
    interval.
    """
    users = _log_users(instance)
    if any(u.m != 0 for u in users):
        raise UnsupportedModelError("ordering condition needs m_i = 0 for every user")
    M = users[0].M
    if any(u.M != M for u in users):
        raise UnsupportedModelError("ordering condition needs a common upper bound M")
    ranked = sorted(users, key=lambda u: (u.utility.a / u.utility.b, u.id))
    return all(
        cur.utility.b * nxt.utility.a <= (nxt.utility.b + M) * cur.utility.a
        for cur, nxt in zip(ranked, ranked[1:])
    )


def _close(x, y, rel=1e-12):
    return abs(x - y) <= rel * max(abs(x), abs(y))


def check_assumption5(instance: ProblemInstance) -> bool:
    """True iff all users share the same price breakpoints."""
    ref = instance.users[0]
    return all(_close(u.p_lo, ref.p_lo) and _close(u.p_hi, ref.p_hi) for u in instance.users)


def annotate(traj: Trajectory, instance: ProblemInstance, oracle: OracleSolution) -> Trajectory:
    """Fill ``dist_to_pstar`` and ``dual_gap`` from an oracle solution."""
    d_star = dual_value(instance, oracle.p_star)
    records = tuple(
        replace(r, dist_to_pstar=oracle.dist(r.p), dual_gap=dual_value(instance, r.p) - d_star)
        for r in traj.records
    )
    return replace(traj, records=records)


def certify_sublinear(traj: Trajectory, oracle: OracleSolution, instance: ProblemInstance) -> RateCertificate:
    """Check ``0 <= D(p(t)) - D(p*) <= 2 (N/mu) (p(0) - p*)^2 / (t + 4)`` for every row.

    ``N/mu`` is the Lipschitz constant of ``D'``; the bound is the standard
    one for gradient descent with step ``1/(N/mu) = mu/N``.  The lower side
    catches an oracle whose ``p*`` is not a minimizer.
    """
    gamma_opt = max_feasible_step(instance)
    if not _close(traj.gamma, gamma_opt):
        raise InapplicableCertificateError(
            f"O(1/t) bound needs gamma = mu/N = {gamma_opt}, trajectory used {traj.gamma}"
        )
    smooth = instance.n / instance.mu
    p_star = oracle.p_star
    d_star = dual_value(instance, p_star)
    slack = SLACK * abs(d_star)
    r0 = (traj.p0 - p_star) ** 2
    worst = 0.0
    lowest = math.inf
    for rec in traj.records:
        gap = dual_value(instance, rec.p) - d_star
        bound = 2.0 * smooth * r0 / (rec.t + 4)
        lowest = min(lowest, gap)
        if bound + slack > 0:
            worst = max(worst, gap / (bound + slack))
        elif gap > slack:
            worst = math.inf
    holds = worst <= 1.0 and lowest >= -slack
    detail = "" if lowest >= -slack else f"negative optimality gap {lowest:.3e}: p* is not a minimizer"
    return RateCertificate(SUBLINEAR, None, holds, worst, (traj.records[0].t, traj.records[-1].t), detail)


def certify_linear(
    traj: Trajectory,
    oracle: OracleSolution,
    instance: ProblemInstance,
    mode: str = "general",
) -> RateCertificate:
    """Check ``dist(p(t), P*) <= c**t * dist(p(0), P*) + 1e-9``.

    ``mode="general"`` uses ``c = 1 - gamma/L`` and needs the union of user
    price intervals to be connected; ``mode="n-independent"`` uses
    ``c = 1 - N*gamma/L`` and needs every user to share the same interval.
    In both cases ``p(0)`` must lie in that interval and ``gamma <= mu/N``.
    """
    if mode == "general":
        kind = LINEAR_GENERAL
        conn = check_connectivity(instance)
        if isinstance(conn, DisconnectedReport):
            raise InapplicableCertificateError(
                f"price intervals are disconnected (gap {conn.gap_lo}..{conn.gap_hi}); connectivity assumption fails"
            )
        c = 1.0 - traj.gamma / instance.lsmooth
    elif mode == "n-independent":
        kind = LINEAR_N_INDEPENDENT
        if not check_assumption5(instance):
            raise InapplicableCertificateError("users do not share common price breakpoints")
        conn = check_connectivity(instance)
        c = 1.0 - instance.n * traj.gamma / instance.lsmooth
    else:
        raise ValueError(f"unknown mode {mode!r}")

    if traj.p0 not in conn:
        raise InapplicableCertificateError(f"p(0)={traj.p0} outside the price interval [{conn.lo}, {conn.hi}]")
    bound_gamma = max_feasible_step(instance)
    if not (0 < traj.gamma <= bound_gamma * (1 + 1e-12)):
        raise InapplicableCertificateError(f"gamma={traj.gamma} outside ]0, mu/N={bound_gamma}]")

    d0 = oracle.dist(traj.p0)
    worst = 0.0
    holds = True
    for rec in traj.records:
        envelope = c ** rec.t * d0
        dist = oracle.dist(rec.p)
        if dist > envelope + SLACK:
            holds = False
        worst = max(worst, dist / (envelope + SLACK))
    return RateCertificate(kind, c, holds, worst, (traj.records[0].t, traj.records[-1].t))


def observed_contraction(traj: Trajectory, oracle: OracleSolution, floor: float = 1e-9) -> float:
    """Largest one-step ratio ``dist(t+1)/dist(t)`` while ``dist(t) > floor``."""
    worst = 0.0
    for a, b in zip(traj.records, traj.records[1:]):
        da = oracle.dist(a.p)
        if da > floor:
            worst = max(worst, oracle.dist(b.p) / da)
    return worst


def check_n_independence(
    trajs: Sequence[Trajectory],
    instances: Optional[Sequence[ProblemInstance]] = None,
    atol: float = 1e-9,
) -> bool:
    """Do price trajectories coincide across user counts?

    Applies to identical users with capacity proportional to ``N``, a common
    ``p(0)`` and ``gamma = mu/N``; pass ``instances`` to have the identical
    user requirement checked as well.
    """
    if len(trajs) < 2:
        raise InapplicableCertificateError("need at least two trajectories to compare")
    ref = trajs[0]
    for tr in trajs[1:]:
        if tr.p0 != ref.p0:
            raise InapplicableCertificateError(f"initial prices differ: {ref.p0} vs {tr.p0}")
        if not _close(tr.Q / tr.n_users, ref.Q / ref.n_users):
            raise InapplicableCertificateError("capacity is not proportional to the number of users")
        if not _close(tr.gamma * tr.n_users, ref.gamma * ref.n_users):
            raise InapplicableCertificateError("step sizes are not of the form mu/N with a common mu")
    if instances is not None:
        if len(instances) != len(trajs):
            raise ValueError("one instance per trajectory expected")
        proto = instances[0].users[0]
        for inst in instances:
            for u in inst.users:
                if (u.utility, u.m, u.M) != (proto.utility, proto.m, proto.M):
                    raise InapplicableCertificateError(f"user {u.id} differs from the common user template")
    length = min(len(tr) for tr in trajs)
    for t in range(length):
        p_ref = ref.records[t].p
        if any(abs(tr.records[t].p - p_ref) > atol for tr in trajs[1:]):
            return False
    return True


def write_report(certificates: Sequence[RateCertificate], out_dir: Union[str, os.PathLike], extra: Sequence[str] = ()) -> None:
    """Append certificates to ``certificates.txt`` and ``certificates.jsonl`` in ``out_dir``."""
    with open(os.path.join(out_dir, "certificates.txt"), "a") as txt, \
            open(os.path.join(out_dir, "certificates.jsonl"), "a") as js:
        for line in extra:
            txt.write(line + "\n")
        for cert in certificates:
            c = "-" if cert.c is None else f"{cert.c:.17g}"
            txt.write(
                f"{cert.kind:22s} c={c:20s} holds={cert.holds!s:5s} "
                f"worst_violation={cert.worst_violation:.6g} "
                f"range={cert.checked_range[0]}..{cert.checked_range[1]}"
                + (f" ({cert.detail})" if cert.detail else "") + "\n"
            )
            js.write(json.dumps(cert.as_dict(), sort_keys=True) + "\n")
