import dataclasses
import json

import numpy as np
import pytest

from oneway import (
    DisconnectedReport,
    PriceInterval,
    StepSizePolicy,
    StoppingConfig,
    annotate,
    certify_linear,
    certify_sublinear,
    check_assumption5,
    check_connectivity,
    check_n_independence,
    check_prop6_condition,
    max_feasible_step,
    run,
    solve,
)
from oneway.analysis import interval_dist, observed_contraction, write_report
from oneway.dual import FEASIBLE_CUSTOM
from oneway.errors import InapplicableCertificateError, UnsupportedModelError
from oneway import GenericUtility, ProblemInstance, UserProfile

from conftest import identical, log_instance, random_instance


def test_connectivity_identical_users():
    assert check_connectivity(identical(3, 2.0)) == PriceInterval(4.0, 20.0)


def test_connectivity_overlapping():
    P = check_connectivity(log_instance([(1, 1, 0, 4), (2, 1, 0, 4)], 2.0))
    assert isinstance(P, PriceInterval)
    assert (P.lo, P.hi) == (pytest.approx(0.2), 2.0)


def test_connectivity_gap():
    rep = check_connectivity(log_instance([(1, 1, 0, 4), (10, 1, 0, 4)], 2.0))
    assert isinstance(rep, DisconnectedReport)
    assert (rep.left_user, rep.right_user) == (0, 1)
    assert (rep.gap_lo, rep.gap_hi) == (1.0, 2.0)
    assert rep.width == 1.0


def test_connectivity_touching_intervals_are_connected():
    # [1, 5] and [5, 25]
    P = check_connectivity(log_instance([(5, 1, 0, 4), (25, 1, 0, 4)], 2.0))
    assert P == PriceInterval(1.0, 25.0)


@pytest.mark.parametrize("a, expected", [((1, 2), True), ((1, 10), False), ((3, 3, 3), True)])
def test_ordering_condition_examples(a, expected):
    inst = log_instance([(ai, 1, 0, 4) for ai in a], 1.0)
    assert check_prop6_condition(inst) is expected


def test_ordering_condition_sorts_internally():
    inst = log_instance([(2, 1, 0, 4), (1, 1, 0, 4)], 1.0)
    assert check_prop6_condition(inst)


def test_ordering_condition_with_general_shift():
    # a=(1, 5), b=(2, 2), M=1: intervals [1/3, 1/2] and [5/3, 5/2] do not touch,
    # although the unit-shift test (b + M) a_1 = 3 >= a_2 = 2.9 passes
    inst = log_instance([(1, 2, 0, 1), (2.9, 2, 0, 1)], 1.0)
    assert isinstance(check_connectivity(inst), DisconnectedReport)
    assert not check_prop6_condition(inst)
    # b < 1 widens the intervals: [1/1.5, 2] and [2.9/1.5, 5.8] overlap
    inst = log_instance([(1, 0.5, 0, 1), (2.9, 0.5, 0, 1)], 1.0)
    assert isinstance(check_connectivity(inst), PriceInterval)
    assert check_prop6_condition(inst)


def test_ordering_condition_preconditions():
    with pytest.raises(UnsupportedModelError):
        check_prop6_condition(log_instance([(1, 1, 0, 4), (2, 1, 0, 3)], 1.0))
    with pytest.raises(UnsupportedModelError):
        check_prop6_condition(log_instance([(1, 1, 0.5, 4)], 1.0))
    gen = GenericUtility(lambda q: np.log(1 + q), lambda q: 1 / (1 + q))
    with pytest.raises(UnsupportedModelError):
        check_prop6_condition(ProblemInstance((UserProfile(0, gen, 0, 4),), 1.0))


def test_ordering_condition_implies_connectivity(rng):
    hits = 0
    for _ in range(500):
        n = int(rng.integers(2, 8))
        M = rng.uniform(0.5, 5)
        a = np.sort(rng.uniform(0.5, 20, n))
        b = rng.uniform(0.1, 3, n)
        inst = log_instance([(ai, bi, 0, M) for ai, bi in zip(a, b)], 0.5 * n * M)
        if check_prop6_condition(inst):
            hits += 1
            assert isinstance(check_connectivity(inst), PriceInterval)
    assert hits > 50


def test_common_breakpoints_examples():
    assert check_assumption5(identical(4, 2.0))
    assert not check_assumption5(log_instance([(20, 1, 0, 4), (40, 1, 0, 4)], 2.0))
    inst = log_instance([(2, 1, 0, 1), (4, 2, 0, 2)], 1.0)
    assert [(u.p_lo, u.p_hi) for u in inst.users] == [(1, 2), (1, 2)]
    assert check_assumption5(inst)


def test_common_breakpoints_implies_connectivity(rng):
    for _ in range(100):
        p_lo, p_hi = sorted(rng.uniform(0.5, 30, 2))
        specs = []
        for _ in range(int(rng.integers(1, 6))):
            # choose b, solve a/b = p_hi and a/(b+M) = p_lo
            b = rng.uniform(0.2, 3)
            a = p_hi * b
            specs.append((a, b, 0, a / p_lo - b))
        inst = log_instance(specs, 0.5 * sum(s[3] for s in specs))
        if check_assumption5(inst):
            assert isinstance(check_connectivity(inst), PriceInterval)


def test_interval_dist():
    assert interval_dist(3, 1, 5) == 0
    assert interval_dist(1, 1, 5) == 0
    assert interval_dist(0.5, 1, 5) == 0.5
    assert interval_dist(7, 1, 5) == 2


def test_sublinear_two_user():
    inst = identical(2, 1.6)
    sol = solve(inst)
    cert = certify_sublinear(run(inst, 30.0), sol, inst)
    assert cert.holds
    assert cert.checked_range[0] == 0
    assert 0 < cert.worst_violation <= 1


def test_sublinear_needs_optimal_step():
    inst = identical(2, 1.6)
    traj = run(inst, 30.0, StepSizePolicy(FEASIBLE_CUSTOM, 0.2))
    with pytest.raises(InapplicableCertificateError):
        certify_sublinear(traj, solve(inst), inst)


def test_sublinear_negative_control():
    inst = identical(2, 1.6)
    sol = solve(inst)
    wrong = dataclasses.replace(sol, p_star_lo=sol.p_star_lo + 1, p_star_hi=sol.p_star_hi + 1)
    cert = certify_sublinear(run(inst, 30.0), wrong, inst)
    assert not cert.holds
    assert "not a minimizer" in cert.detail


def test_linear_n_independent_five_users():
    inst = identical(5, 4.0)
    sol = solve(inst)
    traj = run(inst, 15.0)
    cert = certify_linear(traj, sol, inst, "n-independent")
    assert cert.c == pytest.approx(0.96)
    assert cert.holds
    general = certify_linear(traj, sol, inst, "general")
    assert general.c == pytest.approx(0.992)
    assert general.holds
    assert observed_contraction(traj, sol) <= cert.c


def test_linear_envelope_baseline_at_t0():
    inst = identical(5, 4.0)
    sol = solve(inst)
    traj = run(inst, 15.0, stop=StoppingConfig(max_iters=0))
    cert = certify_linear(traj, sol, inst, "general")
    assert cert.holds
    assert cert.worst_violation == pytest.approx(1.0, rel=1e-9)


def test_linear_preconditions():
    inst = identical(5, 4.0)
    sol = solve(inst)
    with pytest.raises(InapplicableCertificateError, match="outside the price interval"):
        certify_linear(run(inst, 30.0), sol, inst, "general")
    gap = log_instance([(1, 1, 0, 4), (10, 1, 0, 4)], 4.0)
    with pytest.raises(InapplicableCertificateError, match="connectivity"):
        certify_linear(run(gap, 1.5), solve(gap), gap, "general")
    hetero = log_instance([(20, 1, 0, 4), (40, 1, 0, 4)], 4.0)
    with pytest.raises(InapplicableCertificateError, match="breakpoints"):
        certify_linear(run(hetero, 15.0), solve(hetero), hetero, "n-independent")
    with pytest.raises(ValueError):
        certify_linear(run(inst, 15.0), sol, inst, "quadratic")


def test_linear_from_below():
    inst = identical(3, 6.0)
    sol = solve(inst)
    traj = run(inst, 4.5)
    assert traj.p0 < sol.p_star_lo
    assert certify_linear(traj, sol, inst, "n-independent").holds


def test_n_independence_small():
    trajs = [run(identical(n, 0.8 * n), 30.0) for n in (2, 4)]
    assert check_n_independence(trajs)


def test_n_independence_preconditions():
    a = run(identical(2, 1.6), 30.0)
    with pytest.raises(InapplicableCertificateError):
        check_n_independence([a, run(identical(4, 2.0), 30.0)])
    with pytest.raises(InapplicableCertificateError):
        check_n_independence([a, run(identical(4, 3.2), 25.0)])
    hetero = log_instance([(20, 1, 0, 4), (20, 1, 0, 4), (20, 1, 0, 4), (30, 1.5, 0, 4)], 3.2)
    b = run(hetero, 30.0)
    with pytest.raises(InapplicableCertificateError):
        check_n_independence([a, b], [identical(2, 1.6), hetero])


def test_n_independence_detects_difference():
    a = run(identical(2, 1.6), 30.0)
    b = run(identical(4, 3.2), 30.0)
    recs = list(b.records)
    recs[7] = dataclasses.replace(recs[7], p=recs[7].p + 2e-9)
    assert not check_n_independence([a, dataclasses.replace(b, records=tuple(recs))])


def test_annotate_fills_optional_columns():
    inst = identical(2, 1.6)
    sol = solve(inst)
    traj = annotate(run(inst, 30.0), inst, sol)
    first, last = traj.records[0], traj.records[-1]
    assert first.dist_to_pstar == pytest.approx(30 - 100 / 9, abs=1e-9)
    assert first.dual_gap == pytest.approx(1.6 * 30 - 40 * np.log(1.8), rel=1e-9)
    assert last.dist_to_pstar < 1e-7


def test_write_report(tmp_path):
    inst = identical(2, 1.6)
    sol = solve(inst)
    cert = certify_sublinear(run(inst, 30.0), sol, inst)
    write_report([cert], tmp_path, extra=["header"])
    text = (tmp_path / "certificates.txt").read_text().splitlines()
    assert text[0] == "header"
    assert "sublinear-1t" in text[1] and "holds=True" in text[1]
    rec = json.loads((tmp_path / "certificates.jsonl").read_text())
    assert rec["kind"] == "sublinear-1t" and rec["holds"] is True
    assert set(rec) == {"kind", "c", "holds", "worst_violation", "checked_range", "detail"}


@pytest.mark.parametrize("seed", range(10))
def test_certificates_hold_on_random_instances(seed):
    rng = np.random.default_rng(3000 + seed)
    while True:
        inst = random_instance(rng, n_max=8)
        P = check_connectivity(inst)
        if isinstance(P, PriceInterval):
            break
    sol = solve(inst)
    traj = run(inst, rng.uniform(P.lo, P.hi), stop=StoppingConfig(max_iters=5000))
    assert certify_linear(traj, sol, inst, "general").holds
    assert certify_sublinear(traj, sol, inst).holds
