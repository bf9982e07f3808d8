import math

import pytest

from sitcontrol import (
    GainCase, MeasurementRecord, PolicyController, PolicyKind, ReleasePolicy, SimState, closed_loop_release,
    lambda_per_crit, mixed_cap, mixed_release, open_loop_release, sparse_release, wild_equilibrium,
)
from sitcontrol.policies import HistoryError, PolicyError

from oracles import closed_loop_by_hand


def test_open_loop_rates(aedes):
    params, sterile = aedes
    assert 7 * open_loop_release(params, sterile, 7) == pytest.approx(11_011, rel=0.01)
    assert 14 * open_loop_release(params, sterile, 14) == pytest.approx(22_456, rel=0.01)


def test_open_loop_controller_ignores_state(aedes):
    params, sterile = aedes
    ctl = PolicyController(ReleasePolicy("open-loop"), params, sterile, 7)
    assert ctl(0, SimState(0, 1e4, 1e4)) == ctl(1, SimState(7, 0, 0))


def test_closed_loop_matches_hand_evaluation(aedes):
    params, sterile = aedes
    k = 0.2 / params.n_F
    got = closed_loop_release((5194.0, 6926.0, 0.0), k, params, sterile, 14)
    ref = closed_loop_by_hand(5194.0, 6926.0, 0.0, k, params.r, params.rho, params.mu_M, params.mu_F,
                              sterile.mu_S, sterile.gamma, 14)
    assert got == pytest.approx(ref, rel=1e-13)
    assert got > 0


def test_closed_loop_zero_cases(aedes):
    params, sterile = aedes
    k = 0.5 / params.n_F
    assert closed_loop_release((0.0, 0.0, 123.0), k, params, sterile, 7) == 0.0
    assert closed_loop_release((100.0, 100.0, 1e12), k, params, sterile, 7) == 0.0


def test_gain_outside_interval(aedes):
    params, sterile = aedes
    with pytest.raises(PolicyError):
        closed_loop_release((1, 1, 0), 1.0 / params.n_F, params, sterile, 7)
    with pytest.raises(PolicyError):
        ReleasePolicy("mixed", k=0.99 / params.n_F, case="case2").validate(params)


@pytest.mark.parametrize("kwargs", [
    dict(kind="closed-loop"),
    dict(kind="closed-loop", k=0.001, p=4),
    dict(kind="mixed", k=0.001, p=0),
    dict(kind="open-loop", lambda_const=-1.0),
    dict(kind="closed-loop", k=0.001, lambda_bar=3.0),
    dict(kind="mixed", k=0.001, lambda_bar=0.0),
])
def test_policy_validation(kwargs):
    with pytest.raises(PolicyError):
        ReleasePolicy(**kwargs)
    with pytest.raises(ValueError):
        ReleasePolicy("bang-bang")


def test_sparse_with_p1_is_synchronized(aedes):
    params, sterile = aedes
    for knf in (0.2, 0.6, 0.99):
        k = knf / params.n_F
        for M, F, S in [(5194, 6926, 0), (10, 20, 5), (300, 100, 50_000)]:
            rec = MeasurementRecord(0.0, M, F, S)
            assert sparse_release(rec, 0, k, params, sterile, 7) == pytest.approx(
                closed_loop_release((M, F, S), k, params, sterile, 7), rel=1e-12, abs=1e-9)


def test_sparse_zero_measurement(aedes):
    params, sterile = aedes
    k = 0.2 / params.n_F
    rec = MeasurementRecord(0.0, 0.0, 0.0, 0.0)
    for m in range(4):
        assert sparse_release(rec, m, k, params, sterile, 14) == 0.0
        rec = MeasurementRecord(0.0, 0.0, 0.0, 0.0, rec.past_releases + (0.0,))


def test_sparse_history_length_checked(aedes):
    params, sterile = aedes
    with pytest.raises(HistoryError):
        sparse_release(MeasurementRecord(0.0, 1, 1, 0, (1.0,)), 2, 0.001, params, sterile, 7)
    with pytest.raises(HistoryError):
        MeasurementRecord(3.0, 1, 1, 0).check(7, 4)
    MeasurementRecord(56.0, 1, 1, 0).check(7, 4)


def test_sparse_releases_nonincreasing_within_window(aedes):
    params, sterile = aedes
    k = 0.2 / params.n_F
    assert params.mu_F - (1 - params.r) * params.rho * k > 0
    eq = wild_equilibrium(params)
    rec = MeasurementRecord(0.0, eq.M_star, eq.F_star, 0.0)
    rates = []
    for m in range(4):
        lam = sparse_release(rec, m, k, params, sterile, 14)
        rates.append(lam)
        rec = MeasurementRecord(0.0, rec.M_hat, rec.F_hat, 0.0, rec.past_releases + (lam,))
    assert all(x > 0 for x in rates)
    assert all(b <= a for a, b in zip(rates, rates[1:]))


def test_mixed_saturates_and_vanishes(aedes):
    params, sterile = aedes
    k = 0.2 / params.n_F
    cap = mixed_cap(params, sterile, 14, GainCase.CASE1)
    eq = wild_equilibrium(params)
    big = MeasurementRecord(0.0, eq.M_star, eq.F_star, 0.0)
    assert sparse_release(big, 0, k, params, sterile, 14) > cap
    assert mixed_release(big, 0, k, params, sterile, 14) == cap
    tiny = MeasurementRecord(0.0, 1e-3, 1e-3, 1e5)
    assert mixed_release(tiny, 0, k, params, sterile, 14) == 0.0
    mid = MeasurementRecord(0.0, 5.0, 5.0, 0.0)
    assert mixed_release(mid, 0, k, params, sterile, 14) == sparse_release(mid, 0, k, params, sterile, 14) < cap


def test_mixed_explicit_cap(aedes):
    params, sterile = aedes
    k = 0.2 / params.n_F
    eq = wild_equilibrium(params)
    rec = MeasurementRecord(0.0, eq.M_star, eq.F_star, 0.0)
    assert mixed_release(rec, 0, k, params, sterile, 14, lambda_bar=500.0) == 500.0
    ctl = PolicyController(ReleasePolicy("mixed", k=k, lambda_bar=500.0), params, sterile, 14)
    assert ctl.cap == 500.0


def test_controller_measures_every_p_releases(aedes):
    params, sterile = aedes
    k = 0.2 / params.n_F
    ctl = PolicyController(ReleasePolicy(PolicyKind.CLOSED_LOOP_SPARSE, k=k, p=4), params, sterile, 7)
    states = [SimState(7.0 * n, 100.0 + n, 200.0 + n, 10.0 * n) for n in range(8)]
    for n, st in enumerate(states):
        ctl(n, st)
        assert ctl.record.t_measured == 7.0 * (n - n % 4)
        assert len(ctl.record.past_releases) == n % 4 + 1
    with pytest.raises(HistoryError):
        ctl(3, states[3])


def test_mixed_case1_cap_is_twice_open_loop(aedes):
    params, sterile = aedes
    for tau in (7, 14):
        assert mixed_cap(params, sterile, tau, "case1") == pytest.approx(2 * lambda_per_crit(params, sterile, tau))
        # for these parameters the case 2 cap coincides with the open-loop rate
        assert mixed_cap(params, sterile, tau, "case2") == pytest.approx(lambda_per_crit(params, sterile, tau))
    assert math.isfinite(mixed_cap(params, sterile, 0.01, "case2"))
