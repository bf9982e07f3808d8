import math

import numpy as np
import pytest

from sitcontrol import (
    ImpulseSchedule, IntegrationError, IntegratorConfig, ModelParams, SimState, SterileParams, integrate, ms_per,
    sit_flow, super_solution, wild_equilibrium, wild_flow,
)
from sitcontrol.dynamics import IntegrityError, ScheduleError

from oracles import linear_comparison_ref, mean_inverse_quadrature, ms_per_ref


def test_config_validation():
    with pytest.raises(ValueError):
        IntegratorConfig(method="euler")
    with pytest.raises(ValueError):
        IntegratorConfig(max_step=0)
    with pytest.raises(ScheduleError):
        IntegratorConfig(max_step=1.0).step_for(7.0)
    assert IntegratorConfig().step_for(7.0) == 0.1
    assert IntegratorConfig().step_for(2.0) == 2.0 / 50


def test_equilibrium_is_stationary(aedes):
    params = aedes[0]
    eq = wild_equilibrium(params)
    for method in ("rk4", "rk45"):
        tr = integrate(wild_flow(params), SimState(0, eq.M_star, eq.F_star), 365, cfg=IntegratorConfig(method))
        assert np.max(np.abs(tr.M / eq.M_star - 1)) < 1e-6
        assert np.max(np.abs(tr.F / eq.F_star - 1)) < 1e-6


def test_female_free_subspace(aedes):
    params, sterile = aedes
    tr = integrate(sit_flow(params, sterile), SimState(0, 1000.0, 0.0, 10.0), 500,
                   ImpulseSchedule(7, lambda n, s: 100.0))
    assert np.all(tr.F == 0)
    assert tr.final.M == pytest.approx(1000 * math.exp(-params.mu_M * 500), rel=1e-8)


def test_impulse_jump_is_exact(aedes):
    params, sterile = aedes
    rates = [10.0, 0.0, 25.5]
    tr = integrate(sit_flow(params, sterile), SimState(0, 100.0, 100.0, 3.0), 21, ImpulseSchedule(7, rates))
    assert [e.n for e in tr.events] == [0, 1, 2]
    assert [e.t for e in tr.events] == [0.0, 7.0, 14.0]
    for e in tr.events:
        i = int(np.searchsorted(tr.t, e.t))
        assert tr.t[i] == e.t
        assert tr.M_S[i] == e.pre_state.M_S + 7 * e.rate
        assert tr.release[i] == e.amount
    assert np.all(np.diff(tr.t) > 0)


def test_sequence_schedule_runs_out():
    sched = ImpulseSchedule(7, [1.0])
    assert sched.rate(5, SimState(0, 0, 0)) == 0.0
    with pytest.raises(ScheduleError):
        ImpulseSchedule(7, [-1.0]).rate(0, SimState(0, 0, 0))
    with pytest.raises(ScheduleError):
        ImpulseSchedule(0, [1.0])


def test_sterile_converges_to_periodic_regime():
    params = ModelParams(r=0.5, rho=4.55, mu_M=0.04, mu_F=0.03, sigma=0.05, K=140)
    mu_S, tau, lam = 0.1, 7.0, 1573.0
    sterile = SterileParams(mu_S)
    tr = integrate(sit_flow(params, sterile), SimState(0, 0, 0, 0), 21 * tau, ImpulseSchedule(tau, lambda n, s: lam))
    late = (tr.t >= 20 * tau) & (tr.t < 21 * tau)
    ref = ms_per(tr.t[late], lam, tau, mu_S)
    assert np.max(np.abs(tr.M_S[late] / ref - 1)) < 1e-6


def test_periodic_gap_decays_geometrically():
    params = ModelParams(r=0.5, rho=4.55, mu_M=0.04, mu_F=0.03, beta=1e-3)
    mu_S, tau, lam = 0.04, 7.0, 1000.0
    tr = integrate(sit_flow(params, SterileParams(mu_S)), SimState(0, 0, 0, 0), 10 * tau,
                   ImpulseSchedule(tau, lambda n, s: lam))
    gaps = []
    for n in range(10):
        sel = (tr.t >= n * tau) & (tr.t < (n + 1) * tau)
        gaps.append(np.max(np.abs(tr.M_S[sel] - ms_per(tr.t[sel], lam, tau, mu_S))))
    ratios = np.array(gaps[1:]) / np.array(gaps[:-1])
    assert np.allclose(ratios, math.exp(-mu_S * tau), rtol=1e-6)


def test_ms_per_shape():
    lam, tau, mu_S = 1573.0, 7.0, 0.04
    top = tau * lam / (1 - math.exp(-mu_S * tau))
    assert ms_per(0.0, lam, tau, mu_S) == pytest.approx(top)
    assert ms_per(tau - 1e-12, lam, tau, mu_S) == pytest.approx(top * math.exp(-mu_S * tau))
    ts = np.linspace(0, 50, 777)
    assert np.allclose(ms_per(ts + tau, lam, tau, mu_S), ms_per(ts, lam, tau, mu_S), rtol=1e-12)
    assert np.allclose(ms_per(ts, lam, tau, mu_S), ms_per_ref(ts, lam, tau, mu_S), rtol=1e-12)
    ts = (np.arange(200_000) + 0.5) * (tau / 200_000)
    mean = np.mean(1 / ms_per(ts, lam, tau, mu_S))
    assert mean == pytest.approx(mean_inverse_quadrature(lam, tau, mu_S), rel=1e-8)


def test_super_solution_limits(aedes):
    params = aedes[0]
    k = 0.2 / params.n_F
    assert super_solution((100.0, 50.0), k, params, 0.0) == (100.0, 50.0)
    M, F = super_solution((100.0, 0.0), k, params, 3.0)
    assert F == 0 and M == pytest.approx(100 * math.exp(-params.mu_M * 3))
    with pytest.raises(ValueError):
        super_solution((1.0, 1.0), 1.0 / params.n_F, params, 1.0)


def test_super_solution_matches_linear_ode(aedes):
    params = aedes[0]
    rng = np.random.default_rng(3)
    for _ in range(25):
        M0, F0 = rng.uniform(0, 1e4, 2)
        k = rng.uniform(0.01, 0.99) / params.n_F
        s = rng.uniform(0.01, 14.0)
        got = super_solution((M0, F0), k, params, s)
        ref = linear_comparison_ref(M0, F0, k, params.r, params.rho, params.mu_M, params.mu_F, s)
        assert got == pytest.approx(ref, rel=1e-9, abs=1e-9)


def test_negative_state_is_an_integrity_error():
    def sink(t, y):
        return (-1.0, 0.0, 0.0)
    with pytest.raises(IntegrityError) as err:
        integrate(sink, SimState(0, 1.0, 0, 0), 5.0)
    assert err.value.last_state.M >= 0


def test_solver_failure_carries_last_state():
    def blowup(t, y):
        return (y[0] ** 2, 0.0, 0.0)
    with pytest.raises(IntegrationError) as err:
        integrate(blowup, SimState(0, 1.0, 0, 0), 5.0, cfg=IntegratorConfig(max_step=0.01))
    assert 0.9 < err.value.last_state.t < 1.1
    assert math.isfinite(err.value.last_state.M)


def test_stop_when_halts_before_release(aedes):
    params, sterile = aedes
    tr = integrate(sit_flow(params, sterile), SimState(0, 10.0, 10.0), 70,
                   ImpulseSchedule(7, lambda n, s: 5.0), stop_when=lambda n, s: n == 3)
    assert tr.stopped_at == 3
    assert len(tr.events) == 3 and tr.t[-1] == 21.0
