"""Time integration with impulsive sterile-male releases.

Releases happen at ``t = n*tau``.  At each release instant the pre-jump state
is handed to the schedule, which returns a rate ``lambda_n``; the sterile
compartment then jumps by ``tau * lambda_n`` and integration restarts from
the post-jump state.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy.integrate import solve_ivp

from .model import ModelParams, SimState

NEGATIVE_CLAMP = 1e-12

Flow = Callable[[float, tuple], tuple]
RatePolicy = Callable[[int, SimState], float]


class IntegrationError(RuntimeError):
    """Solver failure.  ``last_state`` is the last state known to be valid."""

    def __init__(self, message: str, last_state: SimState):
        super().__init__(f"{message} (last valid state at t={last_state.t:g})")
        self.last_state = last_state


class IntegrityError(IntegrationError):
    """A population went negative beyond round-off."""


class ScheduleError(ValueError):
    pass


@dataclass(frozen=True)
class IntegratorConfig:
    """``method`` is ``"rk4"`` (fixed step) or ``"rk45"`` (adaptive, scipy).

    ``max_step=None`` means ``min(tau/50, 0.1)`` under a schedule and 0.1
    otherwise.  For RK4 each inter-release interval is split into an integer
    number of equal substeps no longer than ``max_step``.
    """

    method: str = "rk4"
    max_step: Optional[float] = None
    rel_tol: float = 1e-9
    abs_tol: float = 1e-9
    clamp_negative: bool = True

    def __post_init__(self):
        if self.method not in ("rk4", "rk45"):
            raise ValueError(f"method must be 'rk4' or 'rk45', got {self.method!r}")
        if self.max_step is not None and not self.max_step > 0:
            raise ValueError("max_step must be > 0")
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ValueError("tolerances must be > 0")

    def step_for(self, tau: Optional[float]) -> float:
        if tau is None:
            return self.max_step if self.max_step is not None else 0.1
        if self.max_step is None:
            return min(tau / 50.0, 0.1)
        if self.max_step > tau / 10.0 * (1 + 1e-12):
            raise ScheduleError(f"max_step={self.max_step} exceeds tau/10={tau / 10.0}; releases would be stepped over")
        return self.max_step


@dataclass(frozen=True)
class ImpulseSchedule:
    """Releases every ``tau`` days.

    ``amounts`` is either a sequence of rates (slots past its end release
    nothing) or a callable ``(n, pre_state) -> rate``.
    """

    tau: float
    amounts: Union[Sequence[float], RatePolicy]

    def __post_init__(self):
        if not (math.isfinite(self.tau) and self.tau > 0):
            raise ScheduleError(f"tau must be > 0, got {self.tau}")

    def rate(self, n: int, state: SimState) -> float:
        if callable(self.amounts):
            value = float(self.amounts(n, state))
        else:
            value = float(self.amounts[n]) if n < len(self.amounts) else 0.0
        if not (math.isfinite(value) and value >= 0):
            raise ScheduleError(f"release {n}: rate must be finite and >= 0, got {value}")
        return value


@dataclass(frozen=True)
class ReleaseEvent:
    n: int
    t: float
    rate: float
    amount: float
    pre_state: SimState


@dataclass(frozen=True)
class Trajectory:
    """Time series of ``(t, M, F, M_S)``.

    At release instants only the post-jump state is sampled, so ``t`` is
    strictly increasing.  ``release`` holds the amount ``tau*lambda_n`` added
    at that sample (0 elsewhere).
    """

    t: np.ndarray
    M: np.ndarray
    F: np.ndarray
    M_S: np.ndarray
    release: np.ndarray
    events: tuple = ()
    stopped_at: Optional[int] = None

    def __len__(self):
        return len(self.t)

    @property
    def samples(self) -> list[SimState]:
        return [SimState(float(t), float(m), float(f), float(s)) for t, m, f, s in zip(self.t, self.M, self.F, self.M_S)]

    @property
    def final(self) -> SimState:
        return SimState(float(self.t[-1]), float(self.M[-1]), float(self.F[-1]), float(self.M_S[-1]))

    def as_array(self) -> np.ndarray:
        return np.column_stack([self.t, self.M, self.F, self.M_S, self.release])


@dataclass
class _Recorder:
    t: list = field(default_factory=list)
    y: list = field(default_factory=list)
    rel: list = field(default_factory=list)

    def add(self, t, y, released=0.0):
        self.t.append(t)
        self.y.append(y)
        self.rel.append(released)

    def jump(self, amount):
        # the pre-jump sample at this instant is replaced by the post-jump one
        M, F, S = self.y[-1]
        self.y[-1] = (M, F, S + amount)
        self.rel[-1] = amount

    def build(self, events, stopped_at):
        y = np.asarray(self.y, dtype=float).reshape(-1, 3)
        arrays = [np.asarray(self.t, dtype=float), y[:, 0].copy(), y[:, 1].copy(), y[:, 2].copy(), np.asarray(self.rel, dtype=float)]
        for a in arrays:
            a.flags.writeable = False
        return Trajectory(*arrays, events=tuple(events), stopped_at=stopped_at)


def _state(t, y) -> SimState:
    return SimState(t, max(y[0], 0.0), max(y[1], 0.0), max(y[2], 0.0))


def _check(t, y, cfg: IntegratorConfig, last: SimState):
    if not all(math.isfinite(v) for v in y):
        raise IntegrationError(f"non-finite state at t={t:g}", last)
    if min(y) >= 0.0:
        return y
    if min(y) <= -NEGATIVE_CLAMP:
        raise IntegrityError(f"negative population {min(y):.3e} at t={t:g}", last)
    return tuple(max(v, 0.0) for v in y) if cfg.clamp_negative else y


def _rk4_segment(flow, t0, t1, y, h_max, cfg, rec, last):
    n_sub = max(1, math.ceil((t1 - t0) / h_max * (1 - 1e-12)))
    h = (t1 - t0) / n_sub
    for i in range(1, n_sub + 1):
        tt = t0 + (i - 1) * h
        M, F, S = y
        try:
            k1 = flow(tt, y)
            k2 = flow(tt + h / 2, (M + h / 2 * k1[0], F + h / 2 * k1[1], S + h / 2 * k1[2]))
            k3 = flow(tt + h / 2, (M + h / 2 * k2[0], F + h / 2 * k2[1], S + h / 2 * k2[2]))
            k4 = flow(tt + h, (M + h * k3[0], F + h * k3[1], S + h * k3[2]))
        except ArithmeticError as exc:
            raise IntegrationError(f"step failed at t={tt:g}: {exc}", last) from exc
        y = (
            M + h / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0]),
            F + h / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1]),
            S + h / 6 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2]),
        )
        t = t1 if i == n_sub else t0 + i * h
        y = _check(t, y, cfg, last)
        rec.add(t, y)
        last = _state(t, y)
    return y, last


def _rk45_segment(flow, t0, t1, y, h_max, cfg, rec, last):
    try:
        sol = solve_ivp(
            lambda t, z: flow(t, tuple(z)), (t0, t1), list(y), method="RK45",
            max_step=h_max, rtol=cfg.rel_tol, atol=cfg.abs_tol,
        )
    except ArithmeticError as exc:
        raise IntegrationError(f"solver failed: {exc}", last) from exc
    if not sol.success:
        raise IntegrationError(f"solver failed: {sol.message}", last)
    for j in range(1, sol.t.size):
        t = t1 if j == sol.t.size - 1 else float(sol.t[j])
        y = _check(t, tuple(float(v) for v in sol.y[:, j]), cfg, last)
        rec.add(t, y)
        last = _state(t, y)
    return y, last


def integrate(
    flow: Flow,
    initial: SimState,
    horizon: float,
    schedule: Optional[ImpulseSchedule] = None,
    cfg: IntegratorConfig = IntegratorConfig(),
    stop_when: Optional[Callable[[int, SimState], bool]] = None,
) -> Trajectory:
    """Integrate ``flow`` from ``initial`` over ``[t0, t0 + horizon]``.

    Releases fall at ``t0 + n*tau`` strictly before the end time.
    ``stop_when(n, pre_state)`` is checked at each release instant before the
    release; returning True ends the run there.
    """
    if not (math.isfinite(horizon) and horizon > 0):
        raise ValueError(f"horizon must be > 0, got {horizon}")
    tau = schedule.tau if schedule is not None else None
    h_max = cfg.step_for(tau)
    segment = _rk4_segment if cfg.method == "rk4" else _rk45_segment

    t0 = initial.t
    t_end = t0 + horizon
    rec = _Recorder()
    y = initial.as_tuple()
    rec.add(t0, y)
    last = initial
    events = []

    if schedule is None:
        segment(flow, t0, t_end, y, h_max, cfg, rec, last)
        return rec.build(events, None)

    slots = max(1, math.ceil(horizon / tau * (1 - 1e-12)))
    for n in range(slots):
        t_n = t0 + n * tau
        pre = SimState(t_n, *y)
        if stop_when is not None and stop_when(n, pre):
            return rec.build(events, n)
        rate = schedule.rate(n, pre)
        amount = tau * rate
        y = (y[0], y[1], y[2] + amount)
        rec.jump(amount)
        events.append(ReleaseEvent(n, t_n, rate, amount, pre))
        last = SimState(t_n, *y)
        t_next = t_end if n == slots - 1 else t0 + (n + 1) * tau
        y, last = segment(flow, t_n, t_next, y, h_max, cfg, rec, last)
    # the end point is itself a release instant when horizon is a multiple of tau
    if stop_when is not None and math.isclose(slots * tau, horizon) and stop_when(slots, SimState(t_end, *y)):
        return rec.build(events, slots)
    return rec.build(events, None)


def ms_per(t, release_rate: float, tau: float, mu_S: float):
    """Periodic sterile population reached under constant impulses ``tau*release_rate``.

    Right-continuous at release instants.  Accepts scalars or arrays.
    """
    if not (release_rate > 0 and tau > 0 and mu_S > 0):
        raise ValueError("release_rate, tau and mu_S must be positive")
    t = np.asarray(t, dtype=float)
    phase = t - np.floor(t / tau) * tau
    out = tau * release_rate * np.exp(-mu_S * phase) / -np.expm1(-mu_S * tau)
    return float(out) if out.ndim == 0 else out


def super_solution(state: tuple[float, float], k: float, params: ModelParams, s):
    """Solution at elapsed time ``s`` of the linear comparison system.

    ``M' = -mu_M M' + r rho k F'``, ``F' = -(mu_F - (1-r) rho k) F'``,
    started from ``state = (M, F)``.  ``s`` may be an array.
    """
    M0, F0 = state
    r, rho, mu_M, mu_F = params.r, params.rho, params.mu_M, params.mu_F
    if not (0 < k < 1.0 / params.n_F):
        raise ValueError(f"gain k={k} outside (0, 1/n_F)")
    growth = mu_F - (1.0 - r) * rho * k
    a = mu_M - growth
    s = np.asarray(s, dtype=float)
    eM = np.exp(-mu_M * s)
    eF = np.exp(-growth * s)
    cross = r * rho * k / a * (eF - eM)
    M, F = eM * M0 + cross * F0, eF * F0
    if s.ndim == 0:
        return float(M), float(F)
    return M, F
