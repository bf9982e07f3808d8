"""Critical release rates and the root finding behind them.

Everything here is closed form except two scalar equations: the tangency
equation defining ``phi_crit`` and the equilibrium equation
``1 + a/x = b exp(-c x)`` of the constant-release system.  Both have a
single sign change on the bracket we hand them, so plain bisection is used.
"""
from __future__ import annotations

import enum
import math
import sys
from dataclasses import dataclass
from typing import Callable

from .model import Equilibrium, ModelParams, SterileParams, offspring_numbers


class DomainError(ValueError):
    """Raised when a threshold is undefined for the given inputs."""


class RootFindError(RuntimeError):
    pass


class GainCase(str, enum.Enum):
    """Which Lyapunov argument certifies a feedback gain.

    CASE1 uses ``V = F`` and admits any ``k < 1/n_F``; CASE2 uses the
    quadratic ``(M^2 + F^2)/2`` and needs a smaller gain.
    """

    CASE1 = "case1"
    CASE2 = "case2"


@dataclass(frozen=True)
class RootFindConfig:
    abs_tol: float = 1e-13
    max_iter: int = 400
    bracket_growth: float = 2.0

    def __post_init__(self):
        if not self.abs_tol > 0:
            raise ValueError("abs_tol must be > 0")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if not self.bracket_growth > 1:
            raise ValueError("bracket_growth must be > 1")


DEFAULT_ROOT_CONFIG = RootFindConfig()
TANGENCY_BAND = 1e-6


def bisect(f: Callable[[float], float], lo: float, hi: float, cfg: RootFindConfig = DEFAULT_ROOT_CONFIG) -> float:
    """Root of ``f`` in ``[lo, hi]`` given a sign change across the bracket.

    ``abs_tol`` acts as a relative tolerance for roots below 1.  Wide
    positive brackets are split geometrically so tiny roots converge too.
    """
    f_lo, f_hi = f(lo), f(hi)
    if f_lo == 0.0:
        return lo
    if f_hi == 0.0:
        return hi
    if (f_lo > 0) == (f_hi > 0):
        raise RootFindError(f"no sign change on [{lo}, {hi}]: f={f_lo}, {f_hi}")
    for _ in range(cfg.max_iter):
        mid = math.sqrt(lo) * math.sqrt(hi) if 0.0 < lo < 0.25 * hi else 0.5 * (lo + hi)
        if hi - lo <= cfg.abs_tol * min(1.0, abs(mid)) or mid in (lo, hi):
            return mid
        f_mid = f(mid)
        if f_mid == 0.0:
            return mid
        if (f_mid > 0) == (f_lo > 0):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
    raise RootFindError(f"bisection did not converge in {cfg.max_iter} iterations")


def _expand_until(predicate, start: float, growth: float, max_iter: int) -> float:
    x = start
    for _ in range(max_iter):
        if predicate(x):
            return x
        x *= growth
    raise RootFindError("bracket expansion failed")


def tangency_residual(phi: float, b: float) -> float:
    """``RHS - LHS`` of the tangency equation; positive below the root.

    The limit at ``phi = 0`` is ``b - 1``.
    """
    if phi == 0.0:
        return b - 1.0
    q = 1.0 + math.sqrt(1.0 + 2.0 / phi)
    return b * math.exp(-2.0 / q) - (1.0 + phi * q)


def phi_crit(b: float, cfg: RootFindConfig = DEFAULT_ROOT_CONFIG) -> float:
    """Unique positive root of ``1 + phi(1 + sqrt(1 + 2/phi)) = b exp(-2/(1 + sqrt(1 + 2/phi)))``."""
    if not b > 1.0:
        raise DomainError(f"phi_crit needs b > 1, got {b}")
    hi = _expand_until(lambda x: tangency_residual(x, b) < 0.0, 1.0, cfg.bracket_growth, cfg.max_iter)
    return bisect(lambda x: tangency_residual(x, b), 0.0, hi, cfg)


def lambda_crit(params: ModelParams, sterile: SterileParams, cfg: RootFindConfig = DEFAULT_ROOT_CONFIG) -> float:
    """Constant release rate above which no positive equilibrium survives."""
    off = offspring_numbers(params)
    if off.n_F <= 1.0:
        raise DomainError(f"population not viable (n_F={off.n_F:.6g} <= 1); SIT threshold undefined")
    phi = phi_crit(off.n_F, cfg)
    return 2.0 * sterile.mu_S / (params.beta * sterile.gamma) * phi / (1.0 + off.n_F / off.n_M)


def equilibrium_coefficients(params: ModelParams, sterile: SterileParams, release_rate: float):
    """``(a, b, c)`` of ``f(x) = 1 + a/x - b exp(-c x)`` for a constant release."""
    off = offspring_numbers(params)
    a = sterile.gamma * release_rate / sterile.mu_S
    c = params.beta * (1.0 + off.n_F / off.n_M)
    return a, off.n_F, c


def positive_roots(a: float, b: float, c: float, cfg: RootFindConfig = DEFAULT_ROOT_CONFIG) -> list[float]:
    """Positive roots of ``1 + a/x - b exp(-c x)`` in increasing order.

    ``a >= 0``, ``b > 1``, ``c > 0``.  The count is decided by comparing
    ``a*c`` with ``2*phi_crit(b)``; within ``TANGENCY_BAND`` the double root
    is returned.
    """
    if not b > 1.0:
        raise DomainError(f"need b > 1, got {b}")
    if a == 0.0:
        return [math.log(b) / c]
    if a < sys.float_info.min:
        raise DomainError(f"a={a!r} is subnormal; the small root cannot be resolved")

    def f(x):
        return 1.0 + a / x - b * math.exp(-c * x)

    gap = a * c - 2.0 * phi_crit(b, cfg)
    if gap > TANGENCY_BAND:
        return []
    x_tan = (2.0 / c) / (1.0 + math.sqrt(1.0 + 4.0 / (a * c)))
    if abs(gap) <= TANGENCY_BAND:
        return [x_tan]

    # f decreases until its minimiser x_min < 2/c; the roots sit either side
    # of it and below ln(b)/c, where b exp(-c x) drops under 1.
    def df(x):
        return -(a / x) / x + b * c * math.exp(-c * x)

    # df < 0 below sqrt(a/(bc)); f > 0 below a/b.
    if df(2.0 / c) <= 0.0:
        return [x_tan]
    x_min = bisect(df, 0.5 * math.sqrt(a) / math.sqrt(b * c), 2.0 / c, cfg)
    if f(x_min) >= 0.0:
        return [x_tan]
    # b exp(-c x) = 1/2 there, so f >= 1/2 whatever the round-off
    x_hi = (math.log(b) + math.log(2.0)) / c
    small = bisect(f, 0.5 * min(a / b, x_min), x_min, cfg)
    large = bisect(f, x_min, x_hi, cfg)
    return [small, large]


def sit_equilibria(
    params: ModelParams,
    sterile: SterileParams,
    release_rate: float,
    cfg: RootFindConfig = DEFAULT_ROOT_CONFIG,
) -> list[Equilibrium]:
    """Positive equilibria of the constant-release system, smallest first."""
    if release_rate < 0:
        raise DomainError(f"release rate must be >= 0, got {release_rate}")
    off = offspring_numbers(params)
    if off.n_F <= 1.0:
        raise DomainError(f"population not viable (n_F={off.n_F:.6g} <= 1)")
    a, b, c = equilibrium_coefficients(params, sterile, release_rate)
    ratio = off.n_F / off.n_M
    return [Equilibrium(M_star=x, F_star=ratio * x) for x in positive_roots(a, b, c, cfg)]


def cosh_factor(mu_S: float, tau: float) -> float:
    """``(cosh(mu_S tau) - 1) / (mu_S tau^2)``, stable for small ``mu_S tau``."""
    half = 0.5 * mu_S * tau
    return 2.0 * math.sinh(half) ** 2 / (mu_S * tau * tau)


def mean_inverse_ms_per(release_rate: float, tau: float, mu_S: float) -> float:
    """Time average of ``1/M_S`` over one period of the periodic sterile regime."""
    if not (release_rate > 0 and tau > 0 and mu_S > 0):
        raise DomainError("release_rate, tau and mu_S must be positive")
    return 2.0 * cosh_factor(mu_S, tau) / release_rate


def _check_tau(tau):
    if not tau > 0:
        raise DomainError(f"release period must be > 0, got {tau}")


def periodic_thresholds(params: ModelParams) -> tuple[float, float, float]:
    """The three offspring-weighted terms whose minimum sets the periodic threshold.

    Returned as ``(2 n_M, 2 n_F, max(r, 1-r) * max(n_M/r, n_F/(1-r)))``.
    """
    off = offspring_numbers(params)
    r = params.r
    return (2.0 * off.n_M, 2.0 * off.n_F, max(r, 1.0 - r) * max(off.n_M / r, off.n_F / (1.0 - r)))


def lambda_per_crit(params: ModelParams, sterile: SterileParams, tau: float) -> float:
    """Release rate sufficient for elimination under period-``tau`` impulses.

    The amount released at each impulse is ``tau`` times this rate.
    """
    _check_tau(tau)
    alpha = 1.0 / (math.e * params.beta)
    return cosh_factor(sterile.mu_S, tau) * alpha / sterile.gamma * min(periodic_thresholds(params))


def mixed_cap(params: ModelParams, sterile: SterileParams, tau: float, case: GainCase) -> float:
    """Saturation level of the mixed strategy for the given gain case."""
    _check_tau(tau)
    case = GainCase(case)
    alpha = 1.0 / (math.e * params.beta)
    base = cosh_factor(sterile.mu_S, tau) * alpha / sterile.gamma
    if case is GainCase.CASE1:
        return base * 2.0 * offspring_numbers(params).n_F
    return base * periodic_thresholds(params)[2]


def feedback_gain_interval(params: ModelParams, case: GainCase = GainCase.CASE1) -> tuple[float, float]:
    """Open interval of admissible feedback gains ``k``."""
    case = GainCase(case)
    r, rho, mu_M, mu_F = params.r, params.rho, params.mu_M, params.mu_F
    if case is GainCase.CASE1:
        return (0.0, mu_F / ((1.0 - r) * rho))
    inner = math.sqrt(1.0 + (mu_F / mu_M) * (r / (1.0 - r)) ** 2) - 1.0
    return (0.0, 2.0 * (mu_M / rho) * ((1.0 - r) / r**2) * inner)


@dataclass(frozen=True)
class CriticalRates:
    params: ModelParams
    sterile: SterileParams
    phi_crit: float
    lambda_crit: float
    alpha: float

    def lambda_per_crit(self, tau: float) -> float:
        return lambda_per_crit(self.params, self.sterile, tau)


def critical_rates(
    params: ModelParams, sterile: SterileParams, cfg: RootFindConfig = DEFAULT_ROOT_CONFIG
) -> CriticalRates:
    off = offspring_numbers(params)
    phi = phi_crit(off.n_F, cfg)
    return CriticalRates(
        params=params,
        sterile=sterile,
        phi_crit=phi,
        lambda_crit=lambda_crit(params, sterile, cfg),
        alpha=1.0 / (math.e * params.beta),
    )
