"""Release strategies for periodic impulsive SIT campaigns.

Each strategy maps the release index and the state measured at release
instants to a rate ``lambda_n``; the impulse added at ``n*tau`` is
``tau * lambda_n``.  Feedback laws take the minimal admissible release,
floored at zero.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional

from .critical import GainCase, feedback_gain_interval, lambda_per_crit, mixed_cap
from .model import ModelParams, SimState, SterileParams


class PolicyError(ValueError):
    """Invalid policy configuration (bad gain, sparsity, missing field)."""


class HistoryError(RuntimeError):
    """Measurement history inconsistent with the release index."""


class PolicyKind(str, enum.Enum):
    OPEN_LOOP = "open-loop"
    CLOSED_LOOP_SYNC = "closed-loop"
    CLOSED_LOOP_SPARSE = "closed-loop-sparse"
    MIXED = "mixed"


@dataclass(frozen=True)
class ReleasePolicy:
    """Strategy description; pure data.

    ``lambda_const`` (open loop) defaults to the periodic threshold rate.
    ``lambda_bar`` (mixed) defaults to the cap of the selected gain case;
    an explicit value overrides it.
    """

    kind: PolicyKind
    k: Optional[float] = None
    p: int = 1
    lambda_bar: Optional[float] = None
    lambda_const: Optional[float] = None
    case: GainCase = GainCase.CASE1

    def __post_init__(self):
        object.__setattr__(self, "kind", PolicyKind(self.kind))
        object.__setattr__(self, "case", GainCase(self.case))
        if not (isinstance(self.p, int) and not isinstance(self.p, bool) and self.p >= 1):
            raise PolicyError(f"p must be an integer >= 1, got {self.p!r}")
        feedback = self.kind is not PolicyKind.OPEN_LOOP
        if feedback and self.k is None:
            raise PolicyError(f"{self.kind.value} needs a gain k")
        if self.kind is PolicyKind.CLOSED_LOOP_SYNC and self.p != 1:
            raise PolicyError("synchronized closed loop measures at every release; use closed-loop-sparse for p > 1")
        if self.kind is PolicyKind.OPEN_LOOP and self.lambda_const is not None:
            if not (math.isfinite(self.lambda_const) and self.lambda_const >= 0):
                raise PolicyError(f"lambda_const must be >= 0, got {self.lambda_const}")
        if self.lambda_bar is not None:
            if self.kind is not PolicyKind.MIXED:
                raise PolicyError("lambda_bar only applies to the mixed strategy")
            if not (math.isfinite(self.lambda_bar) and self.lambda_bar > 0):
                raise PolicyError(f"lambda_bar must be > 0, got {self.lambda_bar}")

    def validate(self, params: ModelParams) -> None:
        """Check the gain against the admissible interval of ``self.case``."""
        if self.kind is PolicyKind.OPEN_LOOP:
            return
        check_gain(self.k, params, self.case)


def check_gain(k: float, params: ModelParams, case: GainCase = GainCase.CASE1) -> None:
    lo, hi = feedback_gain_interval(params, case)
    if not (lo < k < hi):
        raise PolicyError(f"gain k={k!r} outside the {GainCase(case).value} interval ({lo}, {hi:.6g})")


@dataclass(frozen=True)
class MeasurementRecord:
    """Last measurement of the wild population and the releases since then."""

    t_measured: float
    M_hat: float
    F_hat: float
    M_S_known: float
    past_releases: tuple = ()

    def check(self, tau: float, p: int) -> None:
        q = self.t_measured / (p * tau)
        if abs(q - round(q)) > 1e-9 * max(1.0, abs(q)):
            raise HistoryError(f"measurement time {self.t_measured} is not a multiple of p*tau={p * tau}")


def open_loop_release(params: ModelParams, sterile: SterileParams, tau: float) -> float:
    return lambda_per_crit(params, sterile, tau)


def _projection(params: ModelParams, k: float, M: float, F: float, steps: int, tau: float) -> float:
    """``(1/k - 1) M'`` at ``steps*tau`` after a measurement of ``(M, F)``."""
    r, rho, mu_M, mu_F = params.r, params.rho, params.mu_M, params.mu_F
    a = mu_M - mu_F + (1.0 - r) * rho * k
    s = steps * tau
    eM = math.exp(-mu_M * s)
    eF = math.exp(-(mu_F - (1.0 - r) * rho * k) * s)
    return (1.0 - k) / k * eM * M + r * rho * (1.0 - k) / a * (eF - eM) * F


def closed_loop_release(meas, k: float, params: ModelParams, sterile: SterileParams, tau: float) -> float:
    """Feedback rate from ``meas = (M, F, M_S)`` taken just before the release."""
    check_gain(k, params)
    M, F, M_S = meas
    r, rho, mu_M, mu_F, mu_S = params.r, params.rho, params.mu_M, params.mu_F, sterile.mu_S
    a = mu_M - mu_F + (1.0 - r) * rho * k
    gM = math.exp((mu_S - mu_M) * tau)
    gF = math.exp((mu_S - mu_F + (1.0 - r) * rho * k) * tau)
    need = ((1.0 - k) / k * gM * M + r * rho * (1.0 - k) / a * (gF - gM) * F) / (sterile.gamma * tau)
    return max(0.0, need - M_S / tau)


def sparse_release(
    meas: MeasurementRecord, m: int, k: float, params: ModelParams, sterile: SterileParams, tau: float
) -> float:
    """Rate of release ``m`` (0-based) after the last measurement.

    The sterile population just before release ``m`` is reconstructed from
    the measured ``M_S`` and the ``m`` releases since, all decaying at
    ``mu_S``.
    """
    check_gain(k, params)
    if len(meas.past_releases) != m:
        raise HistoryError(f"release {m} after a measurement needs {m} past releases, got {len(meas.past_releases)}")
    mu_S = sterile.mu_S
    need = math.exp(mu_S * tau) / (sterile.gamma * tau) * _projection(params, k, meas.M_hat, meas.F_hat, m + 1, tau)
    carried = sum(lam * math.exp(-(m - j) * mu_S * tau) for j, lam in enumerate(meas.past_releases))
    carried += meas.M_S_known * math.exp(-m * mu_S * tau) / tau
    return max(0.0, need - carried)


def mixed_release(
    meas: MeasurementRecord,
    m: int,
    k: float,
    params: ModelParams,
    sterile: SterileParams,
    tau: float,
    case: GainCase = GainCase.CASE1,
    lambda_bar: Optional[float] = None,
) -> float:
    check_gain(k, params, case)
    cap = mixed_cap(params, sterile, tau, case) if lambda_bar is None else lambda_bar
    return min(sparse_release(meas, m, k, params, sterile, tau), cap)


@dataclass
class PolicyController:
    """Stateful adaptor turning a policy into a schedule callback.

    Call with ``(n, pre_state)`` for ``n = 0, 1, ...`` in order.  Every
    ``p``-th call takes a fresh measurement.
    """

    policy: ReleasePolicy
    params: ModelParams
    sterile: SterileParams
    tau: float
    record: Optional[MeasurementRecord] = None
    rates: list = field(default_factory=list)

    def __post_init__(self):
        self.policy.validate(self.params)
        if self.policy.kind is PolicyKind.MIXED:
            self._cap = self.policy.lambda_bar
            if self._cap is None:
                self._cap = mixed_cap(self.params, self.sterile, self.tau, self.policy.case)
        if self.policy.kind is PolicyKind.OPEN_LOOP:
            c = self.policy.lambda_const
            self._const = open_loop_release(self.params, self.sterile, self.tau) if c is None else c

    @property
    def cap(self) -> Optional[float]:
        return getattr(self, "_cap", None)

    def __call__(self, n: int, state: SimState) -> float:
        if n != len(self.rates):
            raise HistoryError(f"expected release {len(self.rates)}, got {n}")
        pol = self.policy
        if pol.kind is PolicyKind.OPEN_LOOP:
            rate = self._const
        elif pol.kind is PolicyKind.CLOSED_LOOP_SYNC:
            rate = closed_loop_release((state.M, state.F, state.M_S), pol.k, self.params, self.sterile, self.tau)
        else:
            m = n % pol.p
            if m == 0:
                self.record = MeasurementRecord(state.t, state.M, state.F, state.M_S)
            rate = sparse_release(self.record, m, pol.k, self.params, self.sterile, self.tau)
            if pol.kind is PolicyKind.MIXED:
                rate = min(rate, self._cap)
            self.record = MeasurementRecord(
                self.record.t_measured, self.record.M_hat, self.record.F_hat,
                self.record.M_S_known, self.record.past_releases + (rate,),
            )
        self.rates.append(rate)
        return rate
