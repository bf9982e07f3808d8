"""Sex-structured mosquito population model.

Populations are continuous densities per hectare.  The wild model tracks
males ``M`` and females ``F``; the sterile-release variants add the sterile
male density ``M_S``, which competes with wild males for matings with
relative efficiency ``gamma``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional


class ParameterError(ValueError):
    """Raised when a parameter record violates a model invariant."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


def _require_positive(name, value):
    if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
        raise ParameterError(name, f"must be a finite positive number, got {value!r}")


@dataclass(frozen=True)
class ModelParams:
    """Vital rates and competition of the wild population.

    ``beta`` may be given directly, or derived from ``sigma / K``.  When all
    three are supplied they must agree.
    """

    r: float
    rho: float
    mu_M: float
    mu_F: float
    beta: Optional[float] = None
    sigma: Optional[float] = None
    K: Optional[float] = None

    def __post_init__(self):
        if not (0.0 < self.r < 1.0):
            raise ParameterError("r", f"sex ratio must lie in (0, 1), got {self.r!r}")
        if not (isinstance(self.rho, (int, float)) and math.isfinite(self.rho) and self.rho >= 0):
            raise ParameterError("rho", f"must be a finite nonnegative number, got {self.rho!r}")
        _require_positive("mu_M", self.mu_M)
        _require_positive("mu_F", self.mu_F)
        if self.mu_M < self.mu_F:
            raise ParameterError("mu_M", f"male mortality {self.mu_M} must be >= female mortality {self.mu_F}")

        from_ratio = None
        if (self.sigma is None) != (self.K is None):
            raise ParameterError("sigma", "sigma and K must be given together")
        if self.sigma is not None:
            _require_positive("sigma", self.sigma)
            _require_positive("K", self.K)
            from_ratio = self.sigma / self.K
        if self.beta is None:
            if from_ratio is None:
                raise ParameterError("beta", "give beta directly or both sigma and K")
            object.__setattr__(self, "beta", from_ratio)
        else:
            _require_positive("beta", self.beta)
            if from_ratio is not None and not math.isclose(self.beta, from_ratio, rel_tol=1e-12):
                raise ParameterError("beta", f"beta={self.beta} inconsistent with sigma/K={from_ratio}")

    @property
    def n_F(self) -> float:
        return offspring_numbers(self).n_F

    @property
    def n_M(self) -> float:
        return offspring_numbers(self).n_M


@dataclass(frozen=True)
class SterileParams:
    """Sterile-male mortality ``mu_S`` and mating fitness ``gamma``."""

    mu_S: float
    gamma: float = 1.0

    def __post_init__(self):
        _require_positive("mu_S", self.mu_S)
        _require_positive("gamma", self.gamma)

    def check_against(self, params: ModelParams) -> None:
        if self.mu_S < params.mu_M:
            raise ParameterError(
                "mu_S", f"sterile mortality {self.mu_S} must be >= wild male mortality {params.mu_M}"
            )


@dataclass(frozen=True)
class OffspringNumbers:
    n_F: float
    n_M: float


@dataclass(frozen=True)
class SimState:
    t: float
    M: float
    F: float
    M_S: float = 0.0

    def __post_init__(self):
        for name in ("M", "F", "M_S"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise ParameterError(name, f"population must be finite and nonnegative, got {value!r}")

    def as_tuple(self):
        return (self.M, self.F, self.M_S)


@dataclass(frozen=True)
class Equilibrium:
    M_star: float
    F_star: float

    @property
    def total(self) -> float:
        return self.M_star + self.F_star


def offspring_numbers(params: ModelParams) -> OffspringNumbers:
    """Basic offspring numbers of the female and male wild populations."""
    return OffspringNumbers(
        n_F=(1.0 - params.r) * params.rho / params.mu_F,
        n_M=params.r * params.rho / params.mu_M,
    )


def wild_equilibrium(params: ModelParams) -> Optional[Equilibrium]:
    """Unique positive equilibrium of the uncontrolled model, or None.

    Returns None when ``n_F <= 1`` (the mosquito-free state is then the only
    equilibrium).
    """
    off = offspring_numbers(params)
    if off.n_F <= 1.0:
        return None
    total = math.log(off.n_F) / params.beta
    share = off.n_F + off.n_M
    return Equilibrium(M_star=off.n_M / share * total, F_star=off.n_F / share * total)


def rhs_wild(state: SimState, params: ModelParams) -> tuple[float, float]:
    M, F = state.M, state.F
    births = params.rho * F * math.exp(-params.beta * (M + F))
    return (
        params.r * births - params.mu_M * M,
        (1.0 - params.r) * births - params.mu_F * F,
    )


def mating_fraction(M: float, M_S: float, gamma: float) -> float:
    """Share of matings with wild males, ``M / (M + gamma*M_S)``.

    When no males of either kind are present the fraction is 0: no mating,
    hence no births.
    """
    denom = M + gamma * M_S
    if denom <= 0.0:
        return 0.0
    return M / denom


def rhs_sit(state: SimState, params: ModelParams, sterile: SterileParams) -> tuple[float, float]:
    """(dM/dt, dF/dt) with sterile males competing for matings."""
    M, F = state.M, state.F
    births = params.rho * F * mating_fraction(M, state.M_S, sterile.gamma) * math.exp(-params.beta * (M + F))
    return (
        params.r * births - params.mu_M * M,
        (1.0 - params.r) * births - params.mu_F * F,
    )


def wild_flow(params: ModelParams):
    """Right-hand side ``f(t, y)`` on ``y = (M, F, M_S)`` for the uncontrolled model.

    ``M_S`` is carried along but plays no role in the wild dynamics.
    """
    r, rho, beta, mu_M, mu_F = params.r, params.rho, params.beta, params.mu_M, params.mu_F

    def flow(t, y):
        M, F, _ = y
        births = rho * F * math.exp(-beta * (M + F))
        return (r * births - mu_M * M, (1.0 - r) * births - mu_F * F, 0.0)

    return flow


def sit_flow(params: ModelParams, sterile: SterileParams, release_rate: float = 0.0):
    """Right-hand side on ``(M, F, M_S)`` with a constant continuous release.

    With ``release_rate=0`` this is the flow between impulsive releases.
    """
    r, rho, beta, mu_M, mu_F = params.r, params.rho, params.beta, params.mu_M, params.mu_F
    mu_S, gamma = sterile.mu_S, sterile.gamma

    def flow(t, y):
        M, F, S = y
        denom = M + gamma * S
        births = rho * F * M / denom * math.exp(-beta * (M + F)) if denom > 0.0 else 0.0
        return (r * births - mu_M * M, (1.0 - r) * births - mu_F * F, release_rate - mu_S * S)

    return flow


AEDES_PARAMS = dict(rho=4.55, r=0.5, sigma=0.05, K=140.0, mu_M=0.04, mu_F=0.03)
AEDES_STERILE = dict(mu_S=0.04, gamma=1.0)


def reference_params() -> tuple[ModelParams, SterileParams]:
    """Aedes parameter set used for the reference campaign tables."""
    return ModelParams(**AEDES_PARAMS), SterileParams(**AEDES_STERILE)
