"""Campaign runner, metrics and diagnostics."""
from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .critical import GainCase, sit_equilibria
from .dynamics import ImpulseSchedule, IntegratorConfig, Trajectory, integrate
from .model import Equilibrium, ModelParams, SimState, SterileParams, reference_params, sit_flow, wild_equilibrium
from .policies import PolicyController, PolicyKind, ReleasePolicy

DEFAULT_HORIZON = 2500.0
THREADS_ENV = "SIT_MAX_THREADS"


class CampaignError(ValueError):
    pass


class AmbiguousEndpoint(RuntimeError):
    """Long-run state matches neither extinction nor any positive equilibrium."""

    def __init__(self, message: str, final_state: SimState):
        super().__init__(message)
        self.final_state = final_state


@dataclass(frozen=True)
class CampaignConfig:
    """One campaign.  ``initial=None`` starts from the wild equilibrium with no
    sterile males; ``max_horizon=None`` means the first multiple of ``tau``
    reaching 2500 days."""

    params: ModelParams
    sterile: SterileParams
    policy: ReleasePolicy
    tau: float
    initial: Optional[SimState] = None
    elimination_threshold: float = 0.1
    max_horizon: Optional[float] = None

    def __post_init__(self):
        if not (math.isfinite(self.tau) and self.tau > 0):
            raise CampaignError(f"tau must be > 0, got {self.tau}")
        if not self.elimination_threshold > 0:
            raise CampaignError("elimination_threshold must be > 0")
        if self.max_horizon is None:
            object.__setattr__(self, "max_horizon", math.ceil(DEFAULT_HORIZON / self.tau - 1e-9) * self.tau)
        q = self.max_horizon / self.tau
        if not (self.max_horizon > 0 and abs(q - round(q)) < 1e-9):
            raise CampaignError(f"max_horizon={self.max_horizon} must be a positive multiple of tau={self.tau}")
        self.sterile.check_against(self.params)
        self.policy.validate(self.params)

    @property
    def p(self) -> int:
        return self.policy.p

    def start_state(self) -> SimState:
        if self.initial is not None:
            return self.initial
        eq = wild_equilibrium(self.params)
        if eq is None:
            return SimState(0.0, 0.0, 0.0, 0.0)
        return SimState(0.0, eq.M_star, eq.F_star, 0.0)


@dataclass(frozen=True)
class CampaignMetrics:
    cumulative_released: float
    weeks_to_elimination: Optional[int]
    nonzero_releases: int
    eliminated: bool
    releases: int
    t_end: float

    def to_dict(self) -> dict:
        return {
            "cumulative_released": self.cumulative_released,
            "weeks_to_elimination": self.weeks_to_elimination,
            "nonzero_releases": self.nonzero_releases,
            "eliminated": self.eliminated,
            "releases": self.releases,
            "t_end": self.t_end,
        }


def weeks_of(t: float) -> int:
    return math.ceil(t / 7.0 - 1e-9)


def run_campaign(cfg: CampaignConfig, integ: IntegratorConfig = IntegratorConfig()) -> tuple[Trajectory, CampaignMetrics]:
    """Release every ``tau`` days until ``F`` is below threshold at a release instant."""
    controller = PolicyController(cfg.policy, cfg.params, cfg.sterile, cfg.tau)
    threshold = cfg.elimination_threshold
    traj = integrate(
        sit_flow(cfg.params, cfg.sterile),
        cfg.start_state(),
        cfg.max_horizon,
        ImpulseSchedule(cfg.tau, controller),
        integ,
        stop_when=lambda n, s: s.F < threshold,
    )
    eliminated = traj.stopped_at is not None
    t_end = float(traj.t[-1])
    metrics = CampaignMetrics(
        cumulative_released=sum(e.amount for e in traj.events),
        weeks_to_elimination=weeks_of(t_end - cfg.start_state().t) if eliminated else None,
        nonzero_releases=sum(1 for e in traj.events if e.rate > 0),
        eliminated=eliminated,
        releases=len(traj.events),
        t_end=t_end,
    )
    return traj, metrics


def lyapunov_series(traj: Trajectory, which: str = "V_F", at_releases: bool = False):
    """``(t, V)`` with ``V = F`` (``"V_F"``) or ``(M^2 + F^2)/2`` (``"V_quadratic"``).

    With ``at_releases`` the series is sampled at release instants (plus the
    final sample).
    """
    if len(traj) == 0:
        raise ValueError("empty trajectory")
    if at_releases:
        t = np.array([e.t for e in traj.events] + [traj.t[-1]])
        M = np.array([e.pre_state.M for e in traj.events] + [traj.M[-1]])
        F = np.array([e.pre_state.F for e in traj.events] + [traj.F[-1]])
    else:
        t, M, F = traj.t, traj.M, traj.F
    if which == "V_F":
        return t, np.array(F, dtype=float)
    if which == "V_quadratic":
        return t, 0.5 * (M * M + F * F)
    raise ValueError(f"unknown Lyapunov function {which!r}")


@dataclass(frozen=True)
class ExtinctionReached:
    final_state: SimState


@dataclass(frozen=True)
class PositiveAttractor:
    equilibrium: Equilibrium
    final_state: SimState


def constant_release_experiment(
    params: ModelParams,
    sterile: SterileParams,
    release_rate: float,
    initial: Optional[SimState] = None,
    horizon: float = 5000.0,
    integ: IntegratorConfig = IntegratorConfig(),
    threshold: float = 0.1,
    rel_tol: float = 0.01,
) -> Union[ExtinctionReached, PositiveAttractor]:
    """Classify where a continuous release at ``release_rate`` ends up."""
    if not release_rate >= 0:
        raise ValueError(f"release rate must be >= 0, got {release_rate}")
    if initial is None:
        eq = wild_equilibrium(params)
        initial = SimState(0.0, eq.M_star, eq.F_star, 0.0)
    traj = integrate(sit_flow(params, sterile, release_rate), initial, horizon, None, integ)
    end = traj.final
    if end.F < threshold and end.M < threshold:
        return ExtinctionReached(end)
    for eq in sit_equilibria(params, sterile, release_rate):
        if abs(end.M - eq.M_star) <= rel_tol * eq.M_star and abs(end.F - eq.F_star) <= rel_tol * eq.F_star:
            return PositiveAttractor(eq, end)
    raise AmbiguousEndpoint(f"endpoint (M={end.M:.6g}, F={end.F:.6g}) near no equilibrium", end)


# ---------------------------------------------------------------- reference table

@dataclass(frozen=True)
class ReferenceCell:
    kind: PolicyKind
    tau: float
    p: int = 1
    k_nF: Optional[float] = None
    cumulative: float = 0.0
    weeks: int = 0
    nonzero: Optional[int] = None

    @property
    def label(self) -> str:
        if self.kind is PolicyKind.OPEN_LOOP:
            return f"open-loop tau={self.tau:g}"
        name = "mixed" if self.kind is PolicyKind.MIXED else "closed-loop"
        return f"{name} tau={self.tau:g} p={self.p} k*nF={self.k_nF:g}"

    def policy(self, params: ModelParams, case: GainCase = GainCase.CASE1, lambda_bar=None) -> ReleasePolicy:
        if self.kind is PolicyKind.OPEN_LOOP:
            return ReleasePolicy(PolicyKind.OPEN_LOOP)
        k = self.k_nF / params.n_F
        if self.kind is PolicyKind.MIXED:
            return ReleasePolicy(PolicyKind.MIXED, k=k, p=self.p, case=case, lambda_bar=lambda_bar)
        if self.p == 1:
            return ReleasePolicy(PolicyKind.CLOSED_LOOP_SYNC, k=k)
        return ReleasePolicy(PolicyKind.CLOSED_LOOP_SPARSE, k=k, p=self.p)


_O, _C, _X = PolicyKind.OPEN_LOOP, PolicyKind.CLOSED_LOOP_SYNC, PolicyKind.MIXED

REFERENCE_CELLS: tuple[ReferenceCell, ...] = (
    ReferenceCell(_O, 7, cumulative=924_627, weeks=84),
    ReferenceCell(_O, 14, cumulative=942_869, weeks=84),
    ReferenceCell(_C, 7, 1, 0.2, 2_251_052, 64),
    ReferenceCell(_C, 7, 4, 0.2, 4_363_430, 54, 34),
    ReferenceCell(_C, 14, 1, 0.2, 2_390_676, 64),
    ReferenceCell(_C, 14, 4, 0.2, 2_896_835, 56, 17),
    ReferenceCell(_C, 7, 1, 0.99, 794_807, 240),
    ReferenceCell(_C, 7, 4, 0.99, 1_221_593, 58, 37),
    ReferenceCell(_C, 14, 1, 0.99, 909_344, 130),
    ReferenceCell(_C, 14, 4, 0.99, 1_043_107, 62, 20),
    ReferenceCell(_X, 7, 1, 0.2, 450_668, 72),
    ReferenceCell(_X, 7, 4, 0.2, 534_849, 65, 53),
    ReferenceCell(_X, 14, 1, 0.2, 465_187, 72),
    ReferenceCell(_X, 14, 4, 0.2, 499_497, 66, 25),
    ReferenceCell(_X, 7, 1, 0.99, 457_489, 246),
    ReferenceCell(_X, 7, 4, 0.99, 450_077, 69, 53),
    ReferenceCell(_X, 14, 1, 0.99, 427_701, 136),
    ReferenceCell(_X, 14, 4, 0.99, 449_059, 74, 28),
)


def find_cell(kind, tau, p=1, k_nF=None) -> ReferenceCell:
    kind = PolicyKind(kind)
    if kind is PolicyKind.CLOSED_LOOP_SPARSE:
        kind = PolicyKind.CLOSED_LOOP_SYNC
    for cell in REFERENCE_CELLS:
        if cell.kind is kind and cell.tau == tau and (kind is _O or (cell.p == p and cell.k_nF == k_nF)):
            return cell
    raise KeyError(f"no reference cell for {kind.value} tau={tau} p={p} k*nF={k_nF}")


@dataclass(frozen=True)
class CellResult:
    cell: ReferenceCell
    metrics: Optional[CampaignMetrics] = None
    error: Optional[str] = None
    deviations: dict = field(default_factory=dict)

    def row(self) -> dict:
        c, m = self.cell, self.metrics
        out = {
            "cell": c.label, "kind": c.kind.value, "tau": c.tau, "p": c.p, "k_nF": c.k_nF,
            "ref_cumulative": c.cumulative, "ref_weeks": c.weeks, "ref_nonzero": c.nonzero,
            "cumulative": None, "weeks": None, "nonzero": None, "eliminated": None,
            "dev_cumulative": None, "dev_weeks": None, "dev_nonzero": None, "error": self.error,
        }
        if m is not None:
            out.update(cumulative=m.cumulative_released, weeks=m.weeks_to_elimination,
                       nonzero=m.nonzero_releases, eliminated=m.eliminated)
            out.update({f"dev_{key}": val for key, val in self.deviations.items()})
        return out


def run_cell(
    cell: ReferenceCell,
    params: Optional[ModelParams] = None,
    sterile: Optional[SterileParams] = None,
    integ: IntegratorConfig = IntegratorConfig(),
    case: GainCase = GainCase.CASE1,
    lambda_bar: Optional[float] = None,
) -> CellResult:
    """Run one reference configuration; failures are captured, not raised."""
    if params is None or sterile is None:
        params, sterile = reference_params()
    try:
        cfg = CampaignConfig(params, sterile, cell.policy(params, case, lambda_bar), cell.tau)
        _, m = run_campaign(cfg, integ)
    except Exception as exc:  # reported per cell, the sweep goes on
        return CellResult(cell, error=f"{type(exc).__name__}: {exc}")
    dev = {"cumulative": m.cumulative_released / cell.cumulative - 1.0}
    dev["weeks"] = None if m.weeks_to_elimination is None else m.weeks_to_elimination - cell.weeks
    dev["nonzero"] = None if cell.nonzero is None else m.nonzero_releases - cell.nonzero
    return CellResult(cell, m, deviations=dev)


def _run_cell_args(args):
    return run_cell(*args)


def max_workers() -> int:
    cap = os.environ.get(THREADS_ENV)
    n = os.cpu_count() or 1
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            raise CampaignError(f"{THREADS_ENV} must be an integer, got {cap!r}") from None
    return n


def sweep(cells=REFERENCE_CELLS, params=None, sterile=None, integ=IntegratorConfig(),
          case=GainCase.CASE1, lambda_bar=None, workers: Optional[int] = None) -> list[CellResult]:
    """Run ``cells``; results come back in input order whatever the parallelism."""
    workers = max_workers() if workers is None else workers
    jobs = [(c, params, sterile, integ, case, lambda_bar) for c in cells]
    if workers <= 1 or len(jobs) <= 1:
        return [_run_cell_args(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_cell_args, jobs))
