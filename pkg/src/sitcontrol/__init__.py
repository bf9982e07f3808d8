"""Sterile-male release control of a sex-structured mosquito population."""
from .model import (
    Equilibrium, ModelParams, OffspringNumbers, ParameterError, SimState, SterileParams,
    mating_fraction, offspring_numbers, reference_params, rhs_sit, rhs_wild, sit_flow, wild_equilibrium, wild_flow,
)
from .critical import (
    CriticalRates, DomainError, GainCase, RootFindConfig, critical_rates, feedback_gain_interval,
    lambda_crit, lambda_per_crit, mean_inverse_ms_per, mixed_cap, phi_crit, positive_roots, sit_equilibria,
)
from .dynamics import ImpulseSchedule, IntegrationError, IntegratorConfig, Trajectory, integrate, ms_per, super_solution
from .policies import (
    MeasurementRecord, PolicyController, PolicyKind, ReleasePolicy,
    closed_loop_release, mixed_release, open_loop_release, sparse_release,
)
from .campaign import (
    CampaignConfig, CampaignMetrics, ExtinctionReached, PositiveAttractor,
    constant_release_experiment, lyapunov_series, run_campaign,
)

__version__ = "0.1.0"
