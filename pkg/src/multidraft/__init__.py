"""Sampling and verification for two-or-more-draft speculative decoding."""

__version__ = "0.1.0"

from .coupling import optimal_acceptance, optimal_plan, reconstruct_full_coupling, spechub_plan
from .draftjoint import hub_joint, independent_joint, wor_joint
from .verify import (
    analytic_rates_rrs,
    analytic_rates_spechub,
    exact_output_dist,
    exact_rates,
    mc_rates,
    rrs_verify,
    spechub_step,
)

__all__ = [
    "analytic_rates_rrs",
    "analytic_rates_spechub",
    "exact_output_dist",
    "exact_rates",
    "hub_joint",
    "independent_joint",
    "mc_rates",
    "optimal_acceptance",
    "optimal_plan",
    "reconstruct_full_coupling",
    "rrs_verify",
    "spechub_plan",
    "spechub_step",
    "wor_joint",
]
