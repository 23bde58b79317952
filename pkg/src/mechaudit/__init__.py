"""Auditing toolkit for privacy-aware mechanism design with finite type and outcome spaces."""

from __future__ import annotations

from .admissibility import (AdmissibilityParams, ValuationDistribution, check_admissible,
                            moment_admissibility, strong_admissibility_check)
from .analysis import accuracy_audit, claim_condition, dominance_audit, solve_parameters
from .domain import (BOTTOM, AgentProfile, AlternativeSet, DeclaredInput, ObjectiveFunction,
                     TypeSpace, opt_value, verify_sensitivity)
from .experiment import ExperimentConfig, RunReport, emit_report, load_config, run_experiment
from .games import GameInstance, optimal_reaction, verify_gap
from .instances import (digital_goods_error_bound, make_digital_goods, make_poll,
                        poll_claim1_check, poll_tail_bound)
from .mechanisms import (DiscreteDistribution, MechanismParams, exponential_mechanism,
                         generic_mechanism, generic_mechanism_distribution, poll_distribution,
                         run_generic_mechanism)
from .privacy import (JointDistribution, channel_mi, dp_mi_bound_check, expectation_gap,
                      mutual_information, verify_dp)

__version__ = "0.1.0"
