"""Supercritical branching processes in i.i.d. random environments.

Simulation of population trajectories, Hoeffding-type tail bounds for the
log-population walk, exact small-scale oracles by enumeration and dynamic
programming, and Monte Carlo verification with exact confidence intervals.
"""

__version__ = "0.1.0"

from .bounds import (BoundQuery, H, H_upper, Theorem1Params, dH_dx, log_H,
                     sn_tail_bound, theorem1_bound)
from .env import (AssumptionReport, CheckResult, ConfigError, EnvDistribution,
                  EnvState, ModelMoments, OffspringPmf, ResourceCapError,
                  check_assumptions, compute_moments, parse_env_config,
                  state_mean)
from .estimate import (BLOCK_TRIALS, DecayFit, IncrementStat, TailEstimate,
                       binomial_ci, convergence_report, fit_geometric_decay,
                       mc_logw_increments, mc_tail_logzn, mc_tail_sn,
                       theorem1_candidates)
from .oracle import (ExactPmf, WeightedSequence, enumerate_env_sequences,
                     exact_EWn, exact_logZn_tail, exact_population_distribution,
                     exact_sn_tail)
from .simulate import (RNG_ID, EnvSequence, EnvTables, GenRecord,
                       QuenchedReport, SampleStats, SimConfig, Trajectory,
                       quenched_martingale_check, sample_env_sequence,
                       simulate_trajectory, step_population, stream)

__all__ = [
    "AssumptionReport", "BLOCK_TRIALS", "BoundQuery", "CheckResult",
    "ConfigError", "DecayFit", "EnvDistribution", "EnvSequence", "EnvState",
    "EnvTables", "ExactPmf", "GenRecord", "H", "H_upper", "IncrementStat",
    "ModelMoments", "OffspringPmf", "QuenchedReport", "ResourceCapError",
    "RNG_ID", "SampleStats", "SimConfig", "TailEstimate", "Theorem1Params",
    "Trajectory", "WeightedSequence", "binomial_ci", "check_assumptions",
    "compute_moments", "convergence_report", "dH_dx", "enumerate_env_sequences",
    "exact_EWn", "exact_logZn_tail", "exact_population_distribution",
    "exact_sn_tail", "fit_geometric_decay", "log_H", "mc_logw_increments",
    "mc_tail_logzn", "mc_tail_sn", "parse_env_config",
    "quenched_martingale_check", "sample_env_sequence", "simulate_trajectory",
    "sn_tail_bound", "state_mean", "step_population", "stream",
    "theorem1_bound", "theorem1_candidates",
]
