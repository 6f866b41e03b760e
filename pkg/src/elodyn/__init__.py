"""Elo rating chain on the zero-sum subspace: simulation, statistics, checks."""

from .model import (ConfigError, EloParams, LinkFunction, RatingVector,
                    ScoreModel, TrueSkillVector, load_config, make_params,
                    parse_config)
from .dynamics import (CouplingState, LyapunovSpec, MatchEvent, PathPlan,
                       chain_step, coupled_step, e_minus, e_minus_inv, e_plus,
                       e_plus_inv, elo_step, exact_drift, find_path_1d,
                       find_path_nd, lyapunov_value, run_chain, run_coupled)
from .montecarlo import (EnsembleConfig, EnsembleResult, Histogram,
                         InitialCondition, convergence_diagnostic,
                         default_t_star, empirical_w1, ensemble_snapshots,
                         make_histogram, run_ensemble)
from .verify import CheckReport, run_default_checks

__version__ = "0.1.0"
