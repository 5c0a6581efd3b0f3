"""Lean-consensus: a racing-counters consensus protocol and its simulators."""

from .bounded import BackupProtocol, CombinedConfig, OracleBackup, backup_fraction, compute_rmax, run_combined
from .distributions import (DelayDistribution, Exponential, FIGURE_DISTRIBUTIONS, Geometric, Pathological,
                            ShiftedExponential, TruncatedNormal, TwoPoint, Uniform, parse_distribution)
from .explore import ExplorationReport, explore_all_schedules
from .harness import ExperimentSpec, parse_cli, run_figure_experiment
from .hybrid import HybridConfig, Scripted, Segment, StrategyError, run_hybrid_trial, search_worst_case
from .noisy import DeltaPolicy, NoiseModel, TrialResult, next_op_time, run_noisy_trial, run_sweep
from .protocol import (ConfigurationError, Execution, ProcessState, ProtocolError, RegisterFile,
                       apply_next_op, init_process, run_with_schedule)
from .race import (RaceConfig, RaceOutcome, estimate_expected_R, exactly_one_probability,
                   lower_bound_fraction, simulate_race, unique_leader_probability, verify_race_outcome)
from .rng import RngStream, derive_trial_seed
from .validation import ValidationReport, validate_trace

__version__ = "0.1.0"
