"""Forward flux sampling with self-optimized interfaces."""
from .core import (Model, Outcome, RandomStream, RegionSpec, TrajectorySegment, TrialOutcome, Walker,
                   child_seed, derive_stream, propagate, run_until)
from .errors import (BinningMismatch, ConfigError, DeadInterface, DivergedState, EmptyHistogram,
                     EscapedTrap, InsufficientReach, NoForwardProgress, NonImprovingIteration,
                     SamplingError, TrappedTrajectories, ZeroFlux, ZeroStageRate)
from .ffs import (FluxEstimate, InterfaceSet, InterfaceStats, RateEstimate, TrialBudget,
                  compute_basin_flux, compute_rate, count_effective_crossings,
                  estimate_conditional_probability, run_ffs)
from .iffs import IffsSchedule, relocate_interfaces, run_iffs
from .soffs import (ImsReport, LocalDistribution, PlacementConfig, SoffsResult, TrialCensus,
                    classify_trials, compose_staged_rates, detect_ims, locate_ims,
                    place_next_interface, run_soffs, sample_local_distribution)
from .stats import Histogram, cost_of_partition, cumulant

__version__ = "0.1.0"
