"""Exception hierarchy shared by the samplers, models and harness."""


class SamplingError(RuntimeError):
    """Base class for every sampler failure the harness reports."""


class ZeroFlux(SamplingError):
    """The basin trajectory never crossed the first interface."""


class DeadInterface(SamplingError):
    """No trial reached the next interface, so the rate collapses to zero."""


class TrappedTrajectories(SamplingError):
    """A trial stayed undecided past the hard step cap."""


class NoForwardProgress(SamplingError):
    """Local trajectories never advanced the order parameter."""


class InsufficientReach(SamplingError):
    """The cumulant never attained the placement threshold."""


class EscapedTrap(SamplingError):
    """A relaxation run meant to settle in a trap reached A or B instead."""


class ZeroStageRate(SamplingError):
    """A staged rate was zero, so the harmonic composition is undefined."""


class EmptyHistogram(SamplingError, ValueError):
    pass


class BinningMismatch(SamplingError, ValueError):
    pass


class DivergedState(SamplingError, FloatingPointError):
    """The integrator left the finite region; usually dt is too large."""


class ConfigError(ValueError):
    """Bad experiment configuration. ``key`` names the offending entry."""

    def __init__(self, key, message=None):
        self.key = key
        super().__init__(f"{key}: {message}" if message else str(key))


class NonImprovingIteration(UserWarning):
    """An interface relocation round made the probabilities less uniform."""
