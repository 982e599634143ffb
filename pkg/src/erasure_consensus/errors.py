"""Package exception types."""


class ErasureConsensusError(Exception):
    """Base class for all package-specific errors."""


class DisconnectedGraph(ErasureConsensusError):
    """Graph is not connected, so consensus quantities are undefined."""


class InvalidEps(ErasureConsensusError):
    """Step size outside the contracting range (0, 2 / lambda_max)."""


class ModelMismatch(ErasureConsensusError):
    """Protocol invoked with an erasure model it does not support."""


class WrongMode(ErasureConsensusError):
    """Second-moment analysis queried for the wrong channel mode."""


class TooManyEdges(ErasureConsensusError):
    """Exact pattern enumeration would exceed the configured edge budget."""


class NonConvergentPower(ErasureConsensusError):
    """Power iteration cannot separate the dominant eigenvalue."""


class InconsistentSystem(ErasureConsensusError):
    """A GF(2) system derived a contradictory equation (0 = 1)."""


class DimensionMismatch(ErasureConsensusError):
    """GF(2) operands reference unknowns or lengths that do not exist."""


class RateOutOfRange(ErasureConsensusError):
    """Reliability exponent queried outside its domain (R > 1 - p')."""


class HorizonExceeded(ErasureConsensusError):
    """Streaming run longer than the configured decoder horizon cap."""


class MaxRetries(ErasureConsensusError):
    """Could not draw an acceptable code ensemble within the salt budget."""


class WitnessNotFound(ErasureConsensusError):
    """No erasure-pattern certificate exists for the claimed delay."""


class LoopDetected(ErasureConsensusError):
    """A causal chain of wait packets revisited a node."""


class DominationViolated(ErasureConsensusError):
    """A stalled round was not covered by its staggered erasure events."""


class InternalConsistencyError(ErasureConsensusError):
    """Two redundant computations of the same quantity disagree."""
