"""Exception hierarchy shared by all solver modules."""


class CBDSBLError(Exception):
    """Base class for every error raised by this package."""


class InvalidArgumentError(CBDSBLError, ValueError):
    """An argument is outside the domain an operation accepts."""


class NumericError(CBDSBLError, ArithmeticError):
    """A factorization failed or a non-finite value appeared."""


class DegenerateSNRError(InvalidArgumentError):
    """A finite SNR was requested for a node whose clean signal is zero."""


class TopologyGenerationError(CBDSBLError):
    """No connected random graph was found within the retry budget."""


class ConsensusImpossibleError(CBDSBLError):
    """Node failures left no alive node attached to an alive bridge."""
