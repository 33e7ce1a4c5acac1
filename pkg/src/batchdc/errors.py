"""Exception types raised by the batch DC loadflow engine."""


class BatchDcError(Exception):
    """Base class for all engine errors."""


class ParseError(BatchDcError):
    """Input file could not be parsed (malformed JSON, bad MATPOWER block)."""


class ValidationError(BatchDcError):
    """Grid or task data violates a structural invariant."""


class UnsupportedFeature(BatchDcError):
    """Input uses a modelling feature outside the DC scope (DC lines, phase shifters)."""


class SingularSystem(BatchDcError):
    """The reduced susceptance matrix could not be factorized."""


class IslandingError(BatchDcError):
    """A branch outage disconnects the grid (LODF/MODF denominator vanishes)."""

    def __init__(self, message, branches=()):
        super().__init__(message)
        self.branches = tuple(branches)


class SingularSplit(BatchDcError):
    """A busbar split disconnects the grid or makes the update denominator vanish."""


class DegenerateSplit(BatchDcError):
    """A busbar split leaves no branch on the original busbar (zero stay-side susceptance)."""


class InvalidReduction(BatchDcError):
    """A static-node reduction would drop columns the solver still needs."""


class DisconnectedTopology(BatchDcError):
    """An explicitly materialized topology is not connected at N-0."""
