"""Exception hierarchy shared by every module."""


class ConsensusError(Exception):
    """Base class for all errors raised by this package."""


class DegenerateSpectrum(ConsensusError):
    """The structural zero eigenvalue cannot be separated from the rest."""


class NoSpanningTree(ConsensusError):
    pass


class GraphNotUndirected(ConsensusError):
    pass


class NotConnected(ConsensusError):
    pass


class GainDomainError(ConsensusError):
    """A tabulated gain was evaluated outside its grid."""


class LinearBoundViolated(ConsensusError):
    """A multiplicative intensity exceeded its declared linear bound."""


class HistoryUnderflow(ConsensusError):
    """A delayed read reaches further back than the history buffer holds."""


class ConfigError(ConsensusError):
    pass


class Infeasible(ConsensusError):
    """Delay/gain/eigenvalue combination violates the resolvent decay hypothesis."""


class GainOutOfRange(ConsensusError):
    pass


class DegenerateWindow(ConsensusError):
    """Disagreement underflowed to zero on the whole fitting window."""


class UnknownScenario(ConsensusError):
    pass


class ParseError(ConsensusError):
    """Malformed text input; carries 1-based line and column."""

    def __init__(self, message: str, line: int = 0, column: int = 0, source: str = "<input>"):
        self.line = line
        self.column = column
        self.source = source
        super().__init__(f"{source}:{line}:{column}: {message}")
