"""Exception types shared across the package."""


class ReconError(Exception):
    """Base class for every error raised by this package."""


class ParameterError(ReconError, ValueError):
    """An argument violates an operation's preconditions."""


class AlistParseError(ReconError, ValueError):
    def __init__(self, message: str, line: int | None):
        self.line = line
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}{message}")


class RateInadmissible(ParameterError):
    """No puncturing budget exists at this code rate for the error rate."""


class BerOutOfRange(ParameterError):
    """No code rate in the table can reconcile keys at this error rate."""


class PuncturesExhausted(ReconError):
    """Every punctured bit has already been converted into a shortened bit."""


class TransportError(ReconError):
    """Connection loss or a malformed frame on the classical channel."""
