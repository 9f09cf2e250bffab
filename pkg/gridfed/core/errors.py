"""
Errors - Exception hierarchy shared by every gridfed subpackage
"""

from typing import Optional


class GridFedError(Exception):
    """Base class for all gridfed errors"""


class ConfigError(GridFedError):
    """Settings file missing, unreadable or invalid"""


class ContractViolation(GridFedError, ValueError):
    """Caller broke an operation's precondition (dimensions, lengths, misuse after done)"""


class NumericalFailure(GridFedError):
    """Non-finite value produced during an optimization step"""


class AggregationError(ContractViolation):
    """Client updates cannot be combined"""


class RoundAbortedError(GridFedError):
    """A federated round failed; the round state was left untouched"""

    def __init__(self, round_index: int, client_id: int, cause: BaseException):
        self.round_index = round_index
        self.client_id = client_id
        self.cause = cause
        super().__init__(f"Round {round_index} aborted by client {client_id}: {cause}")


class FramingError(GridFedError):
    """Wire frame could not be decoded"""

    def __init__(self, message: str, offset: int):
        self.offset = offset
        super().__init__(f"{message} (at byte offset {offset})")


class MetricsFormatError(GridFedError):
    """Metrics CSV is empty or has a malformed row"""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        where = f" on line {line}" if line is not None else ""
        super().__init__(f"{message}{where}")
