"""Exception types raised across the package."""


class DeltagraphError(Exception):
    """Base class for all package errors."""


class ParseError(DeltagraphError):
    """Malformed input file; carries the offending line number."""

    def __init__(self, message, line_no=None):
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no


class ValidationError(DeltagraphError):
    """Input violates a documented precondition."""


class UpdateError(DeltagraphError):
    """A batch entry cannot be applied (e.g. deleting an absent edge)."""


class SequencingError(DeltagraphError):
    """Batch version does not follow the current graph version."""


class WorkloadError(DeltagraphError):
    """Workload generation hit an impossible request."""


class QueryCompilationError(DeltagraphError):
    """A query references labels or vertices the graph does not know."""


class NonterminationError(DeltagraphError):
    """Iteration cap exceeded while differences were still produced."""


class InternalConsistencyError(DeltagraphError):
    """An engine invariant was violated; indicates a bug, not bad input."""
