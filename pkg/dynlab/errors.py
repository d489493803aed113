"""Exception hierarchy for dynlab."""


class DynlabError(Exception):
    """Base class for all dynlab errors."""


class DomainError(DynlabError, ValueError):
    """A coordinate lies outside the phase space M."""


class PreconditionError(DynlabError, ValueError):
    """An operation was called with inputs violating its precondition."""


class MapFileError(DynlabError, ValueError):
    """A map definition file could not be parsed."""


class BudgetExhaustedError(DynlabError, RuntimeError):
    """No decision could be reached within the iteration budget.

    The partial evidence collected so far is kept in ``evidence`` so callers
    can record it instead of guessing.
    """

    def __init__(self, message: str, evidence: dict | None = None):
        super().__init__(message)
        self.evidence = evidence or {}
