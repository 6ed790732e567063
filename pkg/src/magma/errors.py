"""Exception hierarchy for the memory engine."""


class MagmaError(Exception):
    """Base class for every error raised by the engine."""


class StoreError(MagmaError):
    """Anything that goes wrong inside the graph store or its indexes."""


class DegenerateEntityError(StoreError, ValueError):
    pass


class DuplicateNodeError(StoreError):
    pass


class UnknownNodeError(StoreError, KeyError):
    def __str__(self) -> str:  # KeyError quotes its message otherwise
        return str(self.args[0]) if self.args else "unknown node"


class OutOfOrderEventError(StoreError):
    pass


class EdgeRejectedError(StoreError):
    pass


class DimensionMismatchError(StoreError, ValueError):
    pass


class PersistenceError(StoreError):
    """Malformed persistence file. Carries the 1-based line number."""

    def __init__(self, message: str, line: int | None = None, record: str | None = None):
        self.line = line
        self.record = record
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"{message}{where}")


class EmptyMemoryError(StoreError):
    """Raised when retrieval is attempted against a store with no events."""


class BudgetInfeasibleError(MagmaError, ValueError):
    pass


class ProviderError(MagmaError):
    """External inference or embedding service failed."""


class SchemaViolationError(ProviderError):
    pass


class EncoderError(ProviderError):
    pass


class ConfigError(MagmaError, ValueError):
    pass
