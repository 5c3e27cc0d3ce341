"""Exception hierarchy shared across the package."""

from __future__ import annotations


class ScholarDBError(Exception):
    """Base class for all package errors."""


class GraphError(ScholarDBError):
    pass


class DuplicateNodeError(GraphError):
    pass


class MissingNodeError(GraphError):
    pass


class SchemaError(GraphError):
    """Edge or attribute violates the graph schema."""


class DimensionMismatchError(GraphError):
    pass


class SnapshotError(GraphError):
    """Snapshot file is unreadable, corrupt, or version-incompatible."""


class IngestError(ScholarDBError):
    pass


class ProviderError(ScholarDBError):
    """The LLM backend failed or is unavailable."""


class CassetteMissError(ProviderError):
    """Replay-strict lookup found no recorded response."""

    def __init__(self, fingerprint: str):
        super().__init__(f"no recorded response for fingerprint {fingerprint}")
        self.fingerprint = fingerprint


class SchemaViolationError(ProviderError):
    """Provider response did not conform to the requested structure."""

    def __init__(self, message: str, raw: str = ""):
        super().__init__(message)
        self.raw = raw


class TaxonomyError(ScholarDBError):
    pass


class RetrievalError(ScholarDBError):
    pass


class PlanError(ScholarDBError):
    pass


class SelfCorrectionError(PlanError):
    """Self-correction exhausted its round budget; carries the last report."""

    def __init__(self, message: str, report=None):
        super().__init__(message)
        self.report = report


class OperatorError(ScholarDBError):
    pass


class EvidenceIntegrityError(OperatorError):
    """A quoted evidence span is not present verbatim in its source text."""


class ExecutionError(ScholarDBError):
    pass


class ServiceError(ScholarDBError):
    pass


class NotFoundError(ServiceError):
    pass
