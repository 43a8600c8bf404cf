"""Exception hierarchy shared across the package."""

from __future__ import annotations


class DisinfoxError(Exception):
    """Base class for all errors raised by this package."""


class TaxonomyError(DisinfoxError):
    """Taxonomy document is malformed or violates a structural invariant."""


class TechniqueNotFound(DisinfoxError):
    """A syntactically valid technique id is absent from the taxonomy."""


class InvalidIdentifier(DisinfoxError):
    """A technique, tactic, or STIX identifier does not match its pattern."""


class IncidentValidationError(DisinfoxError):
    """One or more incident fields failed validation.

    ``field_errors`` holds every failure as ``(field, message)`` pairs so a
    caller can report them all at once.
    """

    def __init__(self, field_errors: list[tuple[str, str]]):
        self.field_errors = list(field_errors)
        summary = "; ".join(f"{field}: {message}" for field, message in self.field_errors)
        super().__init__(f"invalid incident: {summary}")


class CodecError(DisinfoxError):
    """Encoding or decoding failed structurally (not a per-object finding)."""


class CatalogError(DisinfoxError):
    """Attack-pattern catalog source is malformed."""


class StoreError(DisinfoxError):
    """Store operation failed (I/O, locking, invalid arguments)."""


class StoreCorruptError(StoreError):
    """A log segment failed to parse or sequence numbers are inconsistent."""


class NotFoundError(DisinfoxError):
    """A referenced incident or object does not exist."""


class CsvHeaderError(DisinfoxError):
    """CSV header row is missing or does not match the documented schema."""


class IngestAbortedError(StoreError):
    """Storage failed mid-batch; ``report`` covers the records committed so far."""

    def __init__(self, message: str, report):
        super().__init__(message)
        self.report = report


class ConfigError(DisinfoxError):
    """Invalid runtime configuration (bad paths, bad values)."""


class ConnectorError(DisinfoxError):
    """A poll failed mid-flight; persisted state still reflects durable work."""
