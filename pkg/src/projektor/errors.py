"""Exception hierarchy.

Input problems (malformed documents, unknown identifiers) and configuration
problems (domain mismatches) are distinct so the CLI can map them to its
exit-code contract.
"""

from __future__ import annotations


class ProjektorError(Exception):
    """Base class for all library errors."""


class ModelFormatError(ProjektorError):
    """Model document is malformed or carries unknown fields."""


class ScorerSpecError(ModelFormatError):
    """Scorer specification is structurally invalid."""


class ModelValidationError(ProjektorError):
    """A model failed invariant validation; carries the report."""

    def __init__(self, report):
        self.report = report
        super().__init__(report.summary())


class BindingError(ProjektorError):
    """Mapping references unknown leaf or datum identifiers."""


class ScorerEvalError(ProjektorError):
    """Relation evaluated on payloads missing required fields, or bad arity."""


class ConstraintError(ProjektorError):
    """No constraint can be predicted for the requested slot."""


class DomainMismatchError(ProjektorError):
    """Model/registry domain does not match the data set's domain tag."""


class InstanceTooLargeError(ProjektorError):
    """Exhaustive oracle refused an instance beyond its size guard."""


class InputError(ProjektorError):
    """Bad user-supplied file or parameter at the CLI boundary."""
