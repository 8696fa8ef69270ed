"""Shared exception taxonomy.

Service and CLI layers map these onto HTTP statuses / exit codes, so the
hierarchy is part of the internal contract: raise the most specific type.
"""

from __future__ import annotations


class ArenaError(Exception):
    """Base class for all domain errors."""


class ValidationError(ArenaError):
    """A document or value violates its schema or an invariant."""


class NotFoundError(ArenaError):
    """Referenced entity does not exist."""


class DuplicateError(ArenaError):
    """Entity with the same identity already exists."""


class NotJudgeableError(ArenaError):
    """Problem is not in a state that accepts submissions."""


class AttemptExhaustedError(ArenaError):
    """Single-attempt account already consumed its try on this problem."""


class TerminalVerdictError(ArenaError):
    """Attempted to change a verdict that is already terminal."""


class ImportFormatError(ValidationError):
    """Whole-archive rejection; carries the position of the first bad line."""

    def __init__(self, line_no: int, reason: str):
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no
        self.reason = reason


class RecordInvalidError(ImportFormatError):
    """One import record failed validation; the rest of the archive stands."""


class UnknownRuntimeError(NotFoundError):
    """Guest language id is not registered."""


class DuplicateRuntimeError(DuplicateError):
    """Guest language id is already registered."""


class SandboxSetupError(ArenaError):
    """Host-side failure while preparing or launching a run.

    Never attributable to the guest program; the judge retries once and
    then reports an internal error instead of any guest-fault verdict.
    """


class BackendError(ArenaError):
    """Prompt-resolution backend reported a typed failure."""

    def __init__(self, backend_id: str, detail: str):
        super().__init__(f"backend {backend_id!r}: {detail}")
        self.backend_id = backend_id
        self.detail = detail


class GeneratorHarnessError(ArenaError):
    """Test-case generation could not produce any usable case."""


class ConfigError(ArenaError):
    """Service or CLI configuration is invalid."""
