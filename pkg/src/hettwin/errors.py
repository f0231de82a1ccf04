"""Exception types shared by every stage of the pipeline."""


class HettwinError(Exception):
    """Base class for all package errors."""


class DomainError(HettwinError, ValueError):
    """An input lies outside the domain an operation is defined on."""


class StateError(HettwinError, RuntimeError):
    """An operation was requested on an object in the wrong state."""


class NumericalError(HettwinError, ArithmeticError):
    """A numerical procedure failed (singular system, divergence, instability)."""


class ConfigError(HettwinError, ValueError):
    """A scenario file failed validation.

    ``diagnostics`` is a list of human readable messages, each naming the
    offending field (and line, when it could be located).
    """

    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.diagnostics))


class StageError(HettwinError, RuntimeError):
    """Wraps a failure inside one named stage of an orchestration round."""

    def __init__(self, stage: str, cause: BaseException):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage '{stage}' failed: {type(cause).__name__}: {cause}")
