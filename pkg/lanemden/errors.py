__all__ = [
    'LaneEmdenError',
    'RangeError',
    'ValidationError',
    'DomainError',
    'SingularPointError',
    'RegimeError',
    'ConfigurationError',
    'InadmissibleError',
    'UsageError',
    'CapabilityError',
    'NumericError',
    'DivergenceError',
    'InconsistencyError',
    'NegativeComponentWarning',
    'ConvergenceWarning',
]

from typing import Any, Dict, Optional


class LaneEmdenError(Exception):
    """Base class for every error raised by the library.

    `code` is a stable identifier used by the command line to build the error document,
    `context` holds the values that triggered the error."""

    code = "error"

    def __init__(self, message: str, context: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.message = message
        self.context = {} if context is None else dict(context)

    def to_dict(self) -> Dict[str, Any]:
        return {"code": self.code, "message": self.message, "context": self.context}


class RangeError(LaneEmdenError, ValueError):
    code = "range"


class ValidationError(LaneEmdenError, ValueError):
    code = "validation"


class DomainError(LaneEmdenError, ValueError):
    code = "domain"


class SingularPointError(DomainError):
    code = "singular_point"


class RegimeError(LaneEmdenError, ValueError):
    code = "regime"


class ConfigurationError(LaneEmdenError, ValueError):
    code = "configuration"


class InadmissibleError(LaneEmdenError, ValueError):
    code = "inadmissible"


class UsageError(LaneEmdenError, ValueError):
    code = "usage"


class CapabilityError(LaneEmdenError, NotImplementedError):
    code = "capability"


class NumericError(LaneEmdenError, RuntimeError):
    code = "numeric"


class DivergenceError(NumericError):
    """Raised when an integration leaves the a priori amplitude envelope.

    `last_state` is the last state that passed the guard."""

    code = "divergence"

    def __init__(
        self,
        message: str,
        last_state: Any = None,
        context: Optional[Dict[str, Any]] = None,
    ):
        super().__init__(message, context)
        self.last_state = last_state


class InconsistencyError(NumericError):
    code = "inconsistency"


class NegativeComponentWarning(UserWarning):
    pass


class ConvergenceWarning(UserWarning):
    pass
