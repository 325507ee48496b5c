from typing import Any, Dict, Optional


class NHMMError(Exception):
    kind = "error"

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.message = message
        self.details = dict(details or {})

    def to_json(self) -> dict:
        return {
            "error": self.kind,
            "message": self.message,
            "details": self.details,
        }


class InputError(NHMMError, ValueError):
    kind = "input"


class ConfigurationError(NHMMError, ValueError):
    kind = "configuration"


class NumericalError(NHMMError, ArithmeticError):
    kind = "numerical"
