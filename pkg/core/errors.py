"""
Exception hierarchy shared by services, controllers and the CLI
Each class carries the exit code and HTTP status it maps to
"""


class SeqOptError(Exception):
    exit_code = 1
    http_status = 500

    def __init__(self, message, details=None):
        super().__init__(message)
        self.message = message
        self.details = details or {}

    def to_dict(self):
        payload = {
            "success": False,
            "error": self.message,
            "error_type": type(self).__name__,
        }
        if self.details:
            payload["details"] = self.details
        return payload


class ValidationError(SeqOptError):
    exit_code = 2
    http_status = 400


class MalformedPlanError(ValidationError):
    """Plan does not match the model lattice or lacks an action"""


class NumericalGuardError(SeqOptError):
    exit_code = 3
    http_status = 422


class UnderflowGuardError(NumericalGuardError):
    pass


class StateCapError(NumericalGuardError):
    pass


class ConvergenceError(SeqOptError):
    exit_code = 4
    http_status = 409

    def __init__(self, message, details=None, trace=None):
        super().__init__(message, details)
        self.trace = trace or []

    def to_dict(self):
        payload = super().to_dict()
        if self.trace:
            payload["trace"] = self.trace
        return payload


class NotTruncatableError(ConvergenceError):
    pass


class BracketingError(ConvergenceError):
    pass
