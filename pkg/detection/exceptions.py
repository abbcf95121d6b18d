# detection/exceptions.py


class DetectionError(Exception):
    """Base error for the detection toolkit; carries a machine-readable payload."""

    exit_code = 1

    def __init__(self, message, **details):
        super().__init__(message)
        self.message = message
        self.details = details

    def as_dict(self):
        return {"error": type(self).__name__, "message": self.message, **self.details}


class ConfigurationError(DetectionError):
    exit_code = 2


class PreconditionError(DetectionError):
    exit_code = 3


class UnsupportedModeError(DetectionError):
    exit_code = 3


class EnumerationCapExceeded(DetectionError):
    exit_code = 4

    def __init__(self, size, cap):
        super().__init__(
            f"Family has N={size} members which exceeds the enumeration cap {cap}",
            size=str(size),
            cap=cap,
        )
