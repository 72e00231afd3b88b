# src/core/exceptions.py - Custom exception classes
from typing import Optional


class ComputationError(Exception):
    """Base error with an error code, a CLI exit code and an HTTP status"""

    exit_code: int = 3
    status_code: int = 500

    def __init__(self, detail: str, error_code: str = "COMPUTATION_ERROR"):
        super().__init__(detail)
        self.detail = detail
        self.error_code = error_code


class ConfigError(ComputationError):
    """Experiment configuration could not be loaded or is inconsistent"""
    exit_code = 2
    status_code = 422

    def __init__(self, detail: str, field: Optional[str] = None):
        error_code = f"CONFIG_ERROR_{field.upper()}" if field else "CONFIG_ERROR"
        super().__init__(detail, error_code)


class ValidationError(ComputationError):
    """Precondition violations on arguments"""
    exit_code = 2
    status_code = 422

    def __init__(self, detail: str, field: Optional[str] = None):
        error_code = f"VALIDATION_ERROR_{field.upper()}" if field else "VALIDATION_ERROR"
        super().__init__(detail, error_code)


class NotFoundError(ComputationError):
    """Unknown named resource (builtin function, rate variant, command)"""
    exit_code = 2
    status_code = 404

    def __init__(self, resource: str, resource_id: Optional[str] = None):
        detail = f"{resource} not found"
        if resource_id:
            detail += f": {resource_id}"
        super().__init__(detail, f"{resource.upper().replace(' ', '_')}_NOT_FOUND")


class RangeViolationError(ComputationError):
    """Quantizer input outside its declared range"""
    status_code = 422

    def __init__(self, detail: str):
        super().__init__(detail, "RANGE_VIOLATION")


class EnumerationLimitError(ComputationError):
    """Codebook too large for exact enumeration"""
    status_code = 422

    def __init__(self, size: int, limit: int):
        super().__init__(
            f"codebook of {size} cosets exceeds the enumeration limit {limit}",
            "ENUMERATION_LIMIT",
        )
        self.size = size
        self.limit = limit


class PackingError(ComputationError):
    """Base-q packing parameters or digit sums are inconsistent"""
    status_code = 422

    def __init__(self, detail: str, code: str = "PACKING_ERROR"):
        super().__init__(detail, code)


class DecodingError(ComputationError):
    """The decoded modulo-p sum is not a valid sum of messages"""

    def __init__(self, detail: str):
        super().__init__(detail, "SUM_DECODING_FAILURE")


class PowerViolationError(ComputationError):
    """Transmit vector exceeds the average power constraint"""

    def __init__(self, energy: float, limit: float):
        super().__init__(
            f"block energy {energy:.6g} exceeds n*P = {limit:.6g}",
            "POWER_VIOLATION",
        )


# Common error messages
class ErrorMessages:
    DIMENSION_MISMATCH = "Vector length does not match lattice dimension"
    NOT_PRIME = "Alphabet size must be prime"
    NONPOSITIVE_POWER = "Power constraint must be positive"
    EMPTY_GRID = "SNR grid must not be empty"
    OUT_OF_DOMAIN = "Argument outside the function domain"


# Helper functions for common exceptions
def raise_validation_error(detail: str, field: Optional[str] = None) -> None:
    """Raise a standardized validation error"""
    raise ValidationError(detail, field)


def raise_not_found(resource: str, resource_id: Optional[str] = None) -> None:
    """Raise a standardized not found exception"""
    raise NotFoundError(resource, resource_id)
