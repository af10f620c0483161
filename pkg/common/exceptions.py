"""
Custom exceptions for the additive quantization toolkit.
"""


class AddqError(Exception):
    """
    Base exception for every failure raised by the toolkit.
    """
    def __init__(self, message="Quantization operation failed"):
        self.message = message
        super().__init__(self.message)


class FormatError(AddqError):
    """
    Exception raised when a matrix or artifact file is malformed.
    """
    def __init__(self, field, detail):
        self.field = field
        message = f"Malformed {field}: {detail}"
        super().__init__(message)


class UnsupportedDtypeError(FormatError):
    """
    Exception raised for payloads that are not 2-D float32 little-endian.
    """
    def __init__(self, detail):
        super().__init__('dtype', detail)


class CorruptionError(AddqError):
    """
    Exception raised when stored codes reference missing codebook entries.
    """
    def __init__(self, detail):
        message = f"Corrupted artifact: {detail}"
        super().__init__(message)


class DimensionError(AddqError):
    """
    Exception raised when operand shapes do not conform.
    """
    def __init__(self, detail):
        message = f"Dimension mismatch: {detail}"
        super().__init__(message)


class AssignmentError(AddqError):
    """
    Exception raised when a code index is outside its codebook.
    """
    def __init__(self, index, codebook_size):
        message = f"Code index {index} out of range for codebook of size {codebook_size}"
        super().__init__(message)


class DomainError(AddqError):
    """
    Exception raised for arguments outside the numeric domain of an operation.
    """
    def __init__(self, detail):
        message = f"Domain error: {detail}"
        super().__init__(message)


class ContractViolationError(AddqError):
    """
    Exception raised when an input breaks a documented precondition.
    """
    def __init__(self, detail):
        message = f"Contract violation: {detail}"
        super().__init__(message)


class DegenerateCalibrationError(AddqError):
    """
    Exception raised when calibration activations carry no signal.
    """
    def __init__(self):
        message = "Calibration activations are all zero; damping constant would be 0"
        super().__init__(message)


class OracleTooLargeError(AddqError):
    """
    Exception raised when exhaustive enumeration exceeds the configured cap.
    """
    def __init__(self, size, cap):
        self.size = size
        self.cap = cap
        message = f"Exhaustive oracle needs {size} codes, above the cap of {cap}"
        super().__init__(message)


class UnsupportedError(AddqError):
    """
    Exception raised for configurations an operation does not handle.
    """
    def __init__(self, detail):
        message = f"Unsupported: {detail}"
        super().__init__(message)


class DivergenceError(AddqError):
    """
    Exception raised when an optimisation loop produces a non-finite loss.
    """
    def __init__(self, where):
        self.where = where
        message = f"Non-finite loss at {where}"
        super().__init__(message)


class ConfigError(AddqError):
    """
    Exception raised when a configuration fails validation.
    """
    def __init__(self, errors):
        self.errors = errors
        message = f"Invalid configuration: {errors}"
        super().__init__(message)
