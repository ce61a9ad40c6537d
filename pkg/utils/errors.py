"""
Error types
Exceptions raised by the lab; the CLI maps them to exit codes
"""

from typing import Optional


class LabError(Exception):
    """Base class for every error raised by the lab"""


class InvalidMatrix(LabError, ValueError):
    """Matrix has non-finite entries or is not symmetric"""


class DegenerateMatrix(LabError, ValueError):
    """Matrix is zero where a nonzero matrix is required"""


class NotPSD(LabError, ValueError):
    """Matrix has an eigenvalue below the PSD tolerance"""


class ShapeError(LabError, ValueError):
    """Dimensions of the inputs do not agree"""


class DomainError(LabError, ValueError):
    """Argument lies outside the domain of the operation"""


class NotSubGaussian(LabError):
    """Family has no finite psi_2 constant"""


class NotSubExponential(NotSubGaussian):
    """Family has no finite psi_1 constant"""


class MomentDoesNotExist(LabError):
    """Requested moment is infinite for the family"""


class NotAbsolutelyContinuous(LabError, ValueError):
    """rho puts mass where mu does not"""


class ConfigError(LabError):
    """Invalid experiment or command configuration"""

    def __init__(self, message: str, field: Optional[str] = None):
        self.field = field
        if field:
            message = f"{field}: {message}"
        super().__init__(message)


class DataFormatError(ConfigError):
    """Malformed cell in a data file"""

    def __init__(self, message: str, row: int, column: int):
        self.row = row
        self.column = column
        super().__init__(f"row {row}, column {column}: {message}")
