"""Exception types shared across the package."""

import numpy as np


class GiiError(Exception):
    """Base class for package errors."""


class DomainError(GiiError, ValueError):
    """An elementary function was evaluated outside its domain."""

    def __init__(self, message, value=None):
        super().__init__(f"{message} (value={value!r})" if value is not None else message)
        self.value = value


class ContractError(GiiError):
    """A model produced a critical grid that violates its contract."""


class DegenerateSegmentError(GiiError):
    """A located segment is too narrow for the change of variables.

    ``location`` holds the offending cell index when known.
    """

    def __init__(self, message, location=None):
        super().__init__(f"{message} at cell {location}" if location is not None else message)
        self.location = location


class RankError(GiiError, np.linalg.LinAlgError):
    """A design or Jacobian matrix is rank deficient."""


class ConfigError(GiiError, ValueError):
    """Invalid configuration or command-line usage."""


class DataError(GiiError, ValueError):
    """Malformed or inconsistent input data."""
