"""
Exception hierarchy shared by every ghost_lab service.

All errors derive from ValueError so callers that only guard against bad
input keep working; management commands map them onto exit codes.
"""


class GhostLabError(ValueError):
    """Base class for simulator errors"""


class ConfigurationError(GhostLabError):
    """Inconsistent or out-of-range configuration (grids, apertures, objects, run files)"""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        if path is not None and line is not None:
            message = f"{path}:{line}: {message}"
        elif path is not None:
            message = f"{path}: {message}"
        super().__init__(message)


class InvalidGeometryError(GhostLabError):
    """Non-positive wavelength or propagation distance"""


class InsufficientStatisticsError(GhostLabError):
    """Too few realizations for the requested estimator"""


class DegenerateInputError(GhostLabError):
    """Input carries no information (zero variance, zero modulus, zero truth)"""


class FormatError(GhostLabError):
    """Malformed binary container, CSV pattern or transmission file"""


class SizeGuardError(GhostLabError):
    """Brute-force evaluation refused because it would be too large"""
