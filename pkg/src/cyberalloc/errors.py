"""Exception hierarchy. Each family maps to one CLI exit code."""


class CyberAllocError(Exception):
    exit_code = 1


class ConfigError(CyberAllocError, ValueError):
    exit_code = 2


class DataError(CyberAllocError, ValueError):
    exit_code = 3


class InsufficientDataError(DataError):
    pass


class NumericError(CyberAllocError, ArithmeticError):
    exit_code = 4


class ResolutionError(NumericError):
    """Lattice too fine (or loss range too wide) for the configured support cap."""


class LatticeError(NumericError):
    """Operands live on different lattices."""


class UnsupportedFamilyError(ConfigError):
    pass


class SolverError(NumericError):
    pass
