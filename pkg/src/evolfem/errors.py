"""Exception hierarchy shared by all modules."""


class EvolfemError(Exception):
    """Base class for library errors."""


class ConfigurationError(EvolfemError, ValueError):
    """Unsupported or inconsistent configuration."""


class InvalidMeshError(EvolfemError, ValueError):
    pass


class DomainError(EvolfemError, ValueError):
    """Point outside the region where an operation is defined."""


class DegenerateElementError(EvolfemError, ArithmeticError):
    pass


class ConstructionError(EvolfemError, RuntimeError):
    """Inconsistent node placement while building spaces or trace maps."""


class SolverError(EvolfemError, RuntimeError):
    """Iterative solver did not reach the requested tolerance."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations
