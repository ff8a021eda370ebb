"""
Exceptions raised by the charging-pole search package
"""


class PoleSearchError(Exception):
    """Base exception for all package errors"""
    pass


class ConfigurationError(PoleSearchError):
    """Raised when an experiment or planner configuration is invalid"""
    pass


class InstanceSchemaError(PoleSearchError):
    """Raised when an instance file does not match the documented schema"""

    def __init__(self, message: str, path: str = "$"):
        super().__init__(f"{path}: {message}")
        self.path = path


class InfeasiblePolicyError(PoleSearchError):
    """Raised when a visit sequence violates radius, budget or repeat rules"""
    pass


class TransitionError(PoleSearchError):
    """Raised when an MDP transition is applied to an incompatible state"""
    pass


class OracleSizeError(PoleSearchError):
    """Raised when an exhaustive computation is requested on a too large instance"""
    pass


class GenerationError(PoleSearchError):
    """Raised when the instance generator cannot produce a valid instance"""
    pass


class CellTimeoutError(PoleSearchError):
    """Raised when an experiment cell exceeds its wall-clock cap"""
    pass
