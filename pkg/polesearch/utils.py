"""
Utility functions for polesearch

Environment lookups, hashing of result artifacts and small numeric helpers
"""

import hashlib
import os
from typing import Any, Iterable

import numpy as np

# Absolute tolerance for time / budget comparisons
TIME_EPS = 1e-9


def get_env_value(key: str, default: Any, value_type: type = str) -> Any:
    """
    Get environment variable value with type conversion

    Args:
        key: Environment variable name
        default: Default value if environment variable is not set
        value_type: Type to convert the value to (str, int, float, bool)

    Returns:
        Environment variable value converted to the specified type, or default value
    """
    value = os.getenv(key)

    if value is None:
        return default

    if value_type == bool:
        return value.lower() in ("true", "1", "yes", "on")
    try:
        return value_type(value)
    except (ValueError, TypeError):
        return default


def array_digest(array: np.ndarray) -> str:
    """Stable md5 digest of an array's dtype, shape and contents"""
    contiguous = np.ascontiguousarray(array)
    digest = hashlib.md5()
    digest.update(str(contiguous.dtype).encode())
    digest.update(str(contiguous.shape).encode())
    digest.update(contiguous.tobytes())
    return digest.hexdigest()


def product(values: Iterable[float]) -> float:
    result = 1.0
    for value in values:
        result *= value
    return result


def format_float(value: float) -> str:
    """Fixed textual representation used in every CSV output"""
    if value != value:
        return "nan"
    return repr(float(round(value, 12)))
