"""
Utility functions and helpers.
"""

from src.utils.console import (
    log_debug,
    log_error,
    log_info,
    log_success,
    log_warning,
    set_verbosity,
)

__all__ = [
    "log_debug",
    "log_error",
    "log_info",
    "log_success",
    "log_warning",
    "set_verbosity",
]
