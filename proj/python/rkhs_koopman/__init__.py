"""Kernel-based spectral analysis and forecasting of the Koopman generator."""

from ._core import (
    Model,
    ValidationError,
    eig_skew,
    fd_matrix,
    rkhs_scaling,
    run,
    set_log_level,
)

__all__ = [
    "Model",
    "ValidationError",
    "eig_skew",
    "fd_matrix",
    "rkhs_scaling",
    "run",
    "set_log_level",
]
