"""Numerical two-point gradient estimates for parabolic equations on
evolving surfaces."""

__version__ = "0.1.0"

from .errors import TwoPointError  # noqa: E402

__all__ = ["__version__", "TwoPointError"]
