"""Numerical laboratory for boundary regularity of nonlocal equations on flat domains."""
__version__ = "0.1.0"

from ._backend import BACKEND  # noqa: F401
