"""Debiasing toolkit for treatment effects estimated on shrunken ML predictions."""

from .errors import DebiasError, NumericalError, ParseError, ValidationError

__version__ = "0.1.0"

__all__ = ["DebiasError", "NumericalError", "ParseError", "ValidationError", "__version__"]
