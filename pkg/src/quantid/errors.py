"""Exception hierarchy shared by every stage of the pipeline.

Each class carries the numeric evidence that triggered it so callers (and the
CLI's error JSON) can report it without recomputing anything.
"""

from __future__ import annotations


class QuantidError(Exception):
    """Base class for all package errors."""


class InvalidInputError(QuantidError, ValueError):
    """Non-finite entries, out-of-domain parameters, malformed files."""


class ShapeError(QuantidError, ValueError):
    """Matrix or dataset dimensions do not agree."""


class DefinitenessError(QuantidError, ValueError):
    def __init__(self, message: str, eigenvalue: float):
        super().__init__(f"{message} (offending eigenvalue {eigenvalue:.6g})")
        self.eigenvalue = float(eigenvalue)


class RankDeficiencyError(QuantidError, ValueError):
    def __init__(self, message: str, lambda_min: float):
        super().__init__(f"{message} (lambda_min = {lambda_min:.6g})")
        self.lambda_min = float(lambda_min)


class PersistentExcitationError(QuantidError):
    """The regressor Gram matrix is singular; least squares has no unique solution."""

    def __init__(self, sigma_min: float):
        super().__init__(f"data not persistently exciting: sigma_min(Psi) = {sigma_min:.6g}")
        self.sigma_min = float(sigma_min)


class RobustPEViolation(QuantidError):
    """sigma_min(Psi) - sqrt(T) * eps <= 0, so the error bound is undefined."""

    def __init__(self, margin: float):
        super().__init__(f"robust persistence of excitation violated: margin = {margin:.6g}")
        self.margin = float(margin)
