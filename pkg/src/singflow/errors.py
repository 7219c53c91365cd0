"""Exception types raised across the package."""

from __future__ import annotations

import numpy as np


class SingflowError(Exception):
    """Base class for all package errors."""


class SingularMatrixError(SingflowError, ValueError):
    pass


class RepeatedDiagonalizableError(SingflowError, ValueError):
    """A 2x2 block equal to a scalar multiple of the identity."""


class StepUnderflow(SingflowError, RuntimeError):
    """Adaptive step size collapsed below the admissible floor.

    The last accepted state is kept on ``time`` and ``state``.
    """

    def __init__(self, message: str, time: float, state: np.ndarray):
        super().__init__(message)
        self.time = time
        self.state = state


class ChartExit(SingflowError, RuntimeError):
    """A trajectory left the coordinate chart around the singularity."""

    def __init__(self, message: str, time: float, state: np.ndarray):
        super().__init__(message)
        self.time = time
        self.state = state


class NoConvergence(SingflowError, RuntimeError):
    pass


class BracketingError(SingflowError, RuntimeError):
    pass


class NotNormalError(SingflowError, ValueError):
    """A vector handed to a Poincare map is not in the normal space."""


class ResolutionTooCoarse(SingflowError, ValueError):
    pass


class ModelSchemaError(SingflowError, ValueError):
    pass
