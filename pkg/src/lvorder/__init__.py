"""Estimate causal orders under a linear non-Gaussian model with latent confounders."""

from typing import Optional

DEFAULT_ALPHA = 0.05
CONDITION_CAP = 1e12
P_VALUE_FLOOR = 1e-15
MIN_HSIC_SAMPLES = 20
DEFAULT_PERMUTATIONS = 1000
DEFAULT_SUBSAMPLE_CAP = 2000
DEFAULT_TRIALS = 100
DEFAULT_SAMPLES = (500, 1000, 2000)

PHASE_TOP_DOWN = "top-down"
PHASE_BOTTOM_UP = "bottom-up"
PHASE_STRENGTHS = "strengths"

STOP_THRESHOLD = "threshold-hit"
STOP_EXHAUSTED = "exhausted"
STOP_TOO_FEW = "too-few-remaining"
STOP_SKIPPED = "skipped"
DECISION_APPENDED = "appended"

METHOD_DISCOVER = "discover"
METHOD_BASELINE = "direct-lingam"


class LvOrderError(Exception):
    """Base class for data-dependent failures."""


class DegenerateDataError(LvOrderError):
    """Raised when a variable has zero sample variance."""

    def __init__(self, variable_id: str):
        """Create a DegenerateDataError."""
        super().__init__(f"variable {variable_id!r} has zero variance")
        self.variable_id = variable_id


class SingularMatrixError(LvOrderError):
    """Raised when a regression system is singular or badly conditioned."""

    def __init__(self, condition: float, context: Optional[str] = None):
        """Create a SingularMatrixError."""
        message = f"matrix is singular or near-singular (condition {condition:.3g})"
        if context is not None:
            message = f"{context}: {message}"
        super().__init__(message)
        self.condition = condition
        self.context = context


class CalibrationError(LvOrderError):
    """Raised when a variable cannot be calibrated to the requested ratio."""

    def __init__(self, variable_id: str, reason: str):
        """Create a CalibrationError."""
        super().__init__(f"cannot calibrate {variable_id!r}: {reason}")
        self.variable_id = variable_id


class PhaseError(LvOrderError):
    """Raised when a phase of the ordering algorithm fails."""

    def __init__(self, phase: str, cause: Exception):
        """Create a PhaseError."""
        super().__init__(f"{phase} phase failed: {cause}")
        self.phase = phase
        self.cause = cause

    @property
    def variable_id(self) -> Optional[str]:
        """Get the offending variable, when the cause names one."""
        return getattr(self.cause, "variable_id", None)
