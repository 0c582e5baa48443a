"""Exception types raised across the package.

Every error carries enough context in its attributes to be turned into a
structured failure record by the command-line front end.
"""
from __future__ import annotations


class SupershearError(Exception):
    """Base class; ``kind`` is the short machine-readable tag."""

    kind = "error"

    def to_record(self) -> dict:
        rec = {"error": self.kind, "message": str(self)}
        for key, val in vars(self).items():
            if isinstance(val, (int, float, str, bool)) or val is None:
                rec[key] = val
        return rec


class ConfigError(SupershearError):
    kind = "config"


class SubsonicPoint(SupershearError):
    kind = "subsonic"

    def __init__(self, message: str, x2: float | None = None, margin: float | None = None):
        super().__init__(message)
        self.x2 = x2
        self.margin = margin
        self.check = "validate_supersonic"


class GridTooCoarse(SupershearError):
    kind = "grid_too_coarse"


class GridMismatch(SupershearError):
    kind = "grid_mismatch"


class CompatibilityViolation(SupershearError):
    kind = "compatibility"


class CFLViolation(SupershearError):
    kind = "cfl"


class CharacteristicsCross(SupershearError):
    kind = "characteristics_cross"


class CornerMismatch(SupershearError):
    kind = "corner_mismatch"


class StreamlineCrossing(SupershearError):
    kind = "streamline_crossing"


class SolverDiverged(SupershearError):
    kind = "solver_diverged"

    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual


class NoConvergence(SupershearError):
    kind = "no_convergence"

    def __init__(self, message: str, history: list | None = None):
        super().__init__(message)
        self.history = list(history or [])


class DensityFloor(SupershearError):
    kind = "density_floor"


class DegenerateFit(SupershearError):
    kind = "degenerate_fit"
