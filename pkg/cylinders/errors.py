"""Exception hierarchy shared by the geometry, solver and optimizer modules.

The management command maps each family to a process exit code; library
code only ever raises.
"""

from __future__ import annotations


class CylinderError(Exception):
    """Base class for errors raised by the cylinders app."""

    exit_code = 1


class InvalidParameterError(CylinderError, ValueError):
    """Raised for out-of-range inputs: non-positive lengths, empty masks, bad config."""

    exit_code = 2


class EnumerationCapError(InvalidParameterError):
    """Raised when a brute-force enumeration would exceed its cap."""

    def __init__(self, count: int, cap: int):
        super().__init__(
            f"enumeration of {count} masks exceeds the cap of {cap}; "
            "use a smaller grid or fewer cells"
        )
        self.count = count
        self.cap = cap


class SolverNonconvergenceError(CylinderError):
    """Raised when the torsion solve misses its tolerance within the iteration cap."""

    exit_code = 3

    def __init__(self, residual: float, iterations: int, tol: float):
        super().__init__(
            f"torsion solve stopped at relative residual {residual:.3e} "
            f"after {iterations} iterations (tolerance {tol:.1e})"
        )
        self.residual = residual
        self.iterations = iterations
        self.tol = tol


class InfeasibleGeometryError(CylinderError):
    """Raised when a shape leaves the cross-section or reaches the cap layer."""

    exit_code = 4


class DegenerateShapeError(InfeasibleGeometryError):
    """Raised when an evolving shape shrinks below the minimum cell count."""


class VerificationError(CylinderError):
    """Raised when one or more oracle identities fail."""

    exit_code = 5

    def __init__(self, failures: list[str]):
        super().__init__("verification failed: " + "; ".join(failures))
        self.failures = failures
