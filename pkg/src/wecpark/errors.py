"""Exception types shared across the package."""


class ScenarioError(ValueError):
    """A scenario file or request failed validation."""


class HydroDataError(ValueError):
    """A hydrodynamic coefficient set violates its physical invariants."""


class NumericalError(RuntimeError):
    """A numerical procedure failed (singular system, non-convergence, NaN)."""
