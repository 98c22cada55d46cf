"""Exception and warning types shared across the package."""


class ConfigError(Exception):
    """Invalid or unknown configuration keys/values (CLI exit code 2)."""


class ConvergenceError(RuntimeError):
    """An iterative routine exhausted its budget without converging."""


class DegeneracyError(ValueError):
    """A critical point has a Hessian eigenvalue indistinguishable from zero."""


class AssumptionError(ValueError):
    """The potential violates the two-well / nondegeneracy requirements."""


class GeometryError(RuntimeError):
    """Basin-boundary construction or orientation check failed."""


class OutOfTubeError(ValueError):
    """Point lies outside the tubular neighborhood of the basin boundary."""


class UndefinedBasinError(ValueError):
    """Gradient flow started at (or too close to) a non-minimum critical point."""


class ExtractionError(RuntimeError):
    """Boundary polyline failed to close within the vertex budget."""


class SizeError(ValueError):
    """State-space size exceeds the configured eigensolver cap."""


class WellDefinednessError(ValueError):
    """The perturbation support condition rho*a*sqrt(eps) < r0/2 fails."""


class ResolutionWarning(UserWarning):
    """Grid resolution is marginal (single reachable neighbor per side)."""


class ConvergenceWarning(UserWarning):
    """An iterative routine failed from some seeds; results may be partial."""
