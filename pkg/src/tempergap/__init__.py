"""Spectral-gap toolkit for tempering dynamics on the torus.

Multimodal Gibbs targets on [0,1)^d mix slowly for a single random walk;
tempering ladders repair this.  This package builds the discrete chains
(random walk, parallel and simulated tempering), measures their spectral
gaps exactly and empirically, constructs the saddle-flattening potential
perturbation, and verifies the Lyapunov drift condition underlying the
gap bounds.
"""

__version__ = "0.1.0"

from .errors import (
    AssumptionError,
    ConfigError,
    ConvergenceError,
    ConvergenceWarning,
    DegeneracyError,
    ExtractionError,
    GeometryError,
    OutOfTubeError,
    ResolutionWarning,
    SizeError,
    UndefinedBasinError,
    WellDefinednessError,
)

__all__ = [
    "__version__",
    "AssumptionError",
    "ConfigError",
    "ConvergenceError",
    "ConvergenceWarning",
    "DegeneracyError",
    "ExtractionError",
    "GeometryError",
    "OutOfTubeError",
    "ResolutionWarning",
    "SizeError",
    "UndefinedBasinError",
    "WellDefinednessError",
]
