"""Intensity correlations of thermal radiation from absorbing random media.

Modules
-------
core        units, line shapes, Bose-Einstein occupation, line integrals
waveguide   closed-form correlators of a disordered absorbing waveguide
cavity      Monte Carlo moments and correlators of an absorbing chaotic cavity
rmt         scattering-matrix utilities and checks of large-N approximations
photosim    direct simulation of thermal photodetection
cli         command-line interface
"""

from .core import (
    BoseEinsteinInput,
    CorrelatorResult,
    DetectorPair,
    LorentzianLine,
    SpectralMoments,
    UnitSystem,
    bose_einstein,
    coherence_geometry,
    correlators_from_moments,
    line_integral,
)

__version__ = "0.1.0"

__all__ = [
    "BoseEinsteinInput",
    "CorrelatorResult",
    "DetectorPair",
    "LorentzianLine",
    "SpectralMoments",
    "UnitSystem",
    "bose_einstein",
    "coherence_geometry",
    "correlators_from_moments",
    "line_integral",
]
