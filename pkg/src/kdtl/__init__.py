"""Simulation and polarizability inference for Kapitza-Dirac-Talbot-Lau interferometry."""

__version__ = "0.1.0"

from .datasets import (
    FringeScan,
    VisibilityDataset,
    VisibilityPoint,
    extract_visibility,
    parse_dataset,
    serialize_dataset,
    synth_dataset,
)
from .fitting import FitOptions, FitResult, analyze, chi_square, combine_budget, fit_alpha
from .physics import (
    InterferometerGeometry,
    Molecule,
    VelocityDistribution,
    phi_max,
    mean_absorbed_photons,
    visibility_avg,
    visibility_mono,
)
