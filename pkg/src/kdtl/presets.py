"""Reference molecules, apparatus geometry and beam parameters."""

from .physics import InterferometerGeometry, Molecule, VelocityDistribution


REFERENCE_GEOMETRY = InterferometerGeometry(
    d=266e-9,
    f=0.42,
    L=0.105,  # G1-G3 span is 210 mm with the light grating centred
    lambda_L=532e-9,
    w_y=900e-6,
    w_x=20e-6,
)

C70 = Molecule.from_lab_units("C70", 840.77, alpha_A3=117.0, sigma_abs_cm2=2.1e-17)
C60 = Molecule.from_lab_units("C60", 720.66, alpha_A3=91.0, sigma_abs_cm2=3.2e-18)

# (most probable velocity, standard deviation) in m/s for the C70 runs a-h.
C70_BEAMS = {
    "a": (99.7, 18.3),
    "b": (117.3, 14.4),
    "c": (196.7, 39.5),
    "d": (124.6, 22.8),
    "e": (114.4, 18.8),
    "f": (152.7, 24.8),
    "g": (171.2, 28.8),
    "h": (179.9, 33.5),
}

# C60 run: mean 153 m/s with dv/v = 0.3.
C60_BEAM = (153.0, 0.3 * 153.0)

# Optical polarizability volumes at 532 nm in A^3 (None where not available).
REFERENCE_POLARIZABILITIES = {
    "C60": {"thin_film": 90.0, "eels": 98.2, "theory": 80.6, "kdtl": (90.0, 11.0)},
    "C70": {"thin_film": 118.4, "eels": 122.6, "theory": None, "kdtl": (117.0, 14.0)},
}

# Relative systematic uncertainties of the apparatus.
POWER_CALIBRATION_REL = 0.10
WAIST_REL = 0.05


def c70_beam(label):
    v_m, dv = C70_BEAMS[label]
    return VelocityDistribution.gaussian(v_m, dv)


def c60_beam():
    return VelocityDistribution.gaussian(*C60_BEAM)
