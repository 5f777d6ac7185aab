"""Wave-optics simulation of the interferometer without absorption.

A spatially incoherent beam is modelled as an incoherent sum of tilted plane
waves.  Each plane wave is transmitted by the binary G1 mask, propagated a
distance L, phase-shifted by the standing light wave, propagated L again, and
its intensity accumulated.  Flux behind G3 as a function of G3 shift is the
correlation of that intensity with the binary G3 mask; the visibility is the
first harmonic of the flux curve.

Because all three gratings share period d, a tilted plane wave stays a Bloch
wave ``exp(2 pi i kappa x / d) u(x)`` with ``u`` d-periodic, so one grating
period with a Bloch-shifted free propagator describes an infinitely wide
beam exactly (no window edges to apodise).  Lengths are in units of d, where
free propagation over L multiplies spatial frequency ``nu`` (cycles per d) by
``exp(-i pi (L/L_T) nu**2)``.

Nothing here uses the closed-form contrast formula or the special functions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError, NumericalQualityError

MIN_POINTS_PER_PERIOD = 32
EDGE_BAND = 0.05
EDGE_ENERGY_LIMIT = 1e-3
ENERGY_TOL = 1e-10


@dataclass(frozen=True)
class OracleConfig:
    """Numerical resolution of the wave simulation.

    grid_points : samples per grating period (power of two, >= 32)
    n_angles    : plane-wave directions in the incoherent average (odd)
    angle_span  : half-width of the angular range in units of d / L
    """

    grid_points: int = 512
    n_angles: int = 257
    angle_span: float = 8.0

    def __post_init__(self):
        n = self.grid_points
        if n < MIN_POINTS_PER_PERIOD:
            raise ConfigError(f"grid_points={n} under-resolves the grating (need >= {MIN_POINTS_PER_PERIOD})")
        if n & (n - 1):
            raise ConfigError(f"grid_points must be a power of two, got {n}")
        if self.n_angles < 1 or self.n_angles % 2 == 0:
            raise ConfigError(f"n_angles must be odd and positive, got {self.n_angles}")
        if not self.angle_span > 0:
            raise ConfigError("angle_span must be positive")


@dataclass(frozen=True)
class OracleResult:
    visibility: float  # signed: negative when the fringe maximum sits at d/2
    phase: float  # fringe phase in units of d
    energy_error: float  # worst relative norm change over all propagations
    edge_fraction: float  # spectral energy in the outer band after the light grating


def binary_mask(n, f):
    """Pixel-averaged transmission of a slit of width f (in units of d) centred at x = 0."""
    edges = (np.arange(n + 1) - 0.5) / n

    def open_length(x):
        # open length of the periodic mask on [-1/2, x]
        k = np.floor(x + 0.5)
        r = x + 0.5 - k - 0.5
        return k * f + np.clip(r + 0.5 * f, 0.0, f)

    return (open_length(edges[1:]) - open_length(edges[:-1])) * n


def _norm(u):
    return np.sum(np.abs(u) ** 2, axis=-1)


def _propagate(u, propagator):
    before = _norm(u)
    out = np.fft.ifft(np.fft.fft(u, axis=-1) * propagator, axis=-1)
    err = np.max(np.abs(_norm(out) - before) / before)
    return out, float(err)


def simulate(f, phi_max, L_over_LT, config=OracleConfig()):
    """Run the wave simulation and return the fringe visibility with diagnostics."""
    if not 0 < f < 1:
        raise DomainError(f"open fraction must lie in (0, 1), got {f}")
    if not L_over_LT > 0:
        raise DomainError("L/L_T must be positive")
    n = config.grid_points
    x = np.arange(n) / n
    g1 = binary_mask(n, f)
    light = np.exp(1j * phi_max * np.sin(np.pi * x) ** 2)

    # tilt s * d / L  ->  Bloch shift s / (L/L_T) cycles per period
    tilts = np.linspace(-config.angle_span, config.angle_span, config.n_angles)
    kappa = (tilts / L_over_LT)[:, None]
    weights = np.ones(config.n_angles)
    if config.n_angles > 1:
        weights[0] = weights[-1] = 0.5
    nu = np.fft.fftfreq(n, 1.0 / n)[None, :] + kappa
    propagator = np.exp(-1j * np.pi * L_over_LT * nu**2)

    u = np.broadcast_to(g1.astype(complex), (config.n_angles, n))
    u, err1 = _propagate(u, propagator)
    u = u * light

    spectrum = np.abs(np.fft.fft(u, axis=-1)) ** 2
    band = np.abs(np.fft.fftfreq(n, 1.0 / n)) > (0.5 - EDGE_BAND) * n
    edge_fraction = float(spectrum[:, band].sum() / spectrum.sum())
    if edge_fraction > EDGE_ENERGY_LIMIT:
        raise NumericalQualityError(
            f"{edge_fraction:.2e} of the spectral energy lies at the grid edge; increase grid_points"
        )

    u, err2 = _propagate(u, propagator)
    intensity = np.sum(weights[:, None] * np.abs(u) ** 2, axis=0)

    # flux(s) = sum_x I(x) g3(x - s), G3 identical to G1
    flux = np.real(np.fft.ifft(np.fft.fft(intensity) * np.conj(np.fft.fft(g1)))) / n
    harmonics = np.fft.fft(flux) / n
    c0, c1 = harmonics[0].real, harmonics[1]
    amplitude = 2.0 * abs(c1) / c0
    phase = (-np.angle(c1) / (2.0 * np.pi)) % 1.0
    sign = 1.0 if np.cos(2.0 * np.pi * phase) >= 0 else -1.0
    return OracleResult(
        visibility=float(sign * amplitude),
        phase=float(phase),
        energy_error=max(err1, err2),
        edge_fraction=edge_fraction,
    )


def oracle_visibility(f, phi_max, L_over_LT, config=OracleConfig()):
    """Signed fringe visibility from the wave simulation (no absorption)."""
    return simulate(f, phi_max, L_over_LT, config).visibility


DEFAULT_PHIS = (0.5, 1.0, 2.0, 3.0)
DEFAULT_RATIOS = (0.3, 0.5, 1.5, 3.5, 4.5)


def compare_sweep(f=0.42, phis=DEFAULT_PHIS, ratios=DEFAULT_RATIOS, config=OracleConfig()):
    """Closed form versus simulation on a phi_max x L/L_T grid.

    Returns rows of (phi_max, L/L_T, xi_coh, closed_form, oracle, difference).
    """
    from .physics import visibility_mono, xi_coherent

    rows = []
    for phi in phis:
        for ratio in ratios:
            xi = xi_coherent(phi, ratio)
            closed = visibility_mono(f, xi, 0.0)
            sim = oracle_visibility(f, phi, ratio, config)
            rows.append((phi, ratio, xi, closed, sim, sim - closed))
    return rows
