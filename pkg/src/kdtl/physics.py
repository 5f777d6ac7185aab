"""Closed-form KDTL interferometer model.

Units are SI throughout.  Polarisabilities are stored as polarisability
volumes in m^3 (1 A^3 = 1e-30 m^3); with alpha in volume units the phase and
photon-number expressions below are dimensionless exactly as written.

Geometry convention: ``L`` is the distance between neighbouring gratings
(G1-G2 = G2-G3), and the standing light wave has period ``lambda_L / 2 == d``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Optional

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import constants
from scipy.optimize import brentq
from scipy.special import ndtr, ndtri

from . import specfun
from .errors import DomainError, ValidationError

H = constants.h
HBAR = constants.hbar
C_LIGHT = constants.c
AMU = constants.atomic_mass

ANGSTROM3 = 1e-30
CM2 = 1e-4

#: sqrt(2 pi), from integrating the Gaussian waist profile along the flight path.
SQRT_2PI = math.sqrt(2.0 * math.pi)

#: Global maximum of J_2 on the real line.
J2_MAX = 0.48651

GAUSS_LEGENDRE_NODES = 128
PANEL_NODES = 16
V_MIN_FLOOR = 1.0
GAUSS_HALF_WIDTH = 5.0
TAIL_MASS = 1e-6
MAX_CYCLES = 4096.0
TAIL_PANELS = 4
CYCLE_SAMPLES = 1024
CYCLES_PER_PANEL = 6.0


def _lab_to_si(value, scale):
    # correctly rounded product of the decimal literals, so lab values survive a round trip
    return float(Fraction(repr(float(value))) * Fraction(repr(float(scale))))


@dataclass(frozen=True)
class Molecule:
    """The particle under test.

    ``alpha_vol`` may be ``None`` when the polarisability is the unknown being
    fitted; model evaluation then requires an explicit value.
    """

    name: str
    mass: float
    alpha_vol: Optional[float] = None
    sigma_abs: float = 0.0

    def __post_init__(self):
        if not (self.mass > 0 and math.isfinite(self.mass)):
            raise ValidationError("must be positive", "molecule.mass")
        if self.alpha_vol is not None and not (self.alpha_vol >= 0 and math.isfinite(self.alpha_vol)):
            raise ValidationError("must be non-negative", "molecule.alpha_vol")
        if not (self.sigma_abs >= 0 and math.isfinite(self.sigma_abs)):
            raise ValidationError("must be non-negative", "molecule.sigma_abs")

    @classmethod
    def from_lab_units(cls, name, mass_amu, alpha_A3=None, sigma_abs_cm2=0.0):
        alpha = None if alpha_A3 is None else _lab_to_si(alpha_A3, ANGSTROM3)
        return cls(name, _lab_to_si(mass_amu, AMU), alpha, _lab_to_si(sigma_abs_cm2, CM2))

    @property
    def alpha_A3(self):
        return None if self.alpha_vol is None else self.alpha_vol / ANGSTROM3

    def with_alpha(self, alpha_A3):
        return Molecule(self.name, self.mass, alpha_A3 * ANGSTROM3, self.sigma_abs)

    def with_sigma_abs(self, sigma_abs):
        return Molecule(self.name, self.mass, self.alpha_vol, sigma_abs)


@dataclass(frozen=True)
class InterferometerGeometry:
    """Grating period ``d``, open fraction ``f``, grating separation ``L``,
    laser wavelength ``lambda_L`` and laser waists.

    The horizontal waist ``w_x`` is carried as metadata only: it cancels out of
    every closed-form expression.
    """

    d: float
    f: float
    L: float
    lambda_L: float
    w_y: float
    w_x: Optional[float] = None

    def __post_init__(self):
        if not self.d > 0:
            raise ValidationError("grating period must be positive", "geometry.d")
        if not 0 < self.f < 1:
            raise ValidationError("open fraction must lie in (0, 1)", "geometry.f")
        if not self.L > 0:
            raise ValidationError("grating separation must be positive", "geometry.L")
        if not self.lambda_L > 0:
            raise ValidationError("laser wavelength must be positive", "geometry.lambda_L")
        if abs(self.lambda_L - 2.0 * self.d) > 1e-6 * 2.0 * self.d:
            raise ValidationError(
                f"standing-wave period lambda_L/2 = {self.lambda_L / 2:.6e} m "
                f"must equal the grating period d = {self.d:.6e} m",
                "geometry.lambda_L",
            )
        if not self.w_y > 0:
            raise ValidationError("vertical waist must be positive", "geometry.w_y")
        if self.w_x is not None and not self.w_x > 0:
            raise ValidationError("horizontal waist must be positive", "geometry.w_x")


@dataclass(frozen=True)
class VelocityDistribution:
    """Longitudinal velocity density of the molecular beam.

    ``form == "gaussian"``: normal density with mode ``v_m`` and standard
    deviation ``delta_v``, truncated to v > 0.  ``delta_v == 0`` is a
    monochromatic beam.

    ``form == "tabulated"``: discrete (v, weight) pairs; ``v_m`` and
    ``delta_v`` are derived from the table (weight-maximising velocity and
    weighted standard deviation).
    """

    form: str
    v_m: float
    delta_v: float
    table: Optional[tuple] = field(default=None)

    def __post_init__(self):
        if self.form not in ("gaussian", "tabulated"):
            raise ValidationError(f"unknown form {self.form!r}", "velocity.form")
        if self.form == "tabulated":
            if not self.table:
                raise ValidationError("tabulated form needs a non-empty table", "velocity.table")
            for v, w in self.table:
                if not (v > 0 and math.isfinite(v)):
                    raise ValidationError("velocities must be positive", "velocity.table")
                if not (w >= 0 and math.isfinite(w)):
                    raise ValidationError("weights must be non-negative", "velocity.table")
            if not sum(w for _, w in self.table) > 0:
                raise ValidationError("weights are not normalizable", "velocity.table")
        if not (self.v_m > 0 and math.isfinite(self.v_m)):
            raise ValidationError("most probable velocity must be positive", "velocity.v_m")
        if not (self.delta_v >= 0 and math.isfinite(self.delta_v)):
            raise ValidationError("velocity spread must be non-negative", "velocity.delta_v")

    @classmethod
    def gaussian(cls, v_m, delta_v):
        return cls("gaussian", float(v_m), float(delta_v))

    @classmethod
    def tabulated(cls, pairs):
        table = tuple((float(v), float(w)) for v, w in pairs)
        if not table:
            raise ValidationError("tabulated form needs a non-empty table", "velocity.table")
        v = np.array([p[0] for p in table])
        w = np.array([p[1] for p in table])
        if np.any(w < 0) or not w.sum() > 0:
            raise ValidationError("weights must be non-negative and normalizable", "velocity.table")
        p = w / w.sum()
        mean = float(np.sum(p * v))
        spread = float(math.sqrt(max(float(np.sum(p * (v - mean) ** 2)), 0.0)))
        return cls("tabulated", float(v[int(np.argmax(w))]), spread, table)

    def with_zero_spread(self):
        return VelocityDistribution.gaussian(self.v_m, 0.0)


@dataclass(frozen=True)
class PhaseAbsorptionState:
    phi_max: float
    n0: float
    xi_coh: float
    xi_abs: float
    L_over_LT: float


def _positive(name, value):
    arr = np.asarray(value, dtype=float)
    if np.any(~(arr > 0)) or not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} must be positive and finite")
    return arr


def _out(value):
    arr = np.asarray(value, dtype=float)
    return float(arr) if arr.ndim == 0 else arr


def de_broglie_wavelength(mass, v):
    """h / (m v)."""
    mass = _positive("mass", mass)
    v = _positive("velocity", v)
    return _out(H / (mass * v))


def talbot_length(d, lambda_dB):
    """Talbot length d**2 / lambda_dB."""
    d = _positive("grating period", d)
    lambda_dB = _positive("de Broglie wavelength", lambda_dB)
    return _out(d * d / lambda_dB)


def kdtl_resonant_length(m_index, d, lambda_dB):
    """Grating separation of the m-th KDTL contrast maximum, (2m+1)/2 * L_T.

    Valid in the weak-grating regime (phi_max below about 3.05); this is not
    enforced.
    """
    if int(m_index) != m_index or m_index < 0:
        raise DomainError(f"m_index must be a non-negative integer, got {m_index}")
    return _out((2 * int(m_index) + 1) / 2.0 * np.asarray(talbot_length(d, lambda_dB)))


def talbot_ratio(geometry, mass, v):
    """L / L_T for a particle of the given mass and speed."""
    lam = de_broglie_wavelength(mass, v)
    return _out(geometry.L / np.asarray(talbot_length(geometry.d, lam)))


def _alpha(molecule):
    if molecule.alpha_vol is None:
        raise DomainError(f"molecule {molecule.name!r} has no polarizability set")
    return molecule.alpha_vol


def phi_max(molecule, geometry, P, v):
    """Peak grating phase at a standing-wave antinode (radians).

    8 sqrt(2 pi) alpha P / (hbar c w_y v)
    """
    v = _positive("velocity", v)
    P = np.asarray(P, dtype=float)
    if np.any(P < 0):
        raise DomainError("laser power must be non-negative")
    return _out(8.0 * SQRT_2PI * _alpha(molecule) * P / (HBAR * C_LIGHT * geometry.w_y * v))


def mean_absorbed_photons(molecule, geometry, P, v):
    """Mean number of photons absorbed while crossing an antinode.

    8 sigma_abs lambda_L P / (sqrt(2 pi) h c w_y v)
    """
    v = _positive("velocity", v)
    P = np.asarray(P, dtype=float)
    if np.any(P < 0):
        raise DomainError("laser power must be non-negative")
    return _out(
        8.0 * molecule.sigma_abs * geometry.lambda_L * P / (SQRT_2PI * H * C_LIGHT * geometry.w_y * v)
    )


def xi_coherent(phi, L_over_LT):
    return _out(np.asarray(phi, dtype=float) * np.sin(np.pi * np.asarray(L_over_LT, dtype=float)))


def xi_absorptive(n0, L_over_LT):
    n0 = np.asarray(n0, dtype=float)
    if np.any(n0 < 0):
        raise DomainError("n0 must be non-negative")
    return _out(n0 * np.sin(0.5 * np.pi * np.asarray(L_over_LT, dtype=float)) ** 2)


def transmission_phase(x, phi, lambda_L):
    """Phase imprinted by the standing wave at transverse position x."""
    return _out(np.asarray(phi, dtype=float) * np.sin(2.0 * np.pi * np.asarray(x, dtype=float) / lambda_L) ** 2)


def phase_absorption_state(molecule, geometry, P, v):
    ratio = talbot_ratio(geometry, molecule.mass, v)
    phi = phi_max(molecule, geometry, P, v)
    n0 = mean_absorbed_photons(molecule, geometry, P, v)
    return PhaseAbsorptionState(
        phi_max=phi,
        n0=n0,
        xi_coh=xi_coherent(phi, ratio),
        xi_abs=xi_absorptive(n0, ratio),
        L_over_LT=ratio,
    )


def visibility_mono(f, xi_coh, xi_abs):
    """Signed fringe visibility at a single molecular velocity.

    V = 2 sinc(pi f)**2 exp(-xi_abs) (xi_coh - xi_abs)/(xi_coh + xi_abs)
        * J2(sqrt(xi_coh**2 - xi_abs**2))

    evaluated as ``(xi_coh - xi_abs)**2 * g(xi_coh**2 - xi_abs**2)`` with the
    entire function g = h/u, so the expression is finite and continuous
    everywhere, including xi_coh == -xi_abs and below the branch point where
    J2 of an imaginary argument becomes -I2.
    """
    if not 0 < f < 1:
        raise DomainError(f"open fraction must lie in (0, 1), got {f}")
    xc = np.asarray(xi_coh, dtype=float)
    xa = np.asarray(xi_abs, dtype=float)
    if np.any(xa < 0):
        raise DomainError("xi_abs must be non-negative")
    prefactor = 2.0 * specfun.sinc_pi(np.pi * f) ** 2
    diff = xc - xa
    damped_g = specfun.h_over_u(diff * (xc + xa), damping=xa)
    return _out(prefactor * diff * diff * damped_g)


def visibility_signed(molecule, geometry, P, v):
    """Monochromatic signed visibility for physical inputs."""
    ratio = talbot_ratio(geometry, molecule.mass, v)
    xc = xi_coherent(phi_max(molecule, geometry, P, v), ratio)
    xa = xi_absorptive(mean_absorbed_photons(molecule, geometry, P, v), ratio)
    return visibility_mono(geometry.f, xc, xa)


@lru_cache(maxsize=8)
def _legendre(n_nodes):
    x, w = leggauss(n_nodes)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def velocity_support(dist):
    """Integration range [max(1 m/s, v_m - 5 dv), v_m + 5 dv] of a Gaussian beam."""
    lo = max(V_MIN_FLOOR, dist.v_m - GAUSS_HALF_WIDTH * dist.delta_v)
    hi = dist.v_m + GAUSS_HALF_WIDTH * dist.delta_v
    if not hi > lo:
        raise DomainError("velocity distribution has no support above the velocity floor")
    return lo, hi


def _mass_floor(dist):
    # speed below which the support holds TAIL_MASS of the beam
    lo, hi = velocity_support(dist)
    z_lo = (lo - dist.v_m) / dist.delta_v
    z_hi = (hi - dist.v_m) / dist.delta_v
    inside = ndtr(z_hi) - ndtr(z_lo)
    z = float(ndtri(ndtr(z_lo) + TAIL_MASS * inside))
    return min(max(lo, dist.v_m + z * dist.delta_v), hi)


def _cycles_between(molecule, geometry, P_max, v_lo, v_hi):
    v = 1.0 / np.linspace(1.0 / v_hi, 1.0 / v_lo, CYCLE_SAMPLES)
    ratio = np.asarray(talbot_ratio(geometry, molecule.mass, v))
    xc = np.asarray(xi_coherent(phi_max(molecule, geometry, P_max, v), ratio))
    xa = np.asarray(xi_absorptive(mean_absorbed_photons(molecule, geometry, P_max, v), ratio))
    variation = np.abs(np.diff(xc)).sum() + np.abs(np.diff(xa)).sum()
    return float(ratio[-1] - ratio[0] + variation / np.pi)


def resolution_plan(molecule, geometry, dist, P_max):
    """Resolved speed range and its oscillation count for the velocity average.

    Returns ``(floor, cycles)``.  The monochromatic visibility oscillates
    fastest for slow molecules.  Above ``floor`` the quadrature resolves every
    oscillation: ``cycles`` counts the total variation of L/L_T plus that of
    xi_coh and xi_abs in units of pi (the zero spacing of J_2).  The floor is
    where the slow tail holds TAIL_MASS of the beam, raised if needed so that
    ``cycles <= MAX_CYCLES``; the tail below it is integrated coarsely, with
    an error of at most its weight since |V| <= 1.
    """
    if dist.form == "tabulated" or dist.delta_v == 0:
        return dist.v_m, 0.0
    _, hi = velocity_support(dist)
    floor = _mass_floor(dist)
    cycles = _cycles_between(molecule, geometry, P_max, floor, hi)
    if cycles > MAX_CYCLES:
        w_top = brentq(
            lambda w: _cycles_between(molecule, geometry, P_max, 1.0 / w, hi) - MAX_CYCLES,
            1.0 / hi,
            1.0 / floor,
            rtol=1e-4,
        )
        floor = 1.0 / w_top
        cycles = _cycles_between(molecule, geometry, P_max, floor, hi)
    return floor, cycles


def tail_mass(dist, floor):
    """Probability that a molecule of the truncated beam is slower than ``floor``."""
    lo, hi = velocity_support(dist)
    z = lambda v: (v - dist.v_m) / dist.delta_v  # noqa: E731
    return float((ndtr(z(floor)) - ndtr(z(lo))) / (ndtr(z(hi)) - ndtr(z(lo))))


def _panels(w_lo, w_hi, panels):
    x, gw = _legendre(PANEL_NODES)
    edges = np.linspace(w_lo, w_hi, panels + 1)
    half = 0.5 * np.diff(edges)[:, None]
    mid = 0.5 * (edges[1:] + edges[:-1])[:, None]
    return (mid + half * x).ravel(), (half * gw).ravel()


def velocity_nodes(dist, n_nodes=GAUSS_LEGENDRE_NODES, cycles=0.0, floor=None):
    """Quadrature nodes and normalised weights for a velocity distribution.

    Gaussian beams are integrated over [max(1 m/s, v_m - 5 dv), v_m + 5 dv]
    with composite Gauss-Legendre in w = 1/v, where L/L_T and the grating
    phases are linear.  Panels hold 16 nodes.  Above ``floor`` (see
    ``resolution_plan``; default: the whole support) there are at least
    n_nodes/16 panels and one per CYCLES_PER_PANEL oscillation cycles; the
    slow tail below it gets TAIL_PANELS panels.  Weights are renormalised to sum to
    one, which implements the truncation to positive velocities.
    """
    if dist.form == "tabulated":
        v = np.array([p[0] for p in dist.table])
        w = np.array([p[1] for p in dist.table])
        keep = w > 0
        return v[keep], w[keep] / w[keep].sum()
    if dist.delta_v == 0:
        return np.array([dist.v_m]), np.array([1.0])
    lo, hi = velocity_support(dist)
    floor = lo if floor is None else min(max(floor, lo), hi)
    panels = max(-(-n_nodes // PANEL_NODES), int(math.ceil(cycles / CYCLES_PER_PANEL)))
    inv_v, jac = _panels(1.0 / hi, 1.0 / floor, panels)
    if floor > lo:
        tail_w, tail_jac = _panels(1.0 / floor, 1.0 / lo, TAIL_PANELS)
        inv_v, jac = np.concatenate([inv_v, tail_w]), np.concatenate([jac, tail_jac])
    v = 1.0 / inv_v
    weights = jac * np.exp(-0.5 * ((v - dist.v_m) / dist.delta_v) ** 2) * v * v
    total = weights.sum()
    if not total > 0:
        raise DomainError("velocity distribution is degenerate")
    order = np.argsort(v)
    return v[order], (weights / total)[order]


def velocity_quadrature(molecule, geometry, dist, P_max, n_nodes=GAUSS_LEGENDRE_NODES):
    """Nodes and weights that resolve the velocity average up to power P_max."""
    floor, cycles = resolution_plan(molecule, geometry, dist, P_max)
    return velocity_nodes(dist, n_nodes, cycles, floor)


def visibility_avg_signed(
    molecule, geometry, dist, P, *, power_calibration=1.0, n_nodes=GAUSS_LEGENDRE_NODES, nodes=None
):
    """Velocity-averaged signed visibility; P may be a scalar or an array.

    ``nodes`` overrides the adaptive rule with fixed (v, weight) arrays, e.g.
    from ``velocity_quadrature``, so that a sequence of evaluations uses one
    quadrature rule.
    """
    P = np.asarray(P, dtype=float)
    if np.any(P < 0):
        raise DomainError("laser power must be non-negative")
    P_eff = P * power_calibration
    if nodes is None:
        nodes = velocity_quadrature(molecule, geometry, dist, float(np.max(P_eff, initial=0.0)), n_nodes)
    v, w = nodes
    mono = visibility_signed(molecule, geometry, P_eff[..., None], v)
    return _out(np.sum(np.asarray(mono) * w, axis=-1))


def visibility_avg(
    molecule, geometry, dist, P, *, power_calibration=1.0, n_nodes=GAUSS_LEGENDRE_NODES, nodes=None
):
    """Velocity-averaged fringe visibility |<V_signed>_v|.

    Monochromatic fringes share period d and have phase 0 or pi, so their
    amplitudes add algebraically before the magnitude is taken.
    """
    return _out(
        np.abs(
            visibility_avg_signed(
                molecule, geometry, dist, P, power_calibration=power_calibration, n_nodes=n_nodes, nodes=nodes
            )
        )
    )
