import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kdtl import physics as ph
from kdtl.errors import DomainError, ValidationError
from kdtl.presets import C60, C70, C70_BEAMS, REFERENCE_GEOMETRY, c60_beam, c70_beam

GEOM = REFERENCE_GEOMETRY
PREFACTOR = 2.0 * (math.sin(0.42 * math.pi) / (0.42 * math.pi)) ** 2

# Frozen Monte-Carlo average (10**6 normal velocity samples, seed 20240611,
# scipy Bessel functions) for C70 beam (b), P = 1 W; standard error 2.53e-5.
MC_BEAM_B_1W = 0.03273183549640943


# -- kinematics --------------------------------------------------------------


def test_de_broglie_wavelengths():
    assert ph.de_broglie_wavelength(C70.mass, 100.0) == pytest.approx(4.74602e-12, rel=1e-5)
    assert ph.de_broglie_wavelength(C60.mass, 153.0) == pytest.approx(3.61897e-12, rel=1e-5)
    assert ph.de_broglie_wavelength(C70.mass, 200.0) == pytest.approx(0.5 * ph.de_broglie_wavelength(C70.mass, 100.0))


def test_talbot_lengths():
    lam = ph.de_broglie_wavelength(C70.mass, 100.0)
    lt = ph.talbot_length(266e-9, lam)
    assert lt == pytest.approx(14.91e-3, abs=0.01e-3)
    assert ph.talbot_length(3.0, 3.0) == pytest.approx(3.0)
    lam2 = ph.de_broglie_wavelength(C70.mass, 200.0)
    assert ph.talbot_length(266e-9, lam2) == pytest.approx(2 * lt)
    assert ph.kdtl_resonant_length(3, 266e-9, lam) == pytest.approx(52.18e-3, abs=0.01e-3)
    assert ph.kdtl_resonant_length(0, 266e-9, lam) == pytest.approx(0.5 * lt)
    spacing = np.diff([ph.kdtl_resonant_length(m, 266e-9, lam) for m in range(6)])
    assert np.allclose(spacing, lt, rtol=1e-12)


def test_talbot_window_of_the_beams():
    ratios = [ph.talbot_ratio(GEOM, C70.mass, v) for v in (100.0, 190.0)]
    assert ratios[0] == pytest.approx(7.0430, abs=1e-3)
    assert ratios[1] == pytest.approx(3.7068, abs=1e-3)
    assert all(3.6 <= r <= 7.2 for r in ratios)


def test_kinematics_domain_errors():
    with pytest.raises(DomainError):
        ph.de_broglie_wavelength(C70.mass, 0.0)
    with pytest.raises(DomainError):
        ph.de_broglie_wavelength(-1.0, 100.0)
    with pytest.raises(DomainError):
        ph.talbot_length(0.0, 1e-12)
    with pytest.raises(DomainError):
        ph.kdtl_resonant_length(-1, 266e-9, 1e-12)


# -- grating parameters ------------------------------------------------------


def test_phi_max_and_n0_goldens():
    assert ph.phi_max(C70, GEOM, 1.0, 100.0) == pytest.approx(0.8246, abs=1e-3)
    assert ph.phi_max(C70, GEOM, 1.0, 100.0) == pytest.approx(0.8245679, rel=1e-6)
    assert ph.phi_max(C70, GEOM, 2.0, 100.0) == pytest.approx(1.649, abs=1e-3)
    assert ph.phi_max(C70, GEOM, 0.0, 100.0) == 0.0
    assert ph.mean_absorbed_photons(C70, GEOM, 1.0, 100.0) == pytest.approx(0.1994, abs=1e-3)
    assert ph.mean_absorbed_photons(C70, GEOM, 1.0, 100.0) == pytest.approx(0.1994398, rel=1e-6)
    assert ph.mean_absorbed_photons(C60, GEOM, 1.0, 153.0) == pytest.approx(0.01986, abs=1e-5)
    assert ph.mean_absorbed_photons(C70.with_sigma_abs(0.0), GEOM, 1.0, 100.0) == 0.0


def test_phi_max_is_dimensionless_in_si():
    # alpha [m^3] P [J/s] / (hbar [J s] c [m/s] w [m] v [m/s]) -> 1; rescaling
    # every length by k and time by t must leave it unchanged
    k, t = 1e3, 1e-2
    alpha, P, w, v = 117e-30, 1.0, 900e-6, 100.0
    base = alpha * P / (ph.HBAR * ph.C_LIGHT * w * v)
    # J = kg m^2 s^-2; with kg fixed: J -> k^2 / t^2, W -> k^2 / t^3
    scaled = (alpha * k**3) * (P * k**2 / t**3) / (
        (ph.HBAR * k**2 / t) * (ph.C_LIGHT * k / t) * (w * k) * (v * k / t)
    )
    assert scaled == pytest.approx(base, rel=1e-12)


@given(st.floats(1e-3, 50.0), st.floats(5.0, 500.0))
def test_exact_linearity(P, v):
    assert ph.phi_max(C70, GEOM, 2 * P, v) == pytest.approx(2 * ph.phi_max(C70, GEOM, P, v), rel=1e-12)
    assert ph.mean_absorbed_photons(C70, GEOM, 2 * P, v) == pytest.approx(
        2 * ph.mean_absorbed_photons(C70, GEOM, P, v), rel=1e-12
    )
    doubled = C70.with_alpha(2 * C70.alpha_A3)
    assert ph.phi_max(doubled, GEOM, P, v) == pytest.approx(2 * ph.phi_max(C70, GEOM, P, v), rel=1e-12)
    more = C70.with_sigma_abs(2 * C70.sigma_abs)
    assert ph.mean_absorbed_photons(more, GEOM, P, v) == pytest.approx(
        2 * ph.mean_absorbed_photons(C70, GEOM, P, v), rel=1e-12
    )


def test_grating_parameter_errors():
    with pytest.raises(DomainError):
        ph.phi_max(C70, GEOM, 1.0, 0.0)
    with pytest.raises(DomainError):
        ph.phi_max(C70, GEOM, -1.0, 100.0)
    with pytest.raises(DomainError):
        ph.mean_absorbed_photons(C70, GEOM, 1.0, -5.0)
    with pytest.raises(DomainError):
        ph.phi_max(ph.Molecule("X", 1e-24), GEOM, 1.0, 100.0)


def test_xi_values():
    assert ph.xi_coherent(1.0, 0.5) == pytest.approx(1.0)
    assert abs(ph.xi_coherent(0.8246, 7.0)) < 1e-14
    # sin(7.063 pi) = -sin(0.063 pi)
    assert ph.xi_coherent(0.8246, 7.063) == pytest.approx(-0.16214, abs=1e-5)
    assert ph.xi_absorptive(0.0, 3.3) == 0.0
    assert ph.xi_absorptive(0.2, 0.0) == 0.0
    assert ph.xi_absorptive(0.2, 7.063) == pytest.approx(0.19805, abs=1e-5)
    with pytest.raises(DomainError):
        ph.xi_absorptive(-0.1, 1.0)


def test_transmission_phase():
    lam, phi = 532e-9, 1.7
    assert ph.transmission_phase(0.0, phi, lam) == 0.0
    assert ph.transmission_phase(lam / 4, phi, lam) == pytest.approx(phi)
    assert ph.transmission_phase(lam / 8, phi, lam) == pytest.approx(phi / 2)
    x = np.linspace(0, lam, 101)
    assert np.allclose(ph.transmission_phase(x + lam / 2, phi, lam), ph.transmission_phase(x, phi, lam), atol=1e-14)


def test_phase_absorption_state():
    s = ph.phase_absorption_state(C70, GEOM, 1.0, 100.0)
    assert s.phi_max == pytest.approx(0.8245679, rel=1e-6)
    assert s.xi_coh == pytest.approx(s.phi_max * math.sin(math.pi * s.L_over_LT))
    assert 0 <= s.xi_abs <= s.n0


# -- monochromatic visibility ------------------------------------------------


def test_visibility_mono_goldens():
    assert ph.visibility_mono(0.42, 3.054, 0.0) == pytest.approx(0.5243088, abs=1e-7)
    assert ph.visibility_mono(0.42, 1.0, 0.2) == pytest.approx(0.0651085, abs=1e-7)
    assert ph.visibility_mono(0.42, 0.0, 0.0) == 0.0
    for c in (0.0, 0.3, 2.0, 7.5):
        assert ph.visibility_mono(0.42, c, c) == 0.0


def test_visibility_mono_matches_textbook_form():
    from scipy.special import iv, jv

    rng = np.random.default_rng(3)
    xc = rng.uniform(-6, 6, 500)
    xa = rng.uniform(0, 4, 500)
    u = xc**2 - xa**2
    y = np.sqrt(np.abs(u))
    bes = np.where(u >= 0, jv(2, y), -iv(2, y))
    ref = PREFACTOR * np.exp(-xa) * (xc - xa) / (xc + xa) * bes
    assert np.allclose(ph.visibility_mono(0.42, xc, xa), ref, rtol=1e-10, atol=1e-13)


def test_visibility_mono_even_without_absorption():
    c = np.linspace(0, 12, 241)
    assert np.array_equal(ph.visibility_mono(0.42, -c, 0.0), ph.visibility_mono(0.42, c, 0.0))


def test_visibility_mono_bounds_and_continuity():
    xc = np.linspace(-6, 6, 300)
    xa = np.linspace(0, 4, 200)
    C, A = np.meshgrid(xc, xa, indexing="ij")
    V = ph.visibility_mono(0.42, C, A)
    assert np.all(np.isfinite(V))
    coherent = A <= np.abs(C)
    assert np.all(np.abs(V[coherent]) <= PREFACTOR * ph.J2_MAX)
    # approach the branch line c = a from both sides
    for a in (0.1, 0.7, 2.0, 3.9):
        for eps in (1e-6, 1e-9, 1e-12):
            left = ph.visibility_mono(0.42, a - eps, a)
            right = ph.visibility_mono(0.42, a + eps, a)
            assert abs(left) < 1e-9 and abs(right) < 1e-9
            assert abs(left - right) < 1e-9
        # and the singular-looking line c = -a
        assert abs(ph.visibility_mono(0.42, -a + 1e-9, a) - ph.visibility_mono(0.42, -a - 1e-9, a)) < 1e-9


def test_visibility_mono_errors():
    with pytest.raises(DomainError):
        ph.visibility_mono(0.0, 1.0, 0.0)
    with pytest.raises(DomainError):
        ph.visibility_mono(1.0, 1.0, 0.0)
    with pytest.raises(DomainError):
        ph.visibility_mono(0.42, 1.0, -0.1)


def test_visibility_periodic_in_talbot_ratio():
    # xi_coh and xi_abs repeat when L/L_T changes by 2
    for r in (0.3, 1.1, 2.5):
        a = ph.visibility_mono(0.42, ph.xi_coherent(2.0, r), ph.xi_absorptive(0.5, r))
        b = ph.visibility_mono(0.42, ph.xi_coherent(2.0, r + 2), ph.xi_absorptive(0.5, r + 2))
        assert a == pytest.approx(b, abs=1e-12)


# -- velocity average --------------------------------------------------------


def test_velocity_average_against_monte_carlo():
    value = ph.visibility_avg(C70, GEOM, c70_beam("b"), 1.0)
    assert abs(value - MC_BEAM_B_1W) < 1e-4


def test_velocity_average_zero_power_and_array_input():
    dist = c70_beam("a")
    assert ph.visibility_avg(C70, GEOM, dist, 0.0) == 0.0
    P = np.linspace(0, 2, 7)
    arr = ph.visibility_avg(C70, GEOM, dist, P)
    assert arr.shape == (7,)
    # same nodes are used for every power of one call
    assert arr[-1] == pytest.approx(ph.visibility_avg(C70, GEOM, dist, 2.0), abs=1e-12)
    assert np.all((arr >= 0) & (arr <= 1))


@pytest.mark.parametrize("label", sorted(C70_BEAMS))
def test_velocity_average_converged(label):
    dist = c70_beam(label)
    P = np.array([0.5, 2.0, 8.0])
    base = ph.visibility_avg(C70, GEOM, dist, P)
    fine = ph.visibility_avg(C70, GEOM, dist, P, n_nodes=4096)
    assert np.max(np.abs(base - fine)) < 1e-6


def test_narrow_distribution_tends_to_monochromatic():
    mono = abs(ph.visibility_signed(C70, GEOM, 1.0, 117.3))
    assert ph.visibility_avg(C70, GEOM, ph.VelocityDistribution.gaussian(117.3, 0.0), 1.0) == mono
    near = ph.visibility_avg(C70, GEOM, ph.VelocityDistribution.gaussian(117.3, 1e-3), 1.0)
    assert near == pytest.approx(mono, abs=1e-6)


def test_tabulated_distribution():
    single = ph.VelocityDistribution.tabulated([(140.0, 1.0)])
    assert ph.visibility_avg(C70, GEOM, single, 1.3) == abs(ph.visibility_signed(C70, GEOM, 1.3, 140.0))
    pair = ph.VelocityDistribution.tabulated([(120.0, 3.0), (160.0, 1.0)])
    assert pair.v_m == 120.0
    assert pair.delta_v == pytest.approx(math.sqrt(0.75 * 0.25) * 40.0)
    expect = 0.75 * ph.visibility_signed(C70, GEOM, 1.3, 120.0) + 0.25 * ph.visibility_signed(C70, GEOM, 1.3, 160.0)
    assert ph.visibility_avg(C70, GEOM, pair, 1.3) == pytest.approx(abs(expect), abs=1e-15)


def test_signed_average_then_magnitude():
    # at 10 W the fringes of 120 and 125 m/s molecules are in antiphase
    dist = ph.VelocityDistribution.tabulated([(120.0, 1.0), (125.0, 1.0)])
    a = ph.visibility_signed(C70, GEOM, 10.0, 120.0)
    b = ph.visibility_signed(C70, GEOM, 10.0, 125.0)
    assert a > 0 > b
    avg = ph.visibility_avg(C70, GEOM, dist, 10.0)
    assert avg == pytest.approx(abs(0.5 * (a + b)), abs=1e-15)
    assert avg < 0.5 * (abs(a) + abs(b))


def test_power_calibration_scales_power():
    dist = c60_beam()
    assert ph.visibility_avg(C60, GEOM, dist, 1.0, power_calibration=1.2) == pytest.approx(
        ph.visibility_avg(C60, GEOM, dist, 1.2), abs=1e-15
    )


def test_velocity_nodes_are_normalised():
    v, w = ph.velocity_nodes(c70_beam("c"), cycles=100.0)
    assert np.all(np.diff(v) > 0)
    assert v[0] >= ph.V_MIN_FLOOR
    assert w.sum() == pytest.approx(1.0, abs=1e-14)


# -- domain types ------------------------------------------------------------


def test_geometry_invariant():
    with pytest.raises(ValidationError, match="lambda_L"):
        ph.InterferometerGeometry(d=266e-9, f=0.42, L=0.105, lambda_L=500e-9, w_y=900e-6)
    with pytest.raises(ValidationError, match="geometry.f"):
        ph.InterferometerGeometry(d=266e-9, f=1.2, L=0.105, lambda_L=532e-9, w_y=900e-6)
    assert GEOM.lambda_L / 2 == pytest.approx(GEOM.d, rel=1e-12)


def test_type_validation():
    with pytest.raises(ValidationError):
        ph.Molecule("X", -1.0)
    with pytest.raises(ValidationError):
        ph.Molecule("X", 1e-24, sigma_abs=-1.0)
    with pytest.raises(ValidationError):
        ph.VelocityDistribution.gaussian(-3.0, 1.0)
    with pytest.raises(ValidationError):
        ph.VelocityDistribution.gaussian(100.0, -1.0)
    with pytest.raises(ValidationError):
        ph.VelocityDistribution.tabulated([(100.0, 0.0)])
    with pytest.raises(ValidationError):
        ph.VelocityDistribution("lorentzian", 100.0, 10.0)


def test_molecule_units():
    m = ph.Molecule.from_lab_units("C70", 840.77, 117.0, 2.1e-17)
    assert m.alpha_vol == pytest.approx(117e-30)
    assert m.sigma_abs == pytest.approx(2.1e-21)
    assert m.alpha_A3 == pytest.approx(117.0)
    assert ph.Molecule.from_lab_units("X", 10.0).alpha_A3 is None


@settings(max_examples=50, deadline=None)
@given(st.floats(40.0, 250.0), st.floats(0.0, 4.0))
def test_signed_visibility_bounded(v, P):
    assert abs(ph.visibility_signed(C70, GEOM, P, v)) <= PREFACTOR * ph.J2_MAX
