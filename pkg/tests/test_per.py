from __future__ import annotations

import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from linkopt.modulation import BerLaw, ber_awgn, catalog, get_scheme
from linkopt.oracle import avg_per_numeric, threshold_numeric
from linkopt.per import (
    EULER_GAMMA,
    GUMBEL_THIRD_CUMULANT_FACTOR,
    GUMBEL_VARIANCE_FACTOR,
    GumbelConstants,
    PacketShape,
    RefitConstants,
    UnsupportedFadingError,
    avg_per_nakagami_bound,
    avg_per_rayleigh,
    bound_constant,
    effective_constants,
    gumbel_constants,
    per_awgn_exact,
    per_awgn_gumbel,
    rayleigh_threshold,
    refit_constants,
    waterfall_threshold,
)

mpmath.mp.dps = 40

SCHEMES = catalog()
Q_SCHEMES = [s for s in SCHEMES if s.law is BerLaw.QFUNCTION]
REFIT = RefitConstants()


def mp_gumbel_threshold(a: float, b: float, m: int) -> float:
    """int_0^inf g^(m-1) P(X > g) dg for a Gumbel(a, b) variable, by tanh-sinh quadrature."""
    a, b = mpmath.mpf(a), mpmath.mpf(b)
    f = lambda g: g ** (m - 1) * -mpmath.expm1(-mpmath.exp(-(g - a) / b))
    return float(mpmath.quad(f, [0, a, a + 10 * b, mpmath.inf]))


# --- exact AWGN PER ------------------------------------------------------------


def test_single_bit_packet_is_the_ber():
    s = get_scheme("16QAM")
    for g in (0.0, 1.0, 7.5):
        assert per_awgn_exact(s, 1, g) == pytest.approx(ber_awgn(s, g), rel=1e-15)


def test_two_bit_dpsk_at_zero_snr():
    assert per_awgn_exact(get_scheme("DPSK"), 2, 0.0) == pytest.approx(0.75, rel=1e-15)


def test_bpsk_packet_against_high_precision():
    b = mpmath.erfc(mpmath.sqrt(10)) / 2  # Q(sqrt(20))
    want = float(1 - (1 - b) ** 128)
    assert per_awgn_exact(get_scheme("BPSK"), 128, 10.0) == pytest.approx(want, rel=1e-12)


def test_zero_length_packet_rejected():
    with pytest.raises(ValueError):
        per_awgn_exact(get_scheme("BPSK"), 0, 1.0)
    with pytest.raises(ValueError):
        PacketShape(0, 0)


@given(st.sampled_from(SCHEMES), st.integers(1, 2000), st.integers(1, 50), st.floats(0.0, 60.0), st.floats(1e-3, 5.0))
def test_exact_per_monotone(scheme, n, dn, g, dg):
    p = per_awgn_exact(scheme, n, g)
    assert 0.0 <= p <= 1.0
    assert per_awgn_exact(scheme, n + dn, g) >= p
    assert per_awgn_exact(scheme, n, g + dg) <= p


# --- Gumbel constants ------------------------------------------------------------


def test_exponential_constants():
    s = get_scheme("DPSK")
    g = gumbel_constants(s, 100)
    assert g.a_n == pytest.approx(math.log(50.0), rel=1e-15)
    assert g.a_n == pytest.approx(3.9120, abs=5e-5)
    assert g.b_n == 1.0


def test_exponential_scale_independent_of_length():
    s = get_scheme("NCFSK")
    assert gumbel_constants(s, 32).b_n == gumbel_constants(s, 1024).b_n
    assert gumbel_constants(s, 32).b_n * s.k_m == 1.0


def test_exponential_law_ignores_refit():
    s = get_scheme("DPSK")
    assert gumbel_constants(s, 64, REFIT) == gumbel_constants(s, 64)


def test_refit_constants_for_bpsk_like_scheme():
    g = gumbel_constants(get_scheme("BPSK"), 1000, REFIT)
    assert g.a_n == pytest.approx(math.log(211.4) / 1.1196, rel=1e-12)
    assert g.a_n == pytest.approx(4.782, abs=5e-4)
    assert g.b_n == pytest.approx(0.8932, abs=5e-5)


def test_inverse_error_function_constants():
    s = get_scheme("BPSK")
    n = 256
    g = gumbel_constants(s, n)
    a = 2 / s.k_m * mpmath.erfinv(1 - mpmath.mpf(2) / n) ** 2
    b = 2 / s.k_m * mpmath.erfinv(1 - 2 / (n * mpmath.e)) ** 2 - a
    assert g.a_n == pytest.approx(float(a), rel=1e-12)
    assert g.b_n == pytest.approx(float(b), rel=1e-10)


def test_inverse_error_function_domain():
    with pytest.raises(ValueError, match="erfinv"):
        gumbel_constants(get_scheme("BPSK"), 2)


def test_refit_warns_below_fit_range():
    with pytest.warns(RuntimeWarning):
        gumbel_constants(get_scheme("BPSK"), 4, REFIT)


def test_gumbel_constants_reject_nonpositive_scale():
    with pytest.raises(ValueError):
        GumbelConstants(1.0, 0.0)


# --- Gumbel PER ------------------------------------------------------------------


def test_gumbel_at_location():
    g = GumbelConstants(3.0, 0.7)
    assert per_awgn_gumbel(g, 3.0) == pytest.approx(1 - math.exp(-1), rel=1e-15)
    assert per_awgn_gumbel(g, 1e4) == 0.0


def test_gumbel_three_scales_above_location():
    g = gumbel_constants(get_scheme("BPSK"), 256)
    got = per_awgn_gumbel(g, g.a_n + 3 * g.b_n)
    assert got == pytest.approx(0.04857, abs=5e-6)
    # The Gumbel law is an approximation; it stays within 15% of the exact PER here.
    exact = per_awgn_exact(get_scheme("BPSK"), 256, g.a_n + 3 * g.b_n)
    assert got == pytest.approx(exact, rel=0.15)


@given(st.floats(0.0, 50.0), st.floats(0.01, 5.0), st.floats(0.0, 60.0), st.floats(1e-3, 3.0))
def test_gumbel_decreasing(a, b, g, dg):
    c = GumbelConstants(a, b)
    assert per_awgn_gumbel(c, g + dg) <= per_awgn_gumbel(c, g)


# --- waterfall thresholds ------------------------------------------------------


def test_threshold_m1_example():
    assert waterfall_threshold(GumbelConstants(3.9120, 1.0), 1) == pytest.approx(3.9120 + EULER_GAMMA, rel=1e-15)
    assert waterfall_threshold(GumbelConstants(3.9120, 1.0), 1) == pytest.approx(4.4892, abs=1e-4)


def test_threshold_m2_example():
    got = waterfall_threshold(GumbelConstants(3.9120, 1.0), 2)
    assert got == pytest.approx(10.89, abs=0.01)


def test_threshold_m2_degenerate_scale():
    # Scale -> 0 collapses the m=2 threshold to a^2/2.
    got = waterfall_threshold(GumbelConstants(5.0, 1e-9), 2)
    assert got == pytest.approx(12.5, rel=1e-8)


@pytest.mark.parametrize("m", [1, 2, 3])
@pytest.mark.parametrize("a, b", [(10.0, 1.0), (6.0, 0.5), (20.0, 2.0)])
def test_threshold_matches_gumbel_quadrature(a, b, m):
    got = waterfall_threshold(GumbelConstants(a, b), m)
    assert got == pytest.approx(mp_gumbel_threshold(a, b, m), rel=1e-9)


def test_threshold_rejects_large_fading_figure():
    with pytest.raises(UnsupportedFadingError):
        waterfall_threshold(GumbelConstants(3.0, 1.0), 4)


def test_rounded_moment_coefficients():
    # Printed coefficients of the m=2 and m=3 thresholds are 3-digit roundings.
    assert round(GUMBEL_VARIANCE_FACTOR, 2) == 1.64
    assert round(3 * GUMBEL_VARIANCE_FACTOR, 2) == 4.93
    assert round(GUMBEL_THIRD_CUMULANT_FACTOR, 2) == 2.40
    assert round(EULER_GAMMA, 4) == 0.5772
    assert GUMBEL_THIRD_CUMULANT_FACTOR == pytest.approx(float(2 * mpmath.zeta(3)), rel=1e-15)


# --- Rayleigh average ----------------------------------------------------------


@given(st.sampled_from(SCHEMES), st.integers(32, 1024), st.floats(0.1, 1e5))
def test_rayleigh_identity(scheme, n, snr):
    omega = waterfall_threshold(gumbel_constants(scheme, n, REFIT), 1)
    want = -math.expm1(-omega / snr)
    assert avg_per_rayleigh(scheme, n, snr, REFIT) == pytest.approx(want, rel=1e-12)


@given(st.sampled_from(SCHEMES), st.integers(32, 1024), st.floats(0.1, 1e5))
def test_rayleigh_product_form(scheme, n, snr):
    c, k = effective_constants(scheme, REFIT)
    want = 1 - mpmath.power(n * c, -1 / (k * mpmath.mpf(snr))) * mpmath.exp(-EULER_GAMMA / (k * mpmath.mpf(snr)))
    assert avg_per_rayleigh(scheme, n, snr) == pytest.approx(float(want), rel=1e-10)


def test_rayleigh_decreasing_and_vanishing():
    s = get_scheme("4QAM")
    values = avg_per_rayleigh(s, 128, np.geomspace(0.1, 1e8, 200))
    assert np.all(np.diff(values) < 0)
    assert values[-1] < 1e-6 and 0 < values[0] < 1


def test_rayleigh_rejects_nonpositive_snr():
    with pytest.raises(ValueError):
        avg_per_rayleigh(get_scheme("4QAM"), 128, 0.0)


def test_rayleigh_close_to_numeric_for_4qam():
    s = get_scheme("4QAM")
    snr = 100.0
    exact = avg_per_numeric(s, 128, snr)
    ub = -math.expm1(-threshold_numeric(s, 128) / snr)
    got = avg_per_rayleigh(s, 128, snr)
    assert abs((got - exact) / exact - (ub - exact) / exact) < 0.035


def test_rayleigh_threshold_real_valued_length():
    s = get_scheme("16QAM")
    assert rayleigh_threshold(s, 100.5) > rayleigh_threshold(s, 100)


# --- Nakagami bound --------------------------------------------------------------


@pytest.mark.parametrize("scheme", SCHEMES, ids=lambda s: s.name)
def test_bound_m1_equals_rayleigh(scheme):
    snr = np.geomspace(1.0, 1e3, 25)
    got = avg_per_nakagami_bound(scheme, 256, snr, 1, REFIT)
    assert np.allclose(got, np.minimum(avg_per_rayleigh(scheme, 256, snr, REFIT), 1.0), rtol=1e-14, atol=0)


@pytest.mark.parametrize("m", [1, 2, 3])
def test_bound_vanishes(m):
    assert avg_per_nakagami_bound(get_scheme("BPSK"), 128, 1e9, m) < 1e-6


def test_bound_constant_rayleigh():
    for s in SCHEMES:
        assert bound_constant(s, 100, 1) == 1.0


@pytest.mark.parametrize("m", [2, 3])
def test_bound_constant_dominates_grid(m):
    s = get_scheme("BPSK")
    b = bound_constant(s, 128, m)
    grid = np.linspace(0.0, 100.0, 20001)
    assert math.isfinite(b)
    assert np.all(grid ** (m - 1) * per_awgn_exact(s, 128, grid) <= b)


def test_bound_constant_unsupported():
    with pytest.raises(UnsupportedFadingError):
        bound_constant(get_scheme("BPSK"), 128, 4)


@pytest.mark.parametrize("m", [1, 2, 3])
@pytest.mark.parametrize("name", ["DPSK", "BPSK", "16QAM"])
def test_bound_with_numeric_threshold_dominates(name, m):
    s = get_scheme(name)
    n = 128
    omega = threshold_numeric(s, n, m)
    b = bound_constant(s, n, m)
    for snr in np.geomspace(1.0, 1000.0, 8):
        bound = b * m ** (m - 1) / (snr ** (m - 1) * math.gamma(m)) * -math.expm1(-m * omega / (snr * b))
        assert min(bound, 1.0) >= avg_per_numeric(s, n, snr, m) - 1e-9


# --- refit -------------------------------------------------------------------------


def test_refit_recovers_published_constants():
    fit = refit_constants(get_scheme("BPSK"))
    assert fit.k1 == pytest.approx(0.2114, rel=0.10)
    assert fit.k2 == pytest.approx(0.5598, rel=0.10)


@pytest.mark.parametrize("name", ["4QAM", "16QAM", "64QAM", "8PSK"])
def test_refit_transfers_across_schemes(name):
    fit = refit_constants(get_scheme("BPSK"))
    s = get_scheme(name)
    for n in (32, 128, 512, 1024):
        assert rayleigh_threshold(s, n, fit) == pytest.approx(threshold_numeric(s, n), rel=0.05)


def test_refit_single_length_matches_exactly():
    s = get_scheme("BPSK")
    fit = refit_constants(s, (200, 200), points=1)
    assert rayleigh_threshold(s, 200, fit) == pytest.approx(threshold_numeric(s, 200), rel=1e-10)


def test_refit_rejects_exponential_law():
    with pytest.raises(ValueError):
        refit_constants(get_scheme("DPSK"))
