from __future__ import annotations

import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from linkopt.modulation import (
    BerLaw,
    ModulationScheme,
    ber_awgn,
    catalog,
    get_scheme,
    mqam_papr,
    papr,
    q_function,
)

mpmath.mp.dps = 40

SCHEME_NAMES = [s.name for s in catalog()]


def mp_q(x: float) -> mpmath.mpf:
    return mpmath.erfc(mpmath.mpf(x) / mpmath.sqrt(2)) / 2


def mp_ber(scheme: ModulationScheme, snr: float) -> mpmath.mpf:
    if scheme.law is BerLaw.EXPONENTIAL:
        return scheme.c_m * mpmath.exp(-scheme.k_m * mpmath.mpf(snr))
    return scheme.c_m * mp_q(mpmath.sqrt(scheme.k_m * mpmath.mpf(snr)))


def test_dpsk_at_zero_snr():
    assert ber_awgn(get_scheme("DPSK"), 0.0) == 0.5


def test_bpsk_at_zero_snr():
    assert ber_awgn(get_scheme("BPSK"), 0.0) == 0.5


def test_bpsk_at_snr_four_against_high_precision():
    got = ber_awgn(get_scheme("BPSK"), 4.0)
    want = float(mp_q(math.sqrt(8.0)))
    assert got == pytest.approx(2.339e-3, rel=1e-3)
    assert got == pytest.approx(want, rel=1e-13)


def test_negative_snr_rejected():
    with pytest.raises(ValueError):
        ber_awgn(get_scheme("BPSK"), -1e-9)


def test_q_function_far_tail():
    assert q_function(30.0) == pytest.approx(float(mp_q(30.0)), rel=1e-12)


def test_fixed_papr_values():
    for name in ("NCFSK", "BPSK", "QPSK"):
        assert papr(get_scheme(name)) == 1.0
    assert papr(get_scheme("OQPSK")) == 2.138


def test_mqam_papr_literal_formula():
    assert mqam_papr(4) == pytest.approx(7.5)
    assert mqam_papr(16) == pytest.approx(14.25)
    assert mqam_papr(64) == pytest.approx(3 * (8 - 1 / 8 + 1))
    assert papr(get_scheme("16QAM")) == pytest.approx(14.25)


def test_catalog_contents():
    names = set(SCHEME_NAMES)
    assert {"NCFSK", "DPSK", "BPSK", "4QAM", "16QAM", "64QAM"} <= names
    qam16 = get_scheme("16QAM")
    assert qam16.constellation_size == 16 and qam16.bits_per_symbol == 4
    assert get_scheme("DPSK").law is BerLaw.EXPONENTIAL


@pytest.mark.parametrize("name", SCHEME_NAMES)
def test_catalog_invariants(name):
    s = get_scheme(name)
    assert 0 < s.c_m <= 1 and s.k_m > 0 and s.papr >= 1
    assert 2**s.bits_per_symbol == s.constellation_size


def test_textbook_constants():
    for m in (4, 16, 64):
        s = get_scheme(f"{m}QAM")
        b = math.log2(m)
        assert s.c_m == pytest.approx(4 * (1 - 1 / math.sqrt(m)) / b)
        assert s.k_m == pytest.approx(3 * b / (m - 1))
    s = get_scheme("8PSK")
    assert s.c_m == pytest.approx(2 / 3) and s.k_m == pytest.approx(6 * math.sin(math.pi / 8) ** 2)


def test_unknown_scheme():
    with pytest.raises(KeyError):
        get_scheme("7QAM")


def test_invalid_scheme_rejected():
    with pytest.raises(ValueError):
        ModulationScheme("bad", BerLaw.EXPONENTIAL, 2, 1.5, 1.0, 1.0, 0.3)


@pytest.mark.parametrize("name", SCHEME_NAMES)
def test_ber_vanishes_at_high_snr(name):
    assert ber_awgn(get_scheme(name), 1e6) < 1e-12


@given(st.sampled_from(SCHEME_NAMES), st.floats(0.0, 40.0), st.floats(1e-6, 5.0))
def test_ber_strictly_decreasing(name, snr, step):
    s = get_scheme(name)
    lo, hi = ber_awgn(s, snr), ber_awgn(s, snr + step)
    assert hi < lo and 0 < hi <= s.c_m


@given(st.sampled_from(SCHEME_NAMES), st.floats(0.0, 40.0))
def test_ber_matches_high_precision(name, snr):
    s = get_scheme(name)
    assert ber_awgn(s, snr) == pytest.approx(float(mp_ber(s, snr)), rel=1e-10)


# Symbol-level simulation of each adopted BER law at one SNR point.


def _rng(seed):
    return np.random.Generator(np.random.Philox(seed))


def _noise(rng, n):
    return (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / math.sqrt(2.0)


def _simulate_qam(m: int, snr_b: float, n_sym: int, rng) -> float:
    levels = int(math.isqrt(m))
    bits = int(math.log2(levels))
    i_idx, q_idx = rng.integers(0, levels, n_sym), rng.integers(0, levels, n_sym)
    amp = 2.0 * np.arange(levels) - (levels - 1)
    scale = math.sqrt(snr_b * math.log2(m) / (2.0 * (m - 1) / 3.0))
    r = scale * (amp[i_idx] + 1j * amp[q_idx]) + _noise(rng, n_sym)

    def detect(x):
        return np.clip(np.rint((x / scale + (levels - 1)) / 2.0), 0, levels - 1).astype(int)

    gray = np.arange(levels) ^ (np.arange(levels) >> 1)
    popcount = np.array([bin(v).count("1") for v in range(levels)])
    errors = popcount[gray[detect(r.real)] ^ gray[i_idx]] + popcount[gray[detect(r.imag)] ^ gray[q_idx]]
    return errors.sum() / (n_sym * 2 * bits)


def _simulate_dpsk(snr_b, n, rng):
    b = rng.integers(0, 2, n)
    phase = np.concatenate([[0.0], np.cumsum(np.pi * b)])
    r = math.sqrt(snr_b) * np.exp(1j * phase) + _noise(rng, n + 1)
    decided = (np.real(r[1:] * np.conj(r[:-1])) < 0).astype(int)
    return np.mean(decided != b)


def _simulate_ncfsk(snr_b, n, rng):
    r1 = math.sqrt(snr_b) + _noise(rng, n)
    r0 = _noise(rng, n)
    return np.mean(np.abs(r0) > np.abs(r1))


@pytest.mark.parametrize(
    "name, snr_b, sim",
    [
        ("NCFSK", 6.0, lambda s, rng: _simulate_ncfsk(s, 400_000, rng)),
        ("DPSK", 3.0, lambda s, rng: _simulate_dpsk(s, 400_000, rng)),
        ("BPSK", 3.0, lambda s, rng: _simulate_qam(4, s, 200_000, rng)),
        ("4QAM", 3.0, lambda s, rng: _simulate_qam(4, s, 200_000, rng)),
        ("16QAM", 10.0, lambda s, rng: _simulate_qam(16, s, 300_000, rng)),
        ("64QAM", 30.0, lambda s, rng: _simulate_qam(64, s, 300_000, rng)),
    ],
)
def test_ber_constants_against_symbol_simulation(name, snr_b, sim):
    # Gray-coded square QAM with 4 points is BPSK on each rail, so BPSK shares that simulator.
    got = sim(snr_b, _rng(12345))
    want = ber_awgn(get_scheme(name), snr_b)
    assert got == pytest.approx(want, rel=0.08)
