"""Uncoded modulation catalog: BER laws, constants, PAPR and circuit power.

Every scheme is described in the per-bit SNR convention, with its bit error
rate written either as ``c * exp(-k * snr)`` or ``c * Q(sqrt(k * snr))``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc

__all__ = [
    "BerLaw",
    "ModulationScheme",
    "q_function",
    "ber_awgn",
    "papr",
    "mqam_papr",
    "catalog",
    "get_scheme",
    "CIRCUIT_POWER_W",
]

#: Circuit power (W) of the RF chain excluding the PA, per modulation family.
#: DPSK and MSK-style schemes have no published figure and reuse the PSK value.
CIRCUIT_POWER_W = {"qam": 0.310, "psk": 0.310, "fsk": 0.265}

#: PAPR for schemes whose value does not follow from a formula.
FIXED_PAPR = {"NCFSK": 1.0, "DPSK": 1.0, "BPSK": 1.0, "QPSK": 1.0, "OQPSK": 2.138}


class BerLaw(enum.Enum):
    EXPONENTIAL = "exponential"
    QFUNCTION = "qfunction"


@dataclass(frozen=True)
class ModulationScheme:
    """An uncoded modulation with its BER law and cost parameters.

    Parameters
    ----------
    name : str
        Catalog identifier, e.g. ``"16QAM"``.
    law : BerLaw
        Functional form of the bit error rate.
    constellation_size : int
        Number of constellation points ``M`` (power of two, ``M >= 2``).
    c_m, k_m : float
        Modulation-dependent BER constants, ``0 < c_m <= 1`` and ``k_m > 0``.
    papr : float
        Peak-to-average power ratio of the PA drive signal, ``>= 1``.
    circuit_power : float
        Power of the non-PA RF chain in watts.
    """

    name: str
    law: BerLaw
    constellation_size: int
    c_m: float
    k_m: float
    papr: float
    circuit_power: float

    def __post_init__(self) -> None:
        m = self.constellation_size
        if m < 2 or m & (m - 1):
            raise ValueError(f"{self.name}: constellation size must be a power of two >= 2, got {m}")
        if not 0.0 < self.c_m <= 1.0:
            raise ValueError(f"{self.name}: c_m must lie in (0, 1], got {self.c_m}")
        if not self.k_m > 0.0:
            raise ValueError(f"{self.name}: k_m must be positive, got {self.k_m}")
        if not self.papr >= 1.0:
            raise ValueError(f"{self.name}: papr must be >= 1, got {self.papr}")
        if self.circuit_power < 0.0:
            raise ValueError(f"{self.name}: circuit power must be nonnegative")

    @property
    def bits_per_symbol(self) -> int:
        return self.constellation_size.bit_length() - 1


def q_function(x):
    """Gaussian tail probability ``Q(x) = erfc(x / sqrt(2)) / 2``.

    Backed by the Cody rational approximations in ``scipy.special.erfc``,
    which keep full relative accuracy deep into the tail.
    """
    return 0.5 * erfc(np.asarray(x, dtype=float) / math.sqrt(2.0))


def ber_awgn(scheme: ModulationScheme, snr):
    """Bit error rate of ``scheme`` at per-bit SNR ``snr`` (linear) in AWGN."""
    snr = np.asarray(snr, dtype=float)
    if np.any(snr < 0) or np.any(np.isnan(snr)):
        raise ValueError("SNR must be nonnegative")
    if scheme.law is BerLaw.EXPONENTIAL:
        out = scheme.c_m * np.exp(-scheme.k_m * snr)
    else:
        out = scheme.c_m * q_function(np.sqrt(scheme.k_m * snr))
    return out if out.ndim else float(out)


def mqam_papr(m: int) -> float:
    """PAPR of square M-QAM, read literally as ``3 * (sqrt(M) - 1/sqrt(M) + 1)``."""
    r = math.sqrt(m)
    return 3.0 * (r - 1.0 / r + 1.0)


def papr(scheme: ModulationScheme) -> float:
    return scheme.papr


def _qam(m: int) -> ModulationScheme:
    bits = math.log2(m)
    return ModulationScheme(
        name=f"{m}QAM",
        law=BerLaw.QFUNCTION,
        constellation_size=m,
        c_m=4.0 * (1.0 - 1.0 / math.sqrt(m)) / bits,
        k_m=3.0 * bits / (m - 1),
        papr=mqam_papr(m),
        circuit_power=CIRCUIT_POWER_W["qam"],
    )


def _psk(m: int, name: str | None = None) -> ModulationScheme:
    bits = math.log2(m)
    name = name or f"{m}PSK"
    return ModulationScheme(
        name=name,
        law=BerLaw.QFUNCTION,
        constellation_size=m,
        c_m=2.0 / bits,
        k_m=2.0 * bits * math.sin(math.pi / m) ** 2,
        papr=FIXED_PAPR.get(name, 1.0),
        circuit_power=CIRCUIT_POWER_W["psk"],
    )


def catalog() -> list[ModulationScheme]:
    """Return the built-in schemes.

    Constants follow the usual nearest-neighbour forms in per-bit SNR:

    ========  ===========  =========================  ============================
    scheme    law          c_m                        k_m
    ========  ===========  =========================  ============================
    NCFSK     exponential  1/2                        1/2
    DPSK      exponential  1/2                        1
    BPSK      Q-function   1                          2
    M-PSK     Q-function   2/log2(M)                  2 log2(M) sin^2(pi/M)
    M-QAM     Q-function   4(1 - 1/sqrt(M))/log2(M)   3 log2(M)/(M - 1)
    ========  ===========  =========================  ============================

    OQPSK shares the QPSK constants and differs only in PAPR.
    """
    fsk, psk = CIRCUIT_POWER_W["fsk"], CIRCUIT_POWER_W["psk"]
    qpsk = _psk(4, "QPSK")
    return [
        ModulationScheme("NCFSK", BerLaw.EXPONENTIAL, 2, 0.5, 0.5, FIXED_PAPR["NCFSK"], fsk),
        ModulationScheme("DPSK", BerLaw.EXPONENTIAL, 2, 0.5, 1.0, FIXED_PAPR["DPSK"], psk),
        ModulationScheme("BPSK", BerLaw.QFUNCTION, 2, 1.0, 2.0, FIXED_PAPR["BPSK"], psk),
        qpsk,
        ModulationScheme("OQPSK", BerLaw.QFUNCTION, 4, qpsk.c_m, qpsk.k_m, FIXED_PAPR["OQPSK"], psk),
        _psk(8),
        _qam(4),
        _qam(16),
        _qam(64),
    ]


def get_scheme(name: str) -> ModulationScheme:
    for scheme in catalog():
        if scheme.name.upper() == name.upper():
            return scheme
    known = ", ".join(s.name for s in catalog())
    raise KeyError(f"unknown modulation scheme {name!r} (known: {known})")
