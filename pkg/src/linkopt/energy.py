"""Energy per delivered information bit over a fading link with truncated ARQ."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np

from .modulation import ModulationScheme
from .per import PacketShape, RefitConstants, avg_per_rayleigh

__all__ = [
    "UNREACHABLE",
    "is_unreachable",
    "db_to_linear",
    "linear_to_db",
    "noise_psd_from_half_dbm",
    "LinkBudget",
    "EnergyParams",
    "CostCoefficients",
    "ReliabilityTarget",
    "OperatingPoint",
    "pathloss_gain",
    "cost_coefficients",
    "energy_per_bit_attempt",
    "attempts_untruncated",
    "attempts_truncated",
    "expected_energy",
    "truncated_energy",
    "snr_max",
    "residual_per",
]

log = logging.getLogger(__name__)

#: Cost reported when the per-attempt PER reaches one and no bit is ever delivered.
UNREACHABLE = math.inf


def is_unreachable(value: float) -> bool:
    return value == UNREACHABLE


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def linear_to_db(x):
    return 10.0 * np.log10(x)


def noise_psd_from_half_dbm(half_psd_dbm_hz: float) -> float:
    """Convert a two-sided ``N0/2`` in dBm/Hz to ``N0`` in W/Hz."""
    return 2.0 * db_to_linear(half_psd_dbm_hz) * 1e-3


@dataclass(frozen=True)
class LinkBudget:
    """Path-loss and radio limits, all in linear units.

    ``g1`` is the gain factor at unit distance, ``link_margin`` the extra
    path-loss allowance, ``noise_psd`` is ``N0`` in W/Hz and
    ``max_tx_power`` the transmit power cap in W.
    """

    g1: float
    kappa: float
    distance_m: float
    link_margin: float
    noise_psd: float
    bandwidth_hz: float
    max_tx_power: float

    def __post_init__(self) -> None:
        for name in ("g1", "kappa", "distance_m", "link_margin", "noise_psd", "bandwidth_hz", "max_tx_power"):
            object.__setattr__(self, name, float(getattr(self, name)))
            if not getattr(self, name) > 0:
                raise ValueError(f"link budget field {name} must be positive, got {getattr(self, name)}")

    @classmethod
    def from_db(
        cls,
        g1_db: float = 30.0,
        kappa: float = 3.5,
        distance_m: float = 10.0,
        link_margin_db: float = 40.0,
        noise_half_psd_dbm_hz: float = -174.0,
        bandwidth_hz: float = 10e3,
        max_tx_power: float = 10e-3,
    ) -> "LinkBudget":
        return cls(
            g1=db_to_linear(g1_db),
            kappa=kappa,
            distance_m=distance_m,
            link_margin=db_to_linear(link_margin_db),
            noise_psd=noise_psd_from_half_dbm(noise_half_psd_dbm_hz),
            bandwidth_hz=bandwidth_hz,
            max_tx_power=max_tx_power,
        )

    def at(self, distance_m: float) -> "LinkBudget":
        return replace(self, distance_m=distance_m)


@dataclass(frozen=True)
class EnergyParams:
    """PA and circuit parameters.

    ``circuit_power=None`` takes the scheme's own value; ``symbol_rate=None``
    sets the symbol rate equal to the bandwidth.
    """

    pa_drain_efficiency: float = 0.35
    circuit_power: float | None = None
    symbol_rate: float | None = None

    def __post_init__(self) -> None:
        if not 0.0 < self.pa_drain_efficiency <= 1.0:
            raise ValueError("drain efficiency must lie in (0, 1]")
        if self.circuit_power is not None and self.circuit_power < 0:
            raise ValueError("circuit power must be nonnegative")
        if self.symbol_rate is not None and not self.symbol_rate > 0:
            raise ValueError("symbol rate must be positive")


@dataclass(frozen=True)
class CostCoefficients:
    """``E0 = (N / n_p) * a_coeff * snr + b_coeff`` (J/bit)."""

    a_coeff: float
    b_coeff: float

    def __post_init__(self) -> None:
        if not self.a_coeff > 0:
            raise ValueError("a_coeff must be positive")
        if self.b_coeff < 0:
            raise ValueError("b_coeff must be nonnegative")

    @property
    def ratio(self) -> float:
        return self.b_coeff / self.a_coeff


@dataclass(frozen=True)
class ReliabilityTarget:
    epsilon: float
    max_retx: int

    def __post_init__(self) -> None:
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if self.max_retx < 0 or int(self.max_retx) != self.max_retx:
            raise ValueError(f"max_retx must be a nonnegative integer, got {self.max_retx}")

    @property
    def eps_req(self) -> float:
        """Per-attempt PER budget ``epsilon ** (1 / (max_retx + 1))``."""
        return self.epsilon ** (1.0 / (self.max_retx + 1))


@dataclass(frozen=True)
class OperatingPoint:
    mean_snr: float
    shape: PacketShape
    scheme: ModulationScheme
    reliability: ReliabilityTarget
    predicted_per: float
    energy_per_bit: float

    @property
    def mean_snr_db(self) -> float:
        return float(linear_to_db(self.mean_snr))


def pathloss_gain(link: LinkBudget) -> float:
    """``G_d = G1 * d**kappa * M_l``."""
    return link.g1 * link.distance_m**link.kappa * link.link_margin


def cost_coefficients(
    scheme: ModulationScheme, link: LinkBudget, energy: EnergyParams = EnergyParams()
) -> CostCoefficients:
    p_c = scheme.circuit_power if energy.circuit_power is None else energy.circuit_power
    r_s = link.bandwidth_hz if energy.symbol_rate is None else energy.symbol_rate
    a = scheme.papr * link.noise_psd * pathloss_gain(link) / energy.pa_drain_efficiency
    return CostCoefficients(a_coeff=a, b_coeff=p_c / (r_s * scheme.bits_per_symbol))


def energy_per_bit_attempt(coeffs: CostCoefficients, shape: PacketShape, mean_snr):
    """Energy per information bit for a single transmission attempt."""
    if shape.n_payload < 1:
        raise ValueError("payload must be positive")
    return shape.total / shape.n_payload * coeffs.a_coeff * mean_snr + coeffs.b_coeff


def attempts_untruncated(per: float) -> float:
    """Mean number of attempts ``1 / (1 - per)`` with unlimited retransmissions."""
    if per >= 1.0:
        return UNREACHABLE
    return 1.0 / (1.0 - per)


def attempts_truncated(per: float, max_retx: int) -> float:
    """Mean attempts ``(1 - per**(R+1)) / (1 - per)`` with at most ``R`` retransmissions."""
    if per >= 1.0:
        return UNREACHABLE
    return -math.expm1((max_retx + 1) * math.log(per)) / (1.0 - per) if per > 0 else 1.0


def _scaled(e0: float, attempts: float, what: str) -> float:
    if is_unreachable(attempts):
        log.warning("%s: average PER is numerically 1, cost is unreachable", what)
        return UNREACHABLE
    return attempts * e0


def expected_energy(
    coeffs: CostCoefficients,
    shape: PacketShape,
    scheme: ModulationScheme,
    mean_snr: float,
    refit: RefitConstants | None = None,
) -> float:
    """Energy per delivered bit with unlimited retransmissions."""
    per = avg_per_rayleigh(scheme, shape, mean_snr, refit)
    return _scaled(energy_per_bit_attempt(coeffs, shape, mean_snr), attempts_untruncated(per), scheme.name)


def truncated_energy(
    coeffs: CostCoefficients,
    shape: PacketShape,
    scheme: ModulationScheme,
    mean_snr: float,
    reliability: ReliabilityTarget,
    refit: RefitConstants | None = None,
) -> float:
    """Energy per information bit with at most ``max_retx`` retransmissions."""
    per = avg_per_rayleigh(scheme, shape, mean_snr, refit)
    attempts = attempts_truncated(per, reliability.max_retx)
    return _scaled(energy_per_bit_attempt(coeffs, shape, mean_snr), attempts, scheme.name)


def snr_max(scheme: ModulationScheme, link: LinkBudget) -> float:
    """Largest mean per-bit SNR reachable within the transmit power cap."""
    return link.max_tx_power / (
        link.bandwidth_hz * link.noise_psd * pathloss_gain(link) * scheme.bits_per_symbol
    )


def residual_per(per_attempt: float, reliability: ReliabilityTarget) -> float:
    """Probability a packet is still lost after every allowed attempt."""
    if not 0.0 <= per_attempt <= 1.0:
        raise ValueError("per-attempt PER must lie in [0, 1]")
    return per_attempt ** (reliability.max_retx + 1)
