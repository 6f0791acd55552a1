"""Packet error rate: exact AWGN PER, Gumbel asymptotics and fading averages.

The fading-averaged expressions rest on one idea: the AWGN PER curve of an
``N``-bit packet behaves like the survival function of a Gumbel law, so the
waterfall threshold ``omega_m = int gamma^(m-1) f(gamma) dgamma`` is close to
the ``m``-th Gumbel moment divided by ``m``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy.special import erfinv, zeta

from .modulation import BerLaw, ModulationScheme, ber_awgn

__all__ = [
    "EULER_GAMMA",
    "GUMBEL_VARIANCE_FACTOR",
    "GUMBEL_THIRD_CUMULANT_FACTOR",
    "PacketShape",
    "GumbelConstants",
    "RefitConstants",
    "FadingModel",
    "UnsupportedFadingError",
    "per_awgn_exact",
    "gumbel_constants",
    "per_awgn_gumbel",
    "gumbel_raw_moment",
    "waterfall_threshold",
    "effective_constants",
    "rayleigh_threshold",
    "avg_per_rayleigh",
    "avg_per_nakagami_bound",
    "bound_constant",
    "refit_constants",
]

EULER_GAMMA = float(np.euler_gamma)
#: Var = (pi^2/6) b^2 for a Gumbel law with scale b.
GUMBEL_VARIANCE_FACTOR = math.pi**2 / 6.0
#: Third cumulant = 2 zeta(3) b^3.
GUMBEL_THIRD_CUMULANT_FACTOR = 2.0 * float(zeta(3.0))


@dataclass(frozen=True)
class PacketShape:
    n_payload: int
    n_header: int = 0

    def __post_init__(self) -> None:
        if self.n_payload < 1:
            raise ValueError(f"payload must be at least one bit, got {self.n_payload}")
        if self.n_header < 0:
            raise ValueError(f"header length must be nonnegative, got {self.n_header}")

    @property
    def total(self) -> int:
        return self.n_payload + self.n_header


@dataclass(frozen=True)
class GumbelConstants:
    """Location ``a_n`` and scale ``b_n`` (SNR units) of the PER waterfall."""

    a_n: float
    b_n: float

    def __post_init__(self) -> None:
        if not self.b_n > 0.0:
            raise ValueError(f"Gumbel scale must be positive, got {self.b_n}")


@dataclass(frozen=True)
class RefitConstants:
    """Constants mapping Q-function BER schemes onto exponential-form Gumbel constants."""

    k1: float = 0.2114
    k2: float = 0.5598

    def __post_init__(self) -> None:
        if self.k1 <= 0.0 or self.k2 <= 0.0:
            raise ValueError("refit constants must be positive")


@dataclass(frozen=True)
class FadingModel:
    """Nakagami fading figure ``m`` (integer, ``m = 1`` is Rayleigh)."""

    m: int = 1

    def __post_init__(self) -> None:
        if int(self.m) != self.m or self.m < 1:
            raise ValueError(f"fading figure must be a positive integer, got {self.m}")


class UnsupportedFadingError(ValueError):
    """Closed-form thresholds exist only for m in {1, 2, 3}."""


Bits = Union[int, PacketShape]


def _n_bits(n: Bits) -> int:
    n = n.total if isinstance(n, PacketShape) else int(n)
    if n < 1:
        raise ValueError(f"packet must contain at least one bit, got {n}")
    return n


def _m(fading: FadingModel | int) -> int:
    return fading.m if isinstance(fading, FadingModel) else FadingModel(int(fading)).m


def per_awgn_exact(scheme: ModulationScheme, n_bits: Bits, snr):
    """Exact PER ``1 - (1 - b_e)^N`` of an uncoded packet in AWGN."""
    n = _n_bits(n_bits)
    ber = np.asarray(ber_awgn(scheme, snr), dtype=float)
    out = -np.expm1(n * np.log1p(-ber))
    return out if out.ndim else float(out)


def gumbel_constants(
    scheme: ModulationScheme, n_bits: Bits, refit: RefitConstants | None = None
) -> GumbelConstants:
    """Normalizing constants of the Gumbel approximation to the AWGN PER curve.

    Exponential-law schemes use ``(log(N c)/k, 1/k)`` and ignore ``refit``.
    Q-function schemes use the inverse-error-function pair when ``refit`` is
    ``None`` and the refitted exponential form ``(log(k1 N c)/(k2 k),
    1/(k2 k))`` otherwise.
    """
    n = _n_bits(n_bits)
    c, k = scheme.c_m, scheme.k_m
    if scheme.law is BerLaw.EXPONENTIAL:
        return GumbelConstants(math.log(n * c) / k, 1.0 / k)
    if refit is not None:
        if n * c * refit.k1 <= 1.0:
            warnings.warn(
                f"{scheme.name} N={n}: k1*N*c_m <= 1 puts the waterfall location at or "
                "below zero; the refitted constants are outside their fit range",
                RuntimeWarning,
                stacklevel=2,
            )
        kk = refit.k2 * k
        return GumbelConstants(math.log(refit.k1 * n * c) / kk, 1.0 / kk)
    if n * c <= 2.0:
        raise ValueError(
            f"{scheme.name} N={n}: N*c_m = {n * c:g} <= 2 puts erfinv(1 - 2/(N c_m)) "
            "outside (-1, 1); use refitted constants"
        )
    a = 2.0 / k * float(erfinv(1.0 - 2.0 / (n * c))) ** 2
    b = 2.0 / k * float(erfinv(1.0 - 2.0 / (n * c * math.e))) ** 2 - a
    return GumbelConstants(a, b)


def per_awgn_gumbel(constants: GumbelConstants, snr):
    """Gumbel-law approximation ``1 - exp(-exp(-(snr - a)/b))`` to the AWGN PER."""
    z = (np.asarray(snr, dtype=float) - constants.a_n) / constants.b_n
    with np.errstate(over="ignore"):  # exp(-z) -> inf far below the waterfall gives PER 1
        out = -np.expm1(-np.exp(-z))
    return out if out.ndim else float(out)


def gumbel_raw_moment(constants: GumbelConstants, order: int) -> float:
    """Raw moment ``E[X^order]`` of a Gumbel (maximum) law, ``order`` in 1..3.

    Built from the cumulants ``a + gamma_e b``, ``(pi^2/6) b^2`` and
    ``2 zeta(3) b^3``.
    """
    a, b = constants.a_n, constants.b_n
    k1 = a + EULER_GAMMA * b
    k2 = GUMBEL_VARIANCE_FACTOR * b * b
    k3 = GUMBEL_THIRD_CUMULANT_FACTOR * b**3
    if order == 1:
        return k1
    if order == 2:
        return k1 * k1 + k2
    if order == 3:
        return k1**3 + 3.0 * k1 * k2 + k3
    raise UnsupportedFadingError(f"moment order {order} not available in closed form")


def waterfall_threshold(constants: GumbelConstants, fading: FadingModel | int = 1) -> float:
    """Closed-form waterfall threshold ``omega_m ~ E[X^m] / m`` for ``m`` in {1, 2, 3}.

    For ``m = 1`` this is ``a_n + gamma_e b_n``. Larger ``m`` must go through
    :func:`linkopt.oracle.threshold_numeric`.
    """
    m = _m(fading)
    if m not in (1, 2, 3):
        raise UnsupportedFadingError(
            f"no closed-form threshold for m={m}; integrate numerically with "
            "linkopt.oracle.threshold_numeric"
        )
    return gumbel_raw_moment(constants, m) / m


def effective_constants(
    scheme: ModulationScheme, refit: RefitConstants | None
) -> tuple[float, float]:
    """Effective ``(c, k)`` pair entering the elementary Rayleigh PER.

    Q-function schemes get ``(k1 c_m, k2 k_m)``; exponential-law schemes keep
    their own constants.
    """
    if scheme.law is BerLaw.EXPONENTIAL:
        return scheme.c_m, scheme.k_m
    refit = refit or RefitConstants()
    return refit.k1 * scheme.c_m, refit.k2 * scheme.k_m


def rayleigh_threshold(
    scheme: ModulationScheme, n_bits: Bits | float, refit: RefitConstants | None = None
) -> float:
    """``omega_0 = (gamma_e + log(c' N)) / k'`` with effective constants.

    ``n_bits`` may be real-valued here; the optimizer iterates on continuous
    payload sizes.
    """
    n = n_bits.total if isinstance(n_bits, PacketShape) else float(n_bits)
    c, k = effective_constants(scheme, refit)
    return (EULER_GAMMA + math.log(c * n)) / k


def avg_per_rayleigh(
    scheme: ModulationScheme,
    shape: Bits | float,
    mean_snr,
    refit: RefitConstants | None = None,
):
    """Elementary-function average PER in Rayleigh block fading.

    Evaluates ``1 - (N c')^(-1/(k' snr)) exp(-gamma_e/(k' snr))`` in the
    equivalent form ``-expm1(-omega_0 / snr)``, which stays accurate when the
    PER is far below one.
    """
    mean_snr = np.asarray(mean_snr, dtype=float)
    if np.any(~(mean_snr > 0)):
        raise ValueError("mean SNR must be positive")
    omega = rayleigh_threshold(scheme, shape, refit)
    out = -np.expm1(-omega / mean_snr)
    return out if out.ndim else float(out)


def _nakagami_bound_formula(omega: float, b: float, m: int, mean_snr):
    scale = m ** (m - 1) * b / (mean_snr ** (m - 1) * math.gamma(m))
    return scale * -np.expm1(-m * omega / (mean_snr * b))


def avg_per_nakagami_bound(
    scheme: ModulationScheme,
    shape: Bits,
    mean_snr,
    fading: FadingModel | int = 1,
    refit: RefitConstants | None = None,
):
    """Average-PER bound in Nakagami-``m`` fading with a closed-form threshold.

    ``refit=None`` uses the inverse-error-function constants for Q-function
    schemes. The result is clipped to ``[0, 1]``.
    """
    m = _m(fading)
    n = _n_bits(shape)
    mean_snr = np.asarray(mean_snr, dtype=float)
    if np.any(~(mean_snr > 0)):
        raise ValueError("mean SNR must be positive")
    omega = waterfall_threshold(gumbel_constants(scheme, n, refit), m)
    b = bound_constant(scheme, n, m)
    out = np.clip(_nakagami_bound_formula(omega, b, m, mean_snr), 0.0, 1.0)
    return out if out.ndim else float(out)


def bound_constant(scheme: ModulationScheme, n_bits: Bits, fading: FadingModel | int = 1) -> float:
    """Smallest ``B`` with ``gamma^(m-1) f(gamma) <= B`` for all ``gamma >= 0``.

    ``m = 1`` gives ``B = 1``. Otherwise the supremum comes from a
    golden-section search on ``[0, a + 40 b]`` started at the Gumbel location,
    checked against a 1000-point grid.
    """
    m = _m(fading)
    if m not in (1, 2, 3):
        raise UnsupportedFadingError(f"bound constant only defined here for m in 1..3, got {m}")
    if m == 1:
        return 1.0
    from .oracle import golden_section

    n = _n_bits(n_bits)
    g = gumbel_constants(scheme, n, None if scheme.law is BerLaw.EXPONENTIAL else RefitConstants())
    hi = max(g.a_n, 1.0) + 40.0 * g.b_n

    def weighted(x):
        return np.asarray(x, dtype=float) ** (m - 1) * per_awgn_exact(scheme, n, x)

    grid = np.linspace(0.0, hi, 1000)
    values = weighted(grid)
    i = int(np.argmax(values))
    lo_b, hi_b = grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]
    x_best, neg = golden_section(lambda x: -float(weighted(x)), lo_b, hi_b, rel_tol=1e-12)
    best = max(-neg, float(values[i]))
    if not np.isfinite(best) or best <= 0.0:
        raise ArithmeticError(f"bound-constant maximization failed for {scheme.name}, N={n}, m={m}")
    # Guard against residual search error so the side condition holds on the grid.
    best *= 1.0 + 1e-12
    if np.any(values > best):
        raise ArithmeticError(f"bound constant {best} violated on verification grid")
    return best


def refit_constants(
    scheme: ModulationScheme,
    n_range: tuple[int, int] = (32, 1024),
    points: int = 16,
) -> RefitConstants:
    """Fit ``(k1, k2)`` so the closed-form Rayleigh threshold matches quadrature.

    Minimizes the summed squared relative error between
    ``(log(k1 N c) + gamma_e) / (k2 k)`` and the numerically integrated
    ``omega_0`` over a log-spaced grid of packet lengths. Writing the model as
    ``alpha (log(N c) + gamma_e) + beta`` with ``alpha = 1/(k2 k)`` and
    ``beta = alpha log k1`` turns this into a weighted linear least-squares
    problem, so the global minimizer is found directly.
    """
    if scheme.law is not BerLaw.QFUNCTION:
        raise ValueError(f"{scheme.name}: refit applies only to Q-function BER schemes")
    lo, hi = n_range
    if lo < 1 or hi < lo:
        raise ValueError(f"invalid packet-length range {n_range}")
    from .oracle import threshold_numeric

    ns = np.unique(np.round(np.geomspace(lo, hi, points)).astype(int)) if hi > lo else np.array([lo])
    ref = np.array([threshold_numeric(scheme, int(n), 1) for n in ns])
    x = np.log(ns * scheme.c_m) + EULER_GAMMA
    design = np.column_stack([x, np.ones_like(x)]) / ref[:, None]
    (alpha, beta), *_ = np.linalg.lstsq(design, np.ones_like(ref), rcond=None)
    if not alpha > 0.0:
        raise ArithmeticError(f"refit produced non-positive slope {alpha}")
    return RefitConstants(k1=float(math.exp(beta / alpha)), k2=float(1.0 / (alpha * scheme.k_m)))
