"""Independent reference computations used to check the closed forms.

Adaptive quadrature of the fading-averaged PER and of the waterfall
threshold, a seeded Monte Carlo link simulator with truncated ARQ, and a
brute-force scalar minimizer.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import integrate
from scipy.special import gammaincc, gammaln

from .energy import (
    EnergyParams,
    LinkBudget,
    ReliabilityTarget,
    cost_coefficients,
    energy_per_bit_attempt,
)
from .modulation import BerLaw, ModulationScheme, ber_awgn
from .per import (
    PacketShape,
    RefitConstants,
    _n_bits,
    gumbel_constants,
    per_awgn_exact,
)

__all__ = [
    "QuadratureSpec",
    "QuadratureError",
    "McSpec",
    "McResult",
    "NonFiniteObjectiveError",
    "integrate_segments",
    "average_over_fading",
    "avg_per_numeric",
    "threshold_numeric",
    "simulate_link",
    "golden_section",
    "argmin_scan",
    "MC_BLOCK_SIZE",
]

#: Packets per independent random substream in :func:`simulate_link`.
MC_BLOCK_SIZE = 4096

_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class QuadratureSpec:
    rel_tol: float = 1e-9
    abs_tol: float = 1e-12
    max_subdivisions: int = 2000

    def __post_init__(self) -> None:
        if self.rel_tol <= 0 or self.abs_tol <= 0:
            raise ValueError("quadrature tolerances must be positive")
        if self.max_subdivisions < 1:
            raise ValueError("max_subdivisions must be positive")


class QuadratureError(ArithmeticError):
    """Quadrature did not reach the requested tolerance."""

    def __init__(self, message: str, value: float, error_estimate: float):
        super().__init__(f"{message} (value={value:.6g}, error estimate={error_estimate:.3g})")
        self.value = value
        self.error_estimate = error_estimate


class NonFiniteObjectiveError(ValueError):
    def __init__(self, x: float, value: float):
        super().__init__(f"objective returned {value!r} at x={x!r}")
        self.x = x
        self.value = value


def integrate_segments(
    func: Callable[[float], float],
    breakpoints: Sequence[float],
    spec: QuadratureSpec = QuadratureSpec(),
    tail_bound: float = 0.0,
) -> float:
    """Adaptive Gauss-Kronrod quadrature of ``func`` over consecutive segments.

    ``tail_bound`` is an analytic bound on whatever lies beyond the last
    breakpoint; it counts against the error budget.
    """
    pts = np.unique(np.asarray(breakpoints, dtype=float))
    total, err = 0.0, tail_bound
    for lo, hi in zip(pts[:-1], pts[1:]):
        value, abserr, info = integrate.quad(
            func,
            lo,
            hi,
            epsabs=spec.abs_tol / max(len(pts) - 1, 1),
            epsrel=spec.rel_tol,
            limit=spec.max_subdivisions,
            full_output=1,
        )[:3]
        total += value
        err += abserr
        if info["last"] >= spec.max_subdivisions:
            raise QuadratureError(f"subdivision limit hit on [{lo:g}, {hi:g}]", total, err)
    if err > max(spec.abs_tol, spec.rel_tol * abs(total)) * 10.0:
        raise QuadratureError("tolerance not met", total, err)
    return total


def _decay_rate(scheme: ModulationScheme) -> float:
    # b_e(g) <= c exp(-rate g); Q(x) <= exp(-x^2/2)/2 gives rate k/2 for the Q law
    return scheme.k_m if scheme.law is BerLaw.EXPONENTIAL else scheme.k_m / 2.0


def _waterfall_points(scheme: ModulationScheme, n: int) -> list[float]:
    with warnings.catch_warnings():
        # Only breakpoints are needed, so a location below zero is harmless here.
        warnings.simplefilter("ignore", RuntimeWarning)
        g = gumbel_constants(scheme, n, None if scheme.law is BerLaw.EXPONENTIAL else RefitConstants(1.0, 1.0))
    a, b = g.a_n, g.b_n
    return [max(a + s * b, 0.0) for s in (-6.0, -2.0, 0.0, 2.0, 6.0, 15.0, 30.0)]


def _gamma_logpdf(x, m: int, mean_snr: float):
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore"):
        logx = np.log(x)
    lp = m * math.log(m / mean_snr) + (m - 1) * logx - gammaln(m) - m * x / mean_snr
    if m == 1:
        lp = np.where(x >= 0, m * math.log(m / mean_snr) - m * x / mean_snr, -np.inf)
    return lp


def average_over_fading(
    f: Callable,
    mean_snr: float,
    m: int = 1,
    spec: QuadratureSpec = QuadratureSpec(),
    extra_points: Sequence[float] = (),
    tail_cap: Callable[[float], float] | None = None,
) -> float:
    """``int_0^inf f(g) p(g; mean_snr) dg`` for a Gamma(m, mean_snr/m) SNR density.

    The domain is cut at ``mean_snr (m + 40/sqrt(m))``, extended by doubling
    until the bound ``f(cut) * P(gamma > cut)`` on the neglected tail is below
    ``abs_tol``. ``f`` must be nonincreasing for that bound to hold; pass
    ``tail_cap`` when a tighter or safer bound is known.
    """
    if not mean_snr > 0:
        raise ValueError("mean SNR must be positive")
    if m < 1:
        raise ValueError("fading figure must be >= 1")
    cut = mean_snr * (m + 40.0 / math.sqrt(m))

    def tail(c):
        mass = float(gammaincc(m, m * c / mean_snr))
        bound = float(f(c)) * mass
        return min(bound, tail_cap(c)) if tail_cap else bound

    while tail(cut) > spec.abs_tol:
        cut *= 2.0
    pts = [0.0, cut] + [mean_snr * s for s in (0.01, 0.1, 1.0, m, 2.0 * m, 5.0 * m)]
    pts += [p for p in extra_points if 0.0 < p < cut]
    pts = [p for p in pts if p <= cut]

    def integrand(x):
        return float(f(x)) * math.exp(float(_gamma_logpdf(x, m, mean_snr)))

    return integrate_segments(integrand, pts, spec, tail_bound=tail(cut))


def avg_per_numeric(
    scheme: ModulationScheme,
    n_bits: int | PacketShape,
    mean_snr: float,
    m: int = 1,
    spec: QuadratureSpec = QuadratureSpec(),
) -> float:
    """Fading-averaged PER by adaptive quadrature of the exact AWGN PER."""
    n = _n_bits(n_bits)
    rate = _decay_rate(scheme)

    def tail_cap(c):
        # N c exp(-rate g) averaged over the Gamma tail beyond c
        s = 1.0 + rate * mean_snr / m
        return n * scheme.c_m * float(gammaincc(m, m * c * s / mean_snr)) / s**m

    value = average_over_fading(
        lambda g: per_awgn_exact(scheme, n, g),
        mean_snr,
        m,
        spec,
        extra_points=_waterfall_points(scheme, n),
        tail_cap=tail_cap,
    )
    return min(max(value, 0.0), 1.0)


def threshold_numeric(
    scheme: ModulationScheme,
    n_bits: int | PacketShape,
    m: int = 1,
    spec: QuadratureSpec = QuadratureSpec(),
    f: Callable | None = None,
) -> float:
    """Waterfall threshold ``int_0^inf g^(m-1) f(g) dg`` by quadrature.

    ``f`` defaults to the exact AWGN PER of ``scheme``. A custom ``f`` must
    be dominated by ``N c_m exp(-r g)`` with the scheme's decay rate ``r``,
    which is what bounds the truncated tail.
    """
    n = _n_bits(n_bits)
    if m < 1:
        raise ValueError("fading figure must be >= 1")
    rate = _decay_rate(scheme)
    f = f or (lambda g: per_awgn_exact(scheme, n, g))

    def tail(c):
        # int_c^inf g^(m-1) N c_m e^(-rate g) dg
        return n * scheme.c_m * math.exp(gammaln(m)) * float(gammaincc(m, rate * c)) / rate**m

    pts = _waterfall_points(scheme, n)
    cut = max(pts[-1], 1.0)
    while tail(cut) > spec.abs_tol:
        cut *= 1.5
    pts = [0.0] + [p for p in pts if p < cut] + [cut]
    return integrate_segments(lambda g: g ** (m - 1) * float(f(g)), pts, spec, tail_bound=tail(cut))


@dataclass(frozen=True)
class McSpec:
    seed: int = 0
    n_packets: int = 100_000
    m: int = 1

    def __post_init__(self) -> None:
        if self.n_packets < 1:
            raise ValueError("n_packets must be positive")
        if self.m < 1:
            raise ValueError("fading figure must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")


@dataclass(frozen=True)
class McResult:
    per_hat: float
    ci95_halfwidth: float
    mean_attempts: float
    mean_attempts_ci95: float
    mean_energy_per_bit: float
    energy_ci95_halfwidth: float
    n_packets: int
    n_attempts: int
    delivered_fraction: float


def _block_rng(seed: int, block: int) -> np.random.Generator:
    # Philox keyed by (seed, block): a block's draws do not depend on evaluation order.
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(block,))
    return np.random.Generator(np.random.Philox(ss))


def simulate_link(
    scheme: ModulationScheme,
    shape: PacketShape,
    mean_snr: float,
    link: LinkBudget,
    energy: EnergyParams,
    reliability: ReliabilityTarget,
    spec: McSpec = McSpec(),
    per_bit: bool = False,
    packet_error: Callable | None = None,
) -> McResult:
    """Monte Carlo of packet delivery over block fading with truncated ARQ.

    Each attempt draws an independent Gamma(m) SNR (sum of ``m`` exponential
    draws) and fails with the exact AWGN PER at that SNR. A packet is tried up
    to ``max_retx + 1`` times. With ``per_bit=True`` bit errors are drawn
    individually instead. ``packet_error`` overrides the PER as a function of
    instantaneous SNR.

    Random numbers come from Philox substreams keyed by ``(seed, block)``
    with :data:`MC_BLOCK_SIZE` packets per block.
    """
    if not mean_snr > 0:
        raise ValueError("mean SNR must be positive")
    n = shape.total
    limit = reliability.max_retx + 1
    e0 = energy_per_bit_attempt(cost_coefficients(scheme, link, energy), shape, mean_snr)

    attempts_per_packet = np.empty(spec.n_packets, dtype=np.int64)
    delivered = np.empty(spec.n_packets, dtype=bool)
    for block, start in enumerate(range(0, spec.n_packets, MC_BLOCK_SIZE)):
        size = min(MC_BLOCK_SIZE, spec.n_packets - start)
        rng = _block_rng(spec.seed, block)
        pending = np.ones(size, dtype=bool)
        tries = np.zeros(size, dtype=np.int64)
        for _ in range(limit):
            idx = np.flatnonzero(pending)
            if idx.size == 0:
                break
            gamma = rng.standard_exponential((idx.size, spec.m)).sum(axis=1) * (mean_snr / spec.m)
            u = rng.random(idx.size)
            if packet_error is not None:
                failed = u < np.asarray(packet_error(gamma), dtype=float)
            elif per_bit:
                failed = rng.binomial(n, ber_awgn(scheme, gamma)) > 0
            else:
                failed = u < per_awgn_exact(scheme, n, gamma)
            tries[idx] += 1
            pending[idx[~failed]] = False
        attempts_per_packet[start : start + size] = tries
        delivered[start : start + size] = ~pending

    total_attempts = int(attempts_per_packet.sum())
    failures = total_attempts - int(delivered.sum())
    per_hat = failures / total_attempts
    ci = 1.96 * math.sqrt(max(per_hat * (1.0 - per_hat), 0.0) / total_attempts)
    mean_att = float(attempts_per_packet.mean())
    sd_att = float(attempts_per_packet.std(ddof=1)) if spec.n_packets > 1 else 0.0
    att_ci = 1.96 * sd_att / math.sqrt(spec.n_packets)
    return McResult(
        per_hat=per_hat,
        ci95_halfwidth=ci,
        mean_attempts=mean_att,
        mean_attempts_ci95=att_ci,
        mean_energy_per_bit=mean_att * e0,
        energy_ci95_halfwidth=att_ci * e0,
        n_packets=spec.n_packets,
        n_attempts=total_attempts,
        delivered_fraction=float(delivered.mean()),
    )


def golden_section(
    objective: Callable[[float], float],
    lo: float,
    hi: float,
    rel_tol: float = 1e-9,
    max_iter: int = 500,
) -> tuple[float, float]:
    """Golden-section minimization of a unimodal function on ``[lo, hi]``."""
    a, b = float(lo), float(hi)
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = objective(c), objective(d)
    for _ in range(max_iter):
        if abs(b - a) <= rel_tol * max(abs(a), abs(b), 1e-300):
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = objective(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = objective(d)
    x = 0.5 * (a + b)
    fx = objective(x)
    best = min(((fx, x), (fc, c), (fd, d)))
    return best[1], best[0]


def argmin_scan(
    objective: Callable[[float], float],
    interval: tuple[float, float],
    points: int = 400,
    rel_tol: float = 1e-9,
) -> tuple[float, float]:
    """Brute-force minimizer: dense scan, then golden-section refinement.

    The scan is log-spaced when ``lo > 0`` and linear otherwise. Refinement
    runs on the bracket formed by the best grid point's neighbours.
    """
    lo, hi = map(float, interval)
    if not lo < hi:
        raise ValueError(f"empty interval [{lo}, {hi}]")
    if points < 3:
        raise ValueError("need at least 3 scan points")
    grid = np.geomspace(lo, hi, points) if lo > 0 else np.linspace(lo, hi, points)

    def checked(x: float) -> float:
        value = float(objective(x))
        if not math.isfinite(value):
            raise NonFiniteObjectiveError(x, value)
        return value

    values = np.array([checked(x) for x in grid])
    i = int(np.argmin(values))
    a, b = grid[max(i - 1, 0)], grid[min(i + 1, points - 1)]
    return golden_section(checked, a, b, rel_tol=rel_tol)
