"""Energy-optimal operating points under reliability and power limits.

Closed forms for the optimal SNR and payload come from setting the
derivative of the unlimited-retransmission energy to zero under the
elementary Rayleigh PER. :func:`joint_optimize` alternates the two per
(scheme, retransmission limit) combination and keeps the cheapest feasible
result.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .energy import (
    CostCoefficients,
    EnergyParams,
    LinkBudget,
    OperatingPoint,
    ReliabilityTarget,
    cost_coefficients,
    snr_max,
    truncated_energy,
)
from .modulation import ModulationScheme
from .per import (
    EULER_GAMMA,
    PacketShape,
    RefitConstants,
    avg_per_rayleigh,
    effective_constants,
    rayleigh_threshold,
)

__all__ = [
    "InfeasiblePayloadError",
    "SnrSolution",
    "TraceEntry",
    "ComboResult",
    "JointResult",
    "optimal_snr_unconstrained",
    "min_snr",
    "required_snr",
    "optimal_payload",
    "max_payload",
    "joint_optimize",
    "DEFAULT_DELTA",
    "DEFAULT_MAX_ITER",
]

DEFAULT_DELTA = 1e-3
DEFAULT_MAX_ITER = 50


class InfeasiblePayloadError(ValueError):
    """No positive payload meets the PER budget at the given SNR."""

    def __init__(self, value: float):
        super().__init__(f"maximum payload {value:.6g} bits is not positive")
        self.value = value


@dataclass(frozen=True)
class SnrSolution:
    unconstrained: float
    min_required: float
    max_allowed: float
    required: float | None
    feasible: bool


@dataclass(frozen=True)
class TraceEntry:
    scheme: str
    max_retx: int
    iteration: int
    mean_snr: float
    n_payload: float
    energy: float


@dataclass
class ComboResult:
    scheme: ModulationScheme
    max_retx: int
    status: str  # converged | infeasible | infeasible-payload | not-converged
    iterations: int
    point: OperatingPoint | None = None

    @property
    def feasible(self) -> bool:
        return self.status == "converged" and self.point is not None


@dataclass
class JointResult:
    best: OperatingPoint | None
    iterations_used: int
    trace: list[TraceEntry] = field(default_factory=list)
    infeasible_combos: list[tuple[str, int]] = field(default_factory=list)
    combos: list[ComboResult] = field(default_factory=list)

    @property
    def feasible(self) -> bool:
        return self.best is not None


def _snr_star(omega: float, ratio: float, n_payload: float, n_header: float) -> float:
    return omega / 2.0 + math.sqrt(omega * (omega / 4.0 + ratio * n_payload / (n_header + n_payload)))


def optimal_snr_unconstrained(
    coeffs: CostCoefficients,
    shape: PacketShape,
    scheme: ModulationScheme,
    refit: RefitConstants | None = None,
) -> float:
    """Mean SNR minimizing energy per delivered bit with unlimited retransmissions."""
    omega = rayleigh_threshold(scheme, shape, refit)
    if not omega > 0:
        raise ValueError(f"waterfall threshold must be positive, got {omega}")
    return _snr_star(omega, coeffs.ratio, shape.n_payload, shape.n_header)


def _min_snr(scheme, n_total: float, eps_req: float, refit) -> float:
    c, k = effective_constants(scheme, refit)
    return -(EULER_GAMMA + math.log(c * n_total)) / (k * math.log1p(-eps_req))


def min_snr(
    scheme: ModulationScheme,
    shape: PacketShape,
    reliability: ReliabilityTarget,
    refit: RefitConstants | None = None,
) -> float:
    """Smallest mean SNR whose average PER meets the per-attempt budget."""
    return _min_snr(scheme, shape.total, reliability.eps_req, refit)


def required_snr(
    coeffs: CostCoefficients,
    scheme: ModulationScheme,
    shape: PacketShape,
    reliability: ReliabilityTarget,
    link: LinkBudget,
    refit: RefitConstants | None = None,
) -> SnrSolution:
    """Project the unconstrained optimum onto ``[snr_min, snr_max]``.

    When ``snr_min > snr_max`` the target cannot be met and ``required`` is
    ``None``.
    """
    star = optimal_snr_unconstrained(coeffs, shape, scheme, refit)
    lo = min_snr(scheme, shape, reliability, refit)
    hi = snr_max(scheme, link)
    if lo > hi:
        return SnrSolution(star, lo, hi, None, False)
    return SnrSolution(star, lo, hi, min(max(star, lo), hi), True)


def _payload_star(k_eff: float, ratio: float, n_header: float, snr: float) -> float:
    root = math.sqrt(k_eff**2 * snr**2 + 2.0 * k_eff * snr + 4.0 * ratio * k_eff + 1.0)
    return n_header * snr * (k_eff * snr - 1.0 + root) / (2.0 * (snr + ratio))


def optimal_payload(
    coeffs: CostCoefficients,
    n_header: int,
    scheme: ModulationScheme,
    mean_snr: float,
    refit: RefitConstants | None = None,
) -> float:
    """Real-valued payload minimizing energy per delivered bit at ``mean_snr``.

    Positive root of ``(snr + B/A) n^2 + n_h snr (1 - k' snr) n
    - k' snr^2 n_h^2 = 0``, with ``k'`` the effective (refitted) constant.
    """
    if not mean_snr > 0:
        raise ValueError("mean SNR must be positive")
    if n_header < 1:
        raise ValueError("header length must be at least one bit")
    _, k = effective_constants(scheme, refit)
    return _payload_star(k, coeffs.ratio, n_header, mean_snr)


def _max_payload(scheme, n_header: float, snr: float, eps_req: float, refit) -> float:
    c, k = effective_constants(scheme, refit)
    log_total = -(EULER_GAMMA + snr * k * math.log1p(-eps_req)) - math.log(c)
    if log_total > 700.0:
        return math.inf
    return -n_header + math.exp(log_total)


def max_payload(
    scheme: ModulationScheme,
    n_header: int,
    min_snr_value: float,
    reliability: ReliabilityTarget,
    refit: RefitConstants | None = None,
) -> float:
    """Largest payload whose average PER at ``min_snr_value`` meets the budget.

    Raises :class:`InfeasiblePayloadError` when that payload is not positive.
    """
    if not min_snr_value > 0:
        raise ValueError("SNR must be positive")
    value = _max_payload(scheme, n_header, min_snr_value, reliability.eps_req, refit)
    if value <= 0:
        raise InfeasiblePayloadError(value)
    return value


def _operating_point(scheme, coeffs, n_payload, n_header, snr, reliability, refit) -> OperatingPoint:
    shape = PacketShape(n_payload, n_header)
    return OperatingPoint(
        mean_snr=snr,
        shape=shape,
        scheme=scheme,
        reliability=reliability,
        predicted_per=avg_per_rayleigh(scheme, shape, snr, refit),
        energy_per_bit=truncated_energy(coeffs, shape, scheme, snr, reliability, refit),
    )


def _secant_step(y0: float, g0: float, y1: float, g1: float, lo: float, hi: float) -> float | None:
    """Secant root step for ``g(y) = 0``; ``None`` when it leaves ``[lo, hi]``."""
    if g1 == g0:
        return None
    y = y1 - g1 * (y1 - y0) / (g1 - g0)
    if not math.isfinite(y) or not lo <= y <= hi:
        return None
    return y


def _optimize_combo(
    scheme: ModulationScheme,
    link: LinkBudget,
    energy: EnergyParams,
    reliability: ReliabilityTarget,
    n_header: int,
    delta: float,
    max_iter: int,
    init_payload: float,
    refit: RefitConstants | None,
    trace: list[TraceEntry],
) -> ComboResult:
    coeffs = cost_coefficients(scheme, link, energy)
    ratio = coeffs.ratio
    eps_req = reliability.eps_req
    _, k_eff = effective_constants(scheme, refit)
    hi = snr_max(scheme, link)
    # Largest payload that still meets the PER budget at the highest reachable SNR.
    cap = _max_payload(scheme, n_header, hi, eps_req, refit)
    if cap < 1.0:
        return ComboResult(scheme, reliability.max_retx, "infeasible", 0)
    log_cap = math.log(cap)

    n_p = min(float(init_payload), cap)
    previous = 0.0
    last: tuple[float, float] | None = None  # (log n_p, residual) of the previous iterate
    status, iterations = "not-converged", 0

    for iteration in range(1, max_iter + 1):
        iterations = iteration
        n_total = n_p + n_header
        star = _snr_star(rayleigh_threshold(scheme, n_total, refit), ratio, n_p, n_header)
        lo = _min_snr(scheme, n_total, eps_req, refit)
        snr = min(max(star, lo), hi)
        proposed = max(min(_payload_star(k_eff, ratio, n_header, snr), cap), 1.0)
        # The plain update n <- proposed converges only linearly; a secant step on
        # log(proposed) - log(n) reaches the same fixed point in fewer passes.
        y, g = math.log(n_p), math.log(proposed) - math.log(n_p)
        step = _secant_step(*last, y, g, 0.0, log_cap) if last is not None else None
        last = (y, g)
        n_p = math.exp(step) if step is not None else proposed
        e = truncated_energy(coeffs, PacketShape(max(int(n_p), 1), n_header), scheme, snr, reliability, refit)
        trace.append(TraceEntry(scheme.name, reliability.max_retx, iteration, snr, n_p, e))
        if abs(snr - previous) <= delta:
            status = "converged"
            break
        previous = snr

    if status != "converged":
        return ComboResult(scheme, reliability.max_retx, status, iterations)

    # Report an integer payload and the SNR re-clamped for it, so the
    # reliability target holds exactly at the reported point.
    n_int = max(int(math.floor(n_p)), 1)
    shape = PacketShape(n_int, n_header)
    solution = required_snr(coeffs, scheme, shape, reliability, link, refit)
    if not solution.feasible:
        return ComboResult(scheme, reliability.max_retx, "infeasible", iterations)
    point = _operating_point(scheme, coeffs, n_int, n_header, solution.required, reliability, refit)
    return ComboResult(scheme, reliability.max_retx, status, iterations, point)


def joint_optimize(
    schemes: list[ModulationScheme],
    link: LinkBudget,
    energy: EnergyParams,
    epsilon: float,
    max_retx_limit: int,
    n_header: int,
    delta: float = DEFAULT_DELTA,
    max_iter: int = DEFAULT_MAX_ITER,
    init_payload: float | None = None,
    refit: RefitConstants | None = None,
) -> JointResult:
    """Search modulation and retransmission limit, iterating SNR and payload.

    For each scheme and each limit ``1..max_retx_limit`` the optimal SNR is
    recomputed for the current payload, clamped to the reliability and power
    limits, and the payload is then re-optimized at that SNR and capped at the
    largest size that can still meet the PER budget. Iteration stops when the
    clamped SNR moves by at most ``delta``. Hitting ``max_iter`` marks the
    combination as not converged.

    Among feasible, converged combinations the lowest truncated-ARQ energy
    wins; ties go to the lower limit, then the smaller constellation, then the
    lower SNR. ``best`` is ``None`` when nothing is feasible.
    """
    if not schemes:
        raise ValueError("need at least one modulation scheme")
    if max_retx_limit < 1:
        raise ValueError("retransmission limit must be at least 1")
    if not delta > 0:
        raise ValueError("delta must be positive")
    if n_header < 1:
        raise ValueError("header length must be at least one bit")
    init = float(n_header if init_payload is None else init_payload)
    if not init >= 1.0:
        raise ValueError("initial payload must be at least one bit")

    result = JointResult(best=None, iterations_used=0)
    for scheme in schemes:
        for retx in range(1, max_retx_limit + 1):
            reliability = ReliabilityTarget(epsilon, retx)
            combo = _optimize_combo(
                scheme, link, energy, reliability, n_header, delta, max_iter, init, refit, result.trace
            )
            result.combos.append(combo)
            result.iterations_used += combo.iterations
            if combo.status in ("infeasible", "infeasible-payload"):
                result.infeasible_combos.append((scheme.name, retx))

    feasible = [c.point for c in result.combos if c.feasible]
    if feasible:
        result.best = min(
            feasible,
            key=lambda p: (p.energy_per_bit, p.reliability.max_retx, p.scheme.constellation_size, p.mean_snr),
        )
    return result
