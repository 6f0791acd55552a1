"""Row builders behind the command-line subcommands.

Everything here returns plain Python values; formatting and file output
belong to :mod:`linkopt.cli`. Column lists are part of the versioned output
schema documented in ``docs/output_schema.md``.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Any, Callable, Iterable, Sequence

import numpy as np

from .config import RunConfig
from .energy import (
    cost_coefficients,
    expected_energy,
    is_unreachable,
    linear_to_db,
    truncated_energy,
)
from .modulation import BerLaw, ModulationScheme, get_scheme
from .optimizer import (
    joint_optimize,
    optimal_payload,
    min_snr,
    optimal_snr_unconstrained,
    required_snr,
)
from .oracle import (
    McSpec,
    QuadratureError,
    argmin_scan,
    average_over_fading,
    avg_per_numeric,
    simulate_link,
    threshold_numeric,
)
from .per import (
    EULER_GAMMA,
    PacketShape,
    avg_per_rayleigh,
    bound_constant,
    gumbel_constants,
    rayleigh_threshold,
    refit_constants,
    waterfall_threshold,
)

SCHEMA_VERSION = 1

INFEASIBLE = "infeasible"
ERROR = "error"
NOT_APPLICABLE = "n/a"

PER_ERROR_COLUMNS = (
    "scheme",
    "n_bits",
    "mean_snr",
    "mean_snr_db",
    "per_numeric",
    "per_upper_bound",
    "per_approx1",
    "per_approx2",
    "per_baseline",
    "re_upper_bound",
    "re_approx1",
    "re_approx2",
    "re_baseline",
)

SWEEP_COLUMNS = (
    "sweep_value",
    "distance_m",
    "scheme",
    "constellation_size",
    "n_payload",
    "n_header",
    "epsilon",
    "max_retx",
    "snr_star",
    "snr_star_db",
    "snr_min",
    "snr_min_db",
    "snr_max",
    "snr_max_db",
    "snr_req",
    "snr_req_db",
    "feasible",
    "n_p_star",
    "per_avg",
    "energy_trunc_j_per_bit",
    "energy_unlimited_at_snr_max_j_per_bit",
)

SWEEP_QUADRATURE_COLUMNS = ("per_numeric",)
SWEEP_MC_COLUMNS = ("mc_per", "mc_per_ci95", "mc_energy_j_per_bit", "mc_energy_ci95")

JOINT_COLUMNS = (
    "distance_m",
    "feasible",
    "scheme",
    "constellation_size",
    "max_retx",
    "n_payload",
    "mean_snr",
    "mean_snr_db",
    "energy_j_per_bit",
    "per_avg",
    "residual_per",
    "iterations",
)

TRACE_COLUMNS = ("distance_m", "scheme", "max_retx", "iteration", "mean_snr", "mean_snr_db", "n_payload", "energy_j_per_bit")

#: Columns holding energies; the CLI prints these in scientific notation.
ENERGY_COLUMNS = frozenset(
    {
        "energy_trunc_j_per_bit",
        "energy_unlimited_at_snr_max_j_per_bit",
        "mc_energy_j_per_bit",
        "mc_energy_ci95",
        "energy_j_per_bit",
    }
)

#: Largest tolerated gap between the Approx-2 and upper-bound relative errors.
APPROX2_ENVELOPE = 0.035


def _db(x: float) -> float:
    return float(linear_to_db(x))


def _parallel_map(func: Callable, items: Sequence, jobs: int) -> list:
    # map() keeps input order, so rows come out in sweep order whatever finishes first.
    if jobs <= 1 or len(items) < 2:
        return [func(item) for item in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(func, items))


# --- relative-error report ---------------------------------------------------


def baseline_threshold(scheme: ModulationScheme, n_bits: int) -> float:
    """Rayleigh threshold from a log-linear surrogate of the BER curve.

    Q-function schemes replace ``Q(x)`` by its Chernoff bound
    ``exp(-x^2/2)/2``, which makes ``log b_e`` linear in SNR with slope
    ``-k/2``. Exponential-law schemes are already log-linear.
    """
    if scheme.law is BerLaw.EXPONENTIAL:
        return (math.log(n_bits * scheme.c_m) + EULER_GAMMA) / scheme.k_m
    return 2.0 * (math.log(n_bits * scheme.c_m / 2.0) + EULER_GAMMA) / scheme.k_m


def _rel(approx: float, exact: float) -> float:
    return (approx - exact) / exact


def per_error_rows(cfg: RunConfig, snr_grid: Iterable[float] | None = None) -> tuple[list[dict], bool]:
    """Relative errors of the closed-form average PERs against quadrature.

    Returns the rows and whether any row hit a quadrature failure.
    ``snr_grid`` defaults to the configured sweep, which must be an SNR sweep.
    """
    grid = list(cfg.sweep.values if snr_grid is None else snr_grid)
    rows: list[dict] = []
    failed = False
    for scheme in cfg.schemes:
        for n in cfg.per_error_n_bits:
            omega_num = threshold_numeric(scheme, n)
            omega_base = baseline_threshold(scheme, n)
            try:
                omega_a1 = waterfall_threshold(gumbel_constants(scheme, n, None), 1)
            except ValueError:
                omega_a1 = None  # inverse-error-function constants undefined for N c <= 2
            for snr in grid:
                if not snr > 0:
                    continue
                ub = -math.expm1(-omega_num / snr)
                a1 = None if omega_a1 is None else -math.expm1(-omega_a1 / snr)
                a2 = float(avg_per_rayleigh(scheme, n, snr, cfg.refit))
                base = -math.expm1(-omega_base / snr)
                row: dict[str, Any] = {
                    "scheme": scheme.name,
                    "n_bits": n,
                    "mean_snr": snr,
                    "mean_snr_db": _db(snr),
                    "per_upper_bound": ub,
                    "per_approx1": NOT_APPLICABLE if a1 is None else a1,
                    "per_approx2": a2,
                    "per_baseline": base,
                }
                try:
                    exact = avg_per_numeric(scheme, n, snr)
                except QuadratureError:
                    failed = True
                    exact = None
                if exact is None or exact <= 0.0:
                    token = ERROR if exact is None else NOT_APPLICABLE
                    row["per_numeric"] = token if exact is None else exact
                    for key in ("re_upper_bound", "re_approx1", "re_approx2", "re_baseline"):
                        row[key] = token
                else:
                    row["per_numeric"] = exact
                    row["re_upper_bound"] = _rel(ub, exact)
                    row["re_approx1"] = NOT_APPLICABLE if a1 is None else _rel(a1, exact)
                    row["re_approx2"] = _rel(a2, exact)
                    row["re_baseline"] = _rel(base, exact)
                rows.append({k: row[k] for k in PER_ERROR_COLUMNS})
    return rows, failed


# --- sweeps ------------------------------------------------------------------


def sweep_columns(cfg: RunConfig) -> tuple[str, ...]:
    cols = SWEEP_COLUMNS
    if cfg.oracle.quadrature:
        cols += SWEEP_QUADRATURE_COLUMNS
    if cfg.oracle.monte_carlo:
        cols += SWEEP_MC_COLUMNS
    return cols


def _sweep_scheme_row(cfg: RunConfig, value: float, scheme: ModulationScheme) -> tuple[dict, bool]:
    variable = cfg.sweep.variable
    link = cfg.link.at(value) if variable == "distance" else cfg.link
    shape = PacketShape(int(value), cfg.shape.n_header) if variable == "payload" else cfg.shape
    reliability = cfg.reliability
    refit = cfg.refit
    coeffs = cost_coefficients(scheme, link, cfg.energy)
    sol = required_snr(coeffs, scheme, shape, reliability, link, refit)

    if variable == "snr":
        req = value if sol.min_required <= value <= sol.max_allowed else None
    else:
        req = sol.required

    row: dict[str, Any] = {
        "sweep_value": value,
        "distance_m": link.distance_m,
        "scheme": scheme.name,
        "constellation_size": scheme.constellation_size,
        "n_payload": shape.n_payload,
        "n_header": shape.n_header,
        "epsilon": reliability.epsilon,
        "max_retx": reliability.max_retx,
        "snr_star": sol.unconstrained,
        "snr_star_db": _db(sol.unconstrained),
        "snr_min": sol.min_required,
        "snr_min_db": _db(sol.min_required),
        "snr_max": sol.max_allowed,
        "snr_max_db": _db(sol.max_allowed),
        "feasible": req is not None,
    }
    failed = False
    if req is None:
        for key in ("snr_req", "snr_req_db", "n_p_star", "per_avg", "energy_trunc_j_per_bit"):
            row[key] = INFEASIBLE
        e_unl = expected_energy(coeffs, shape, scheme, sol.max_allowed, refit)
        row["energy_unlimited_at_snr_max_j_per_bit"] = INFEASIBLE if is_unreachable(e_unl) else e_unl
        for key in SWEEP_QUADRATURE_COLUMNS + SWEEP_MC_COLUMNS:
            row[key] = INFEASIBLE
    else:
        row["snr_req"] = req
        row["snr_req_db"] = _db(req)
        row["n_p_star"] = optimal_payload(coeffs, shape.n_header or 1, scheme, req, refit)
        row["per_avg"] = float(avg_per_rayleigh(scheme, shape, req, refit))
        e = truncated_energy(coeffs, shape, scheme, req, reliability, refit)
        row["energy_trunc_j_per_bit"] = INFEASIBLE if is_unreachable(e) else e
        row["energy_unlimited_at_snr_max_j_per_bit"] = ""
        if cfg.oracle.quadrature:
            try:
                row["per_numeric"] = avg_per_numeric(scheme, shape, req)
            except QuadratureError:
                row["per_numeric"] = ERROR
                failed = True
        if cfg.oracle.monte_carlo:
            mc = simulate_link(
                scheme,
                shape,
                req,
                link,
                cfg.energy,
                reliability,
                McSpec(seed=cfg.oracle.seed, n_packets=cfg.oracle.n_packets),
            )
            row["mc_per"] = mc.per_hat
            row["mc_per_ci95"] = mc.ci95_halfwidth
            row["mc_energy_j_per_bit"] = mc.mean_energy_per_bit
            row["mc_energy_ci95"] = mc.energy_ci95_halfwidth
    return {k: row[k] for k in sweep_columns(cfg)}, failed


def _sweep_point(args: tuple[RunConfig, float]) -> tuple[list[dict], bool]:
    cfg, value = args
    rows, failed = [], False
    for scheme in cfg.schemes:
        row, bad = _sweep_scheme_row(cfg, value, scheme)
        rows.append(row)
        failed |= bad
    return rows, failed


def sweep_rows(cfg: RunConfig, jobs: int = 1) -> tuple[list[dict], bool]:
    """One row per sweep point per scheme; also reports quadrature failures."""
    parts = _parallel_map(_sweep_point, [(cfg, v) for v in cfg.sweep.values], jobs)
    rows = [r for part, _ in parts for r in part]
    return rows, any(bad for _, bad in parts)


# --- joint optimization ------------------------------------------------------


def _joint_point(args: tuple[RunConfig, float]):
    cfg, d = args
    return joint_optimize(
        list(cfg.schemes),
        cfg.link.at(d),
        cfg.energy,
        cfg.reliability.epsilon,
        max(cfg.reliability.max_retx, 1),
        cfg.shape.n_header,
        delta=cfg.joint_delta,
        max_iter=cfg.joint_max_iter,
        refit=cfg.refit,
    )


def joint_rows(cfg: RunConfig, jobs: int = 1) -> tuple[list[dict], list[dict], dict[str, list]]:
    """Best operating point per distance, the iteration trace and aligned series.

    The configured sweep must be a distance sweep.
    """
    if cfg.sweep.variable != "distance":
        raise ValueError("the joint optimization sweeps distance only")
    distances = list(cfg.sweep.values)
    results = _parallel_map(_joint_point, [(cfg, d) for d in distances], jobs)
    rows, trace = [], []
    series: dict[str, list] = {k: [] for k in ("distance_m", "energy_j_per_bit", "n_payload", "mean_snr_db", "max_retx", "scheme")}
    for d, res in zip(distances, results):
        for t in res.trace:
            trace.append(
                {
                    "distance_m": d,
                    "scheme": t.scheme,
                    "max_retx": t.max_retx,
                    "iteration": t.iteration,
                    "mean_snr": t.mean_snr,
                    "mean_snr_db": _db(t.mean_snr),
                    "n_payload": t.n_payload,
                    "energy_j_per_bit": INFEASIBLE if is_unreachable(t.energy) else t.energy,
                }
            )
        best = res.best
        if best is None:
            row = {k: INFEASIBLE for k in JOINT_COLUMNS}
            row.update(distance_m=d, feasible=False, iterations=res.iterations_used)
        else:
            row = {
                "distance_m": d,
                "feasible": True,
                "scheme": best.scheme.name,
                "constellation_size": best.scheme.constellation_size,
                "max_retx": best.reliability.max_retx,
                "n_payload": best.shape.n_payload,
                "mean_snr": best.mean_snr,
                "mean_snr_db": best.mean_snr_db,
                "energy_j_per_bit": best.energy_per_bit,
                "per_avg": best.predicted_per,
                "residual_per": best.predicted_per ** (best.reliability.max_retx + 1),
                "iterations": res.iterations_used,
            }
        rows.append(row)
        for key in series:
            series[key].append(row[key])
    return rows, trace, series


# --- validation --------------------------------------------------------------


@dataclass(frozen=True)
class CheckResult:
    name: str
    status: str  # pass | fail | skip
    measured: float | None = None
    threshold: float | None = None
    detail: str = ""

    @property
    def passed(self) -> bool:
        return self.status != "fail"


def _check(name: str, measured: float, threshold: float, detail: str = "", *, below: bool = True) -> CheckResult:
    ok = measured <= threshold if below else measured >= threshold
    return CheckResult(name, "pass" if ok else "fail", measured, threshold, detail)


def check_quadrature_selftest() -> CheckResult:
    """Gamma-averaged ``exp(-g)`` against its Laplace transform, and a Q-function integral."""
    worst = 0.0
    for m in (1, 2, 3):
        for mean in (0.5, 3.0, 40.0):
            got = average_over_fading(lambda g: math.exp(-g), mean, m)
            worst = max(worst, abs(got / (1.0 + mean / m) ** (-m) - 1.0))
    # int_0^inf Q(sqrt(2 g)) dg = 1/4
    got = threshold_numeric(get_scheme("BPSK"), 1)
    worst = max(worst, abs(got / 0.25 - 1.0))
    return _check("quadrature_selftest", worst, 1e-8, "max relative error on closed-form integrals")


def check_refit_recovery() -> CheckResult:
    fit = refit_constants(get_scheme("BPSK"))
    err = max(abs(fit.k1 / 0.2114 - 1.0), abs(fit.k2 / 0.5598 - 1.0))
    return _check("refit_recovery", err, 0.10, f"k1={fit.k1:.4f} k2={fit.k2:.4f}")


def check_numeric_threshold_bound(cfg: RunConfig, points: int = 10) -> CheckResult:
    """Nakagami bound with quadrature thresholds must dominate the numeric PER."""
    worst = -math.inf
    snrs = np.geomspace(1.0, 1000.0, points)
    for scheme in cfg.schemes:
        for n in (32, 128, 1024):
            for m in (1, 2, 3):
                omega = threshold_numeric(scheme, n, m)
                b = bound_constant(scheme, n, m)
                for s in snrs:
                    bound = min(b * m ** (m - 1) / (s ** (m - 1) * math.gamma(m)) * -math.expm1(-m * omega / (s * b)), 1.0)
                    worst = max(worst, avg_per_numeric(scheme, n, s, m) - bound)
    return _check("bound_with_numeric_threshold", worst, 1e-9, "max(numeric PER - bound)")


def check_approx2_envelope(cfg: RunConfig) -> CheckResult:
    """Approx-2 relative error stays within a fixed band of the upper bound's."""
    q_schemes = tuple(s for s in cfg.schemes if s.law is BerLaw.QFUNCTION)
    if not q_schemes:
        return CheckResult("approx2_envelope", "skip", detail="no Q-function scheme configured")
    worst = 0.0
    grid = [10.0 ** (x / 10.0) for x in range(0, 41)]
    for scheme in q_schemes:
        for n in cfg.per_error_n_bits:
            omega = threshold_numeric(scheme, n)
            for s in grid:
                exact = avg_per_numeric(scheme, n, s)
                if not 1e-4 <= exact <= 0.99:
                    continue
                re_ub = _rel(-math.expm1(-omega / s), exact)
                re_a2 = _rel(float(avg_per_rayleigh(scheme, n, s, cfg.refit)), exact)
                worst = max(worst, abs(re_a2 - re_ub))
    return _check("approx2_envelope", worst, APPROX2_ENVELOPE, "max |RE_approx2 - RE_upper_bound|")


def _energy_unlimited(coeffs, scheme, n_payload: float, n_header: int, snr: float, refit) -> float:
    # Real-valued payload version of the unlimited-retransmission energy.
    n_total = n_payload + n_header
    per = -math.expm1(-rayleigh_threshold(scheme, n_total, refit) / snr)
    return (n_total / n_payload * coeffs.a_coeff * snr + coeffs.b_coeff) / (1.0 - per)


def check_closed_form_optima(cfg: RunConfig) -> list[CheckResult]:
    """Closed-form SNR and payload optima against a scan-and-refine minimizer."""
    worst_snr, worst_np = 0.0, 0.0
    n_h = max(cfg.shape.n_header, 1)
    for scheme in cfg.schemes:
        coeffs = cost_coefficients(scheme, cfg.link, cfg.energy)
        shape = PacketShape(cfg.shape.n_payload, n_h)
        star = optimal_snr_unconstrained(coeffs, shape, scheme, cfg.refit)
        got, _ = argmin_scan(
            lambda s: _energy_unlimited(coeffs, scheme, shape.n_payload, n_h, s, cfg.refit),
            (star / 100.0, star * 100.0),
        )
        worst_snr = max(worst_snr, abs(star - got) / got)
        n_star = optimal_payload(coeffs, n_h, scheme, star, cfg.refit)
        got, _ = argmin_scan(
            lambda n: _energy_unlimited(coeffs, scheme, n, n_h, star, cfg.refit),
            (max(n_star / 100.0, 1e-3), n_star * 100.0),
        )
        worst_np = max(worst_np, abs(n_star - got) / got)
    return [
        _check("closed_form_snr_vs_argmin", worst_snr, 0.01, "max relative deviation"),
        _check("closed_form_payload_vs_argmin", worst_np, 0.01, "max relative deviation"),
    ]


def check_round_trip(cfg: RunConfig) -> CheckResult:
    worst = 0.0
    for scheme in cfg.schemes:
        sol_lo = min_snr(scheme, cfg.shape, cfg.reliability, cfg.refit)
        per = float(avg_per_rayleigh(scheme, cfg.shape, sol_lo, cfg.refit))
        worst = max(worst, abs(per / cfg.reliability.eps_req - 1.0))
    return _check("min_snr_round_trip", worst, 1e-9, "relative error of PER at snr_min vs eps_req")


def monte_carlo_point(cfg: RunConfig, scheme: ModulationScheme, distance: float, n_packets: int | None = None):
    """Simulate one spot configuration at its required SNR (or the power cap).

    Returns ``(mc_result, numeric_per, model_energy)``.
    """
    link = cfg.link.at(distance)
    coeffs = cost_coefficients(scheme, link, cfg.energy)
    sol = required_snr(coeffs, scheme, cfg.shape, cfg.reliability, link, cfg.refit)
    snr = sol.required if sol.feasible else sol.max_allowed
    mc = simulate_link(
        scheme,
        cfg.shape,
        snr,
        link,
        cfg.energy,
        cfg.reliability,
        McSpec(seed=cfg.oracle.seed, n_packets=n_packets or cfg.oracle.n_packets),
    )
    exact = avg_per_numeric(scheme, cfg.shape, snr)
    model = truncated_energy(coeffs, cfg.shape, scheme, snr, cfg.reliability, cfg.refit)
    return mc, exact, model


def check_monte_carlo(cfg: RunConfig) -> list[CheckResult]:
    per_worst, e_worst = 0.0, 0.0
    for scheme in cfg.schemes:
        mc, exact, model = monte_carlo_point(cfg, scheme, cfg.link.distance_m)
        per_worst = max(per_worst, abs(mc.per_hat - exact) / max(mc.ci95_halfwidth, 1e-300))
        e_worst = max(e_worst, abs(mc.mean_energy_per_bit - model) / max(mc.energy_ci95_halfwidth, 1e-300))
    return [
        _check("monte_carlo_per", per_worst, 3.0, "|per_hat - numeric| in units of the 95% half-width"),
        _check("monte_carlo_energy", e_worst, 3.0, "|energy_hat - model| in units of the 95% half-width"),
    ]


QUADRATURE_CHECKS = (
    "quadrature_selftest",
    "refit_recovery",
    "bound_with_numeric_threshold",
    "approx2_envelope",
    "closed_form_snr_vs_argmin",
    "closed_form_payload_vs_argmin",
    "min_snr_round_trip",
)
MONTE_CARLO_CHECKS = ("monte_carlo_per", "monte_carlo_energy")


def validate(cfg: RunConfig) -> list[CheckResult]:
    """Run the oracle suite; disabled oracles turn their checks into skips."""
    results: list[CheckResult] = []
    if cfg.oracle.quadrature:
        for check in (
            check_quadrature_selftest,
            check_refit_recovery,
            lambda: check_numeric_threshold_bound(cfg),
            lambda: check_approx2_envelope(cfg),
            lambda: check_closed_form_optima(cfg),
            lambda: check_round_trip(cfg),
        ):
            out = check()
            results.extend(out if isinstance(out, list) else [out])
    else:
        results.extend(CheckResult(n, "skip", detail="quadrature oracle disabled") for n in QUADRATURE_CHECKS)
    if cfg.oracle.monte_carlo:
        results.extend(check_monte_carlo(cfg))
    else:
        results.extend(CheckResult(n, "skip", detail="Monte Carlo oracle disabled") for n in MONTE_CARLO_CHECKS)
    return results
