"""Run configuration: TOML presets, ``--set`` overrides and validation.

All dB quantities are converted to linear units here and nowhere else.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np
import tomli

from .energy import EnergyParams, LinkBudget, ReliabilityTarget, db_to_linear, noise_psd_from_half_dbm
from .modulation import ModulationScheme, get_scheme
from .optimizer import DEFAULT_DELTA, DEFAULT_MAX_ITER
from .per import PacketShape, RefitConstants

__all__ = [
    "ConfigError",
    "DEFAULTS",
    "PRESETS",
    "SweepSpec",
    "OracleSettings",
    "RunConfig",
    "load_config",
    "parse_override",
]

PRESETS = ("fig1_4qam", "fig1_16qam", "fig2", "fig3", "fig4")

DEFAULTS: dict[str, dict[str, Any]] = {
    "link": {
        "g1_db": 30.0,
        "kappa": 3.5,
        "distance_m": 10.0,
        "link_margin_db": 40.0,
        "noise_half_psd_dbm_hz": -174.0,
        "bandwidth_hz": 10e3,
        "max_tx_power_w": 10e-3,
    },
    "energy": {"pa_drain_efficiency": 0.35},
    "reliability": {"epsilon": 1e-3, "max_retx": 3},
    "packet": {"n_payload": 48, "n_header": 40},
    "schemes": {"names": ["4QAM", "16QAM"]},
    "sweep": {"variable": "distance", "lo": 1.0, "hi": 80.0, "points": 80, "spacing": "linear"},
    "refit": {"k1": 0.2114, "k2": 0.5598},
    "oracle": {"quadrature": True, "monte_carlo": True, "seed": 0, "n_packets": 100_000},
    "per_error": {"n_bits": [32, 1024]},
    "joint": {"delta": DEFAULT_DELTA, "max_iter": DEFAULT_MAX_ITER},
    "output": {"path": "", "format": "csv"},
}


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass(frozen=True)
class SweepSpec:
    """Swept variable and its values, already in internal units.

    ``values`` holds metres for ``distance``, linear SNR for ``snr`` and
    bits for ``payload``.
    """

    variable: str
    values: tuple[float, ...]


@dataclass(frozen=True)
class OracleSettings:
    quadrature: bool
    monte_carlo: bool
    seed: int
    n_packets: int


@dataclass(frozen=True)
class RunConfig:
    link: LinkBudget
    energy: EnergyParams
    reliability: ReliabilityTarget
    shape: PacketShape
    schemes: tuple[ModulationScheme, ...]
    sweep: SweepSpec
    refit: RefitConstants
    oracle: OracleSettings
    per_error_n_bits: tuple[int, ...]
    joint_delta: float
    joint_max_iter: int
    output_path: str
    output_format: str
    source: str

    def echo(self) -> dict[str, Any]:
        """Parsed configuration in internal (linear) units."""
        link = self.link
        return {
            "source": self.source,
            "link": {
                "g1": link.g1,
                "kappa": link.kappa,
                "distance_m": link.distance_m,
                "link_margin": link.link_margin,
                "noise_psd_w_hz": link.noise_psd,
                "bandwidth_hz": link.bandwidth_hz,
                "max_tx_power_w": link.max_tx_power,
            },
            "energy": {
                "pa_drain_efficiency": self.energy.pa_drain_efficiency,
                "circuit_power_w": self.energy.circuit_power,
                "symbol_rate": self.energy.symbol_rate,
            },
            "reliability": {"epsilon": self.reliability.epsilon, "max_retx": self.reliability.max_retx},
            "packet": {"n_payload": self.shape.n_payload, "n_header": self.shape.n_header},
            "schemes": [s.name for s in self.schemes],
            "sweep": {"variable": self.sweep.variable, "values": list(self.sweep.values)},
            "refit": {"k1": self.refit.k1, "k2": self.refit.k2},
            "oracle": {
                "quadrature": self.oracle.quadrature,
                "monte_carlo": self.oracle.monte_carlo,
                "seed": self.oracle.seed,
                "n_packets": self.oracle.n_packets,
            },
            "per_error": {"n_bits": list(self.per_error_n_bits)},
            "joint": {"delta": self.joint_delta, "max_iter": self.joint_max_iter},
        }


def parse_override(text: str) -> tuple[str, str, Any]:
    """Split ``section.key=value``; the value is read as a TOML literal when possible."""
    if "=" not in text:
        raise ConfigError(text, "override must look like section.key=value")
    key, raw = text.split("=", 1)
    parts = key.strip().split(".")
    if len(parts) != 2 or not all(parts):
        raise ConfigError(key, "override key must be section.key")
    try:
        value = tomli.loads(f"v = {raw.strip()}")["v"]
    except tomli.TOMLDecodeError:
        value = raw.strip()
    return parts[0], parts[1], value


def _read_source(source: str | None) -> tuple[dict[str, Any], str]:
    if source is None:
        return {}, "defaults"
    if source in PRESETS:
        text = resources.files("linkopt").joinpath("presets", f"{source}.toml").read_text("utf-8")
        return tomli.loads(text), f"preset:{source}"
    path = Path(source)
    if not path.is_file():
        raise ConfigError("--config", f"no preset or file named {source!r} (presets: {', '.join(PRESETS)})")
    try:
        return tomli.loads(path.read_text("utf-8")), str(path)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(str(path), f"invalid TOML: {exc}") from exc


def _merge(data: dict[str, Any], extra: dict[str, Any], origin: str) -> None:
    for section, values in extra.items():
        if section not in DEFAULTS:
            raise ConfigError(section, f"unknown section in {origin}")
        if not isinstance(values, dict):
            raise ConfigError(section, "must be a table")
        data[section].update(values)


def _number(data, section, key, *, positive=False, lo=None, hi=None, integer=False):
    path = f"{section}.{key}"
    value = data[section].get(key)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, f"expected a number, got {value!r}")
    if integer and int(value) != value:
        raise ConfigError(path, f"expected an integer, got {value!r}")
    if positive and not value > 0:
        raise ConfigError(path, f"must be positive, got {value!r}")
    if lo is not None and value < lo:
        raise ConfigError(path, f"must be >= {lo}, got {value!r}")
    if hi is not None and value > hi:
        raise ConfigError(path, f"must be <= {hi}, got {value!r}")
    return int(value) if integer else float(value)


def _choice(data, section, key, options):
    value = data[section].get(key)
    if value not in options:
        raise ConfigError(f"{section}.{key}", f"must be one of {', '.join(options)}, got {value!r}")
    return value


def _flag(data, section, key):
    value = data[section].get(key)
    if not isinstance(value, bool):
        raise ConfigError(f"{section}.{key}", f"expected true/false, got {value!r}")
    return value


def _check_unknown_keys(data: dict[str, Any]) -> None:
    optional = {"energy": {"circuit_power_w", "symbol_rate"}, "sweep": {"unit"}}
    for section, values in data.items():
        allowed = set(DEFAULTS[section]) | optional.get(section, set())
        for key in values:
            if key not in allowed:
                raise ConfigError(f"{section}.{key}", "unknown key")


def _sweep(data) -> SweepSpec:
    variable = _choice(data, "sweep", "variable", ("distance", "snr", "payload"))
    lo = _number(data, "sweep", "lo")
    hi = _number(data, "sweep", "hi")
    points = _number(data, "sweep", "points", integer=True, lo=2)
    spacing = _choice(data, "sweep", "spacing", ("linear", "log"))
    unit = data["sweep"].get("unit", "db" if variable == "snr" else "native")
    if not lo < hi:
        raise ConfigError("sweep.hi", f"sweep needs lo < hi, got lo={lo} hi={hi}")
    if variable == "snr":
        if unit not in ("db", "linear"):
            raise ConfigError("sweep.unit", f"must be db or linear, got {unit!r}")
    elif unit != "native":
        raise ConfigError("sweep.unit", "only meaningful for the snr sweep")
    if spacing == "log" and (lo <= 0 and not (variable == "snr" and unit == "db")):
        raise ConfigError("sweep.lo", "log spacing needs a positive lower end")
    values = np.geomspace(lo, hi, points) if spacing == "log" else np.linspace(lo, hi, points)
    if variable == "snr":
        values = np.array([db_to_linear(v) for v in values]) if unit == "db" else values
        values = values[values > 0]  # zero SNR lies outside every formula's domain
    elif variable == "distance":
        if lo <= 0:
            raise ConfigError("sweep.lo", "distances must be positive")
    else:
        if lo < 1:
            raise ConfigError("sweep.lo", "payload must be at least one bit")
        values = np.unique(np.round(values))
    return SweepSpec(variable, tuple(float(v) for v in values))


def load_config(
    source: str | None = None,
    overrides: list[str] | tuple[str, ...] = (),
) -> RunConfig:
    """Build a :class:`RunConfig` from defaults, a preset or file, then overrides.

    Raises :class:`ConfigError` naming the offending ``section.key``.
    """
    data = copy.deepcopy(DEFAULTS)
    text, origin = _read_source(source)
    _merge(data, text, origin)
    for item in overrides:
        section, key, value = parse_override(item)
        _merge(data, {section: {key: value}}, "--set")
    _check_unknown_keys(data)

    try:
        link = LinkBudget(
            g1=db_to_linear(_number(data, "link", "g1_db")),
            kappa=_number(data, "link", "kappa", positive=True),
            distance_m=_number(data, "link", "distance_m", positive=True),
            link_margin=db_to_linear(_number(data, "link", "link_margin_db")),
            noise_psd=noise_psd_from_half_dbm(_number(data, "link", "noise_half_psd_dbm_hz")),
            bandwidth_hz=_number(data, "link", "bandwidth_hz", positive=True),
            max_tx_power=_number(data, "link", "max_tx_power_w", positive=True),
        )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError("link", str(exc)) from exc

    eta = _number(data, "energy", "pa_drain_efficiency", positive=True, hi=1.0)
    pc = data["energy"].get("circuit_power_w")
    if pc is not None:
        pc = _number(data, "energy", "circuit_power_w", lo=0.0)
    rs = data["energy"].get("symbol_rate")
    if rs is not None:
        rs = _number(data, "energy", "symbol_rate", positive=True)
    energy = EnergyParams(eta, pc, rs)

    eps = _number(data, "reliability", "epsilon", positive=True)
    if not eps < 1:
        raise ConfigError("reliability.epsilon", f"must lie in (0, 1), got {eps}")
    reliability = ReliabilityTarget(eps, _number(data, "reliability", "max_retx", integer=True, lo=0))
    shape = PacketShape(
        _number(data, "packet", "n_payload", integer=True, lo=1),
        _number(data, "packet", "n_header", integer=True, lo=0),
    )

    names = data["schemes"].get("names")
    if not isinstance(names, list) or not names:
        raise ConfigError("schemes.names", "expected a nonempty list of scheme names")
    schemes = []
    for i, name in enumerate(names):
        try:
            schemes.append(get_scheme(str(name)))
        except KeyError as exc:
            raise ConfigError(f"schemes.names[{i}]", exc.args[0]) from exc

    refit = RefitConstants(
        _number(data, "refit", "k1", positive=True), _number(data, "refit", "k2", positive=True)
    )
    seed = _number(data, "oracle", "seed", integer=True, lo=0)
    if seed >= 2**64:
        raise ConfigError("oracle.seed", "must fit in 64 bits")
    oracle = OracleSettings(
        quadrature=_flag(data, "oracle", "quadrature"),
        monte_carlo=_flag(data, "oracle", "monte_carlo"),
        seed=seed,
        n_packets=_number(data, "oracle", "n_packets", integer=True, lo=1),
    )
    n_bits = data["per_error"].get("n_bits")
    if not isinstance(n_bits, list) or not n_bits or not all(isinstance(n, int) and n >= 1 for n in n_bits):
        raise ConfigError("per_error.n_bits", "expected a nonempty list of positive integers")

    return RunConfig(
        link=link,
        energy=energy,
        reliability=reliability,
        shape=shape,
        schemes=tuple(schemes),
        sweep=_sweep(data),
        refit=refit,
        oracle=oracle,
        per_error_n_bits=tuple(n_bits),
        joint_delta=_number(data, "joint", "delta", positive=True),
        joint_max_iter=_number(data, "joint", "max_iter", integer=True, lo=1),
        output_path=str(data["output"].get("path") or ""),
        output_format=_choice(data, "output", "format", ("csv", "json")),
        source=origin,
    )
