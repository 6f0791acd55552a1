"""``linkopt`` command-line interface.

Subcommands: ``describe``, ``config``, ``per-error``, ``sweep``, ``joint``
and ``validate``. Exit codes: 0 success, 1 validation failure, 2 config
error, 3 numeric-oracle failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from pathlib import Path
from typing import Any, Iterable, Sequence

from . import __version__, reports
from .config import PRESETS, ConfigError, RunConfig, load_config
from .modulation import catalog
from .oracle import QuadratureError
from .per import RefitConstants

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_CONFIG = 2
EXIT_ORACLE = 3


def _format_cell(key: str, value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if not math.isfinite(value):
            return reports.INFEASIBLE if value > 0 else reports.ERROR
        return f"{value:.6e}" if key in reports.ENERGY_COLUMNS else f"{value:.10g}"
    return str(value)


def _json_cell(value: Any) -> Any:
    if isinstance(value, float) and not math.isfinite(value):
        return reports.INFEASIBLE if value > 0 else reports.ERROR
    return value


def render_csv(columns: Sequence[str], rows: Iterable[dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_format_cell(c, row.get(c)) for c in columns])
    return buf.getvalue()


def render_json(command: str, cfg: RunConfig, columns: Sequence[str], rows: list[dict], **extra) -> str:
    doc = {
        "meta": {
            "tool": "linkopt",
            "version": __version__,
            "schema_version": reports.SCHEMA_VERSION,
            "command": command,
            "seed": cfg.oracle.seed,
            "columns": list(columns),
            "config": cfg.echo(),
        },
        "rows": [{c: _json_cell(r.get(c)) for c in columns} for r in rows],
    }
    for key, value in extra.items():
        doc[key] = value
    return json.dumps(doc, indent=2, sort_keys=False) + "\n"


def _emit(text: str, path: str) -> None:
    if path:
        Path(path).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", metavar="PATH", help=f"TOML file or preset ({', '.join(PRESETS)})")
    parser.add_argument("--set", dest="overrides", action="append", default=[], metavar="K=V",
                        help="override a config value, e.g. link.distance_m=30 (repeatable)")
    parser.add_argument("--output", metavar="PATH", help="write to PATH instead of standard output")
    parser.add_argument("--format", choices=("csv", "json"), help="output format")
    parser.add_argument("--seed", type=int, metavar="U64", help="Monte Carlo seed")
    parser.add_argument("--oracle", choices=("on", "off"), help="toggle every numeric oracle")
    parser.add_argument("--jobs", type=int, default=1, metavar="N", help="worker processes for sweeps")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="linkopt", description="Energy-optimal link parameters under block fading.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log warnings from the numerics")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("describe", help="print the modulation catalog and refit defaults")
    for name, text in (
        ("config", "print the parsed configuration in linear units"),
        ("per-error", "relative errors of the average-PER approximations"),
        ("sweep", "optimal required SNR and energy per scheme over a sweep"),
        ("joint", "joint modulation, retransmission, SNR and payload optimization"),
        ("validate", "run the oracle checks"),
    ):
        p = sub.add_parser(name, help=text)
        _common(p)
        if name == "joint":
            p.add_argument("--trace", metavar="PATH", help="write the iteration trace CSV here")
    return parser


def _load(args: argparse.Namespace) -> RunConfig:
    overrides = list(args.overrides)
    if args.seed is not None:
        overrides.append(f"oracle.seed={args.seed}")
    if args.oracle is not None:
        flag = "true" if args.oracle == "on" else "false"
        overrides += [f"oracle.quadrature={flag}", f"oracle.monte_carlo={flag}"]
    if args.format is not None:
        overrides.append(f'output.format="{args.format}"')
    if args.output is not None:
        overrides.append(f'output.path="{args.output}"')
    if args.jobs < 1:
        raise ConfigError("--jobs", "must be at least 1")
    return load_config(args.config, overrides)


def cmd_describe() -> int:
    rows = [
        (s.name, s.law.value, s.constellation_size, f"{s.c_m:.6g}", f"{s.k_m:.6g}", f"{s.papr:.6g}", f"{s.circuit_power:.3f}")
        for s in catalog()
    ]
    header = ("scheme", "ber_law", "M", "c_m", "k_m", "papr", "circuit_power_w")
    widths = [max(len(str(r[i])) for r in rows + [header]) for i in range(len(header))]
    lines = ["  ".join(str(v).ljust(w) for v, w in zip(line, widths)).rstrip() for line in [header, *rows]]
    refit = RefitConstants()
    lines.append("")
    lines.append(f"refit defaults: k1 = {refit.k1}, k2 = {refit.k2}")
    sys.stdout.write("\n".join(lines) + "\n")
    return EXIT_OK


def cmd_config(cfg: RunConfig) -> int:
    _emit(json.dumps(cfg.echo(), indent=2) + "\n", cfg.output_path)
    return EXIT_OK


def _table(command: str, cfg: RunConfig, columns, rows, **extra) -> str:
    if cfg.output_format == "json":
        return render_json(command, cfg, columns, rows, **extra)
    return render_csv(columns, rows)


def cmd_per_error(cfg: RunConfig) -> int:
    if not cfg.oracle.quadrature:
        raise ConfigError("oracle.quadrature", "the relative-error report needs the quadrature oracle")
    grid = cfg.sweep.values if cfg.sweep.variable == "snr" else None
    if grid is None:
        raise ConfigError("sweep.variable", "the relative-error report needs an snr sweep")
    rows, failed = reports.per_error_rows(cfg)
    _emit(_table("per-error", cfg, reports.PER_ERROR_COLUMNS, rows), cfg.output_path)
    return EXIT_ORACLE if failed else EXIT_OK


def cmd_sweep(cfg: RunConfig, jobs: int) -> int:
    rows, failed = reports.sweep_rows(cfg, jobs)
    _emit(_table("sweep", cfg, reports.sweep_columns(cfg), rows), cfg.output_path)
    return EXIT_ORACLE if failed else EXIT_OK


def cmd_joint(cfg: RunConfig, jobs: int, trace_path: str | None) -> int:
    if cfg.sweep.variable != "distance":
        raise ConfigError("sweep.variable", "the joint optimization sweeps distance only")
    rows, trace, series = reports.joint_rows(cfg, jobs)
    if cfg.output_format == "json":
        text = render_json("joint", cfg, reports.JOINT_COLUMNS, rows, series=series)
    else:
        text = render_csv(reports.JOINT_COLUMNS, rows)
    _emit(text, cfg.output_path)
    if trace_path:
        Path(trace_path).write_text(render_csv(reports.TRACE_COLUMNS, trace), encoding="utf-8")
    return EXIT_OK


def cmd_validate(cfg: RunConfig) -> int:
    results = reports.validate(cfg)
    if cfg.output_format == "json":
        doc = {
            "meta": {"tool": "linkopt", "version": __version__, "seed": cfg.oracle.seed, "config": cfg.echo()},
            "checks": [
                {"name": r.name, "status": r.status, "measured": r.measured, "threshold": r.threshold, "detail": r.detail}
                for r in results
            ],
        }
        text = json.dumps(doc, indent=2) + "\n"
    else:
        lines = []
        for r in results:
            measured = "" if r.measured is None else f" measured={r.measured:.3e}"
            threshold = "" if r.threshold is None else f" threshold={r.threshold:.3e}"
            detail = f" ({r.detail})" if r.detail else ""
            lines.append(f"{r.status.upper():4s} {r.name}{measured}{threshold}{detail}")
        text = "\n".join(lines) + "\n"
    _emit(text, cfg.output_path)
    return EXIT_OK if all(r.passed for r in results) else EXIT_VALIDATION


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.verbose else logging.ERROR, format="%(levelname)s %(name)s: %(message)s")
    if not args.verbose:
        logging.captureWarnings(True)
    if args.command == "describe":
        return cmd_describe()
    try:
        cfg = _load(args)
        if args.command == "config":
            return cmd_config(cfg)
        if args.command == "per-error":
            return cmd_per_error(cfg)
        if args.command == "sweep":
            return cmd_sweep(cfg, args.jobs)
        if args.command == "joint":
            return cmd_joint(cfg, args.jobs, args.trace)
        return cmd_validate(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except QuadratureError as exc:
        print(f"oracle failure: {exc}", file=sys.stderr)
        return EXIT_ORACLE


if __name__ == "__main__":
    sys.exit(main())
