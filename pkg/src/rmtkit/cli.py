"""
Command-line front end.

A run is described by one JSON document::

    {
      "mode": "free-sum" | "free-product" | "cdma-sinr" | "cdma-stieltjes" | "monte-carlo" | "compare",
      "measures": [<measure>, ...],          # free-sum, free-product, sum/product targets
      "scenario": {                          # cdma modes and cdma targets
        "transmitters": [{"alpha": 0.5, "signature_kind": "iid", "power": <measure>}, ...],
        "channel": {"independent": [<measure>, ...]} | {"atoms": [[[h1, h2], w], ...]},
        "noise_variance": 0.1
      },
      "target": "sum" | "product" | "cdma" | "cdma-sinr",   # monte-carlo and compare
      "z_grid": [[re, im], ...] | {"re": [...] | {"start": a, "stop": b, "num": k}, "im": y},
      "snr_grid": [snr_db, ...] | {"start": a, "stop": b, "step": s},
      "solver": {"tolerance": 1e-10, "max_iterations": 10000, "damping": 0.5, "check_uniqueness": false},
      "mc": {"n": 256, "trials": 20, "seed": 0},
      "output": {"path": "out.csv", "format": "csv" | "json"}
    }

A <measure> is ``{"atoms": [[x, w], ...]}``, ``{"samples": [...]}`` or a family
spec such as ``{"family": "exponential", "mean": 1, "atom_count": 256}``.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import dataclass
from typing import Any, Callable

import numpy as np

from . import cdma, free_product, free_sum, rmt_lab
from ._fixed_point import SolverConfig
from .errors import AmbiguousFixedPoint, InvalidMeasure, InvalidScenario, MeasureTooLarge, NonConvergence, RMTError
from .measures import channel_from_json, measure_from_json

MODES = ("free-sum", "free-product", "cdma-sinr", "cdma-stieltjes", "monte-carlo", "compare")
TARGETS = ("sum", "product", "cdma", "cdma-sinr")
FORMATS = ("csv", "json")

EXIT_OK = 0
EXIT_SCHEMA = 2
EXIT_SOLVER = 3

STIELTJES_COLUMNS = ["z_re", "z_im", "G_re", "G_im", "residual", "iterations", "status"]
SINR_COLUMNS = ["snr_db", "noise_variance", "transmitter", "sinr", "sinr_db", "rho_re", "rho_im",
                "residual", "iterations", "status"]
MC_COLUMNS = ["z_re", "z_im", "G_mc_re", "G_mc_im", "n", "trials"]
MC_SINR_COLUMNS = ["snr_db", "noise_variance", "transmitter", "sinr_mc", "sinr_mc_db", "n", "trials"]
COMPARE_COLUMNS = ["z_re", "z_im", "G_solver_re", "G_solver_im", "G_mc_re", "G_mc_im", "abs_gap", "n", "trials",
                   "status"]
COMPARE_SINR_COLUMNS = ["snr_db", "noise_variance", "transmitter", "sinr_solver_db", "sinr_mc_db", "gap_db", "n",
                        "trials", "status"]

DEFAULT_MC = {"n": 256, "trials": 20, "seed": 0}

EPILOG = """\
SNR convention: a cdma-sinr sweep sets the noise variance at each point to
sigma^2 = mean_j(E[P_j] E[H_j]) / 10^(snr_db/10), i.e. SNR is the per-stream
received signal-to-noise ratio, which is 1/sigma^2 for unit-mean powers and
channels. Reported SINR is for a stream transmitting at the mean power E[P_j].
Transmitter indices in output tables start at 0.

CSV columns:
  free-sum, free-product, cdma-stieltjes: %s
  cdma-sinr: %s
  monte-carlo: %s (target cdma-sinr: %s)
  compare: %s (target cdma-sinr: %s)

Exit codes: 0 success, 2 unreadable or invalid config, 3 solver failure at one
or more grid points (the remaining rows are still written; see 'status').
""" % (", ".join(STIELTJES_COLUMNS), ", ".join(SINR_COLUMNS), ", ".join(MC_COLUMNS),
       ", ".join(MC_SINR_COLUMNS), ", ".join(COMPARE_COLUMNS), ", ".join(COMPARE_SINR_COLUMNS))


class ConfigError(Exception):
    """Schema violations collected while parsing a config."""

    def __init__(self, violations: list[str]):
        super().__init__("; ".join(violations))
        self.violations = violations


@dataclass
class RunConfig:
    mode: str
    target: str | None
    measures: list | None
    scenario: cdma.CdmaScenario | None
    z_grid: list[complex] | None
    snr_grid: list[float] | None
    solver: SolverConfig
    mc: dict
    output_path: str | None
    output_format: str


def _parse_z_grid(obj, errors: list[str]) -> list[complex] | None:
    try:
        if isinstance(obj, list):
            zs = [complex(float(p[0]), float(p[1])) for p in obj]
        elif isinstance(obj, dict):
            re = obj.get("re")
            if isinstance(re, dict):
                re = np.linspace(float(re["start"]), float(re["stop"]), int(re["num"])).tolist()
            ims = obj.get("im")
            if re is None or ims is None:
                errors.append("z_grid: object form needs 're' and 'im'")
                return None
            ims = ims if isinstance(ims, list) else [ims] * len(re)
            if len(ims) != len(re):
                errors.append("z_grid: 're' and 'im' lengths differ")
                return None
            zs = [complex(float(a), float(b)) for a, b in zip(re, ims)]
        else:
            errors.append("z_grid: must be a list of [re, im] pairs or an object")
            return None
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        errors.append(f"z_grid: malformed ({exc})")
        return None
    if not zs:
        errors.append("z_grid: must be nonempty")
        return None
    bad = [z for z in zs if not (math.isfinite(z.real) and math.isfinite(z.imag) and z.imag > 0)]
    if bad:
        errors.append(f"z_grid: every point needs finite coordinates and im > 0 (offending: {bad[0]})")
        return None
    return zs


def _parse_snr_grid(obj, errors: list[str]) -> list[float] | None:
    try:
        if isinstance(obj, list):
            snrs = [float(s) for s in obj]
        elif isinstance(obj, dict):
            start, stop, step = float(obj["start"]), float(obj["stop"]), float(obj["step"])
            if step <= 0:
                errors.append("snr_grid: step must be positive")
                return None
            count = int(math.floor((stop - start) / step + 1e-9)) + 1
            snrs = [start + k * step for k in range(max(count, 0))]
        else:
            errors.append("snr_grid: must be a list of numbers or {start, stop, step}")
            return None
    except (KeyError, TypeError, ValueError) as exc:
        errors.append(f"snr_grid: malformed ({exc})")
        return None
    if not snrs or not all(math.isfinite(s) for s in snrs):
        errors.append("snr_grid: must be a nonempty list of finite numbers")
        return None
    return snrs


def _parse_measures(obj, errors: list[str], count: int | None) -> list | None:
    if not isinstance(obj, list) or not obj:
        errors.append("measures: must be a nonempty list")
        return None
    if count is not None and len(obj) < count:
        errors.append(f"measures: need at least {count} entries")
        return None
    out = []
    for i, m in enumerate(obj):
        try:
            measure = measure_from_json(m)
        except (InvalidMeasure, ValueError, TypeError, KeyError) as exc:
            errors.append(f"measures[{i}]: {exc}")
            continue
        if measure.is_degenerate():
            errors.append(f"measures[{i}]: all mass at zero")
        out.append(measure)
    return out if len(out) == len(obj) else None


def _parse_scenario(obj, errors: list[str]) -> cdma.CdmaScenario | None:
    if not isinstance(obj, dict):
        errors.append("scenario: must be an object")
        return None
    for name in ("transmitters", "channel", "noise_variance"):
        if name not in obj:
            errors.append(f"scenario: missing required field '{name}'")
    txs = []
    for i, t in enumerate(obj.get("transmitters") or []):
        if not isinstance(t, dict):
            errors.append(f"scenario.transmitters[{i}]: must be an object")
            continue
        missing = [k for k in ("alpha", "signature_kind", "power") if k not in t]
        for k in missing:
            errors.append(f"scenario.transmitters[{i}]: missing required field '{k}'")
        if missing:
            continue
        try:
            power = measure_from_json(t["power"])
            txs.append(cdma.TransmitterSpec(float(t["alpha"]), t["signature_kind"], power))
        except (InvalidMeasure, InvalidScenario, ValueError, TypeError) as exc:
            errors.append(f"scenario.transmitters[{i}]: {exc}")
            continue
        if power.is_degenerate():
            errors.append(f"scenario.transmitters[{i}]: power law has all mass at zero")
    if "transmitters" in obj and not obj.get("transmitters"):
        errors.append("scenario.transmitters: must be a nonempty list")
    channel = None
    if "channel" in obj:
        try:
            channel = channel_from_json(obj["channel"])
        except (InvalidMeasure, MeasureTooLarge, ValueError, TypeError) as exc:
            errors.append(f"scenario.channel: {exc}")
    noise = obj.get("noise_variance")
    if "noise_variance" in obj and not (isinstance(noise, (int, float)) and not isinstance(noise, bool)):
        errors.append("scenario.noise_variance: must be a number")
        noise = None
    if errors or channel is None or noise is None:
        return None
    try:
        scenario = cdma.CdmaScenario(tuple(txs), channel, float(noise))
    except InvalidScenario as exc:
        errors.append(f"scenario: {exc}")
        return None
    for j, mu in enumerate(channel.means()):
        if mu <= 0:
            errors.append(f"scenario.channel: marginal {j} has all mass at zero")
    return scenario


def _parse_solver(obj, errors: list[str]) -> SolverConfig:
    if obj is None:
        return SolverConfig()
    if not isinstance(obj, dict):
        errors.append("solver: must be an object")
        return SolverConfig()
    unknown = set(obj) - {"tolerance", "max_iterations", "damping", "check_uniqueness"}
    if unknown:
        errors.append(f"solver: unknown fields {sorted(unknown)}")
    try:
        return SolverConfig(**{k: v for k, v in obj.items() if k not in unknown})
    except (TypeError, ValueError) as exc:
        errors.append(f"solver: {exc}")
        return SolverConfig()


def _parse_mc(obj, errors: list[str], overrides: dict) -> dict:
    mc = dict(DEFAULT_MC)
    if obj is not None:
        if not isinstance(obj, dict):
            errors.append("mc: must be an object")
        else:
            mc.update(obj)
    mc.update({k: v for k, v in overrides.items() if v is not None})
    for key in ("n", "trials"):
        if not (isinstance(mc[key], int) and mc[key] >= 1):
            errors.append(f"mc.{key}: must be a positive integer")
    if not (isinstance(mc["seed"], int) and 0 <= mc["seed"] < 2 ** 64):
        errors.append("mc.seed: must be an unsigned 64-bit integer")
    return mc


def parse_config(doc: Any, overrides: dict | None = None) -> RunConfig:
    """Build a :class:`RunConfig` or raise :class:`ConfigError` listing every violation."""
    overrides = overrides or {}
    errors: list[str] = []
    if not isinstance(doc, dict):
        raise ConfigError(["config must be a JSON object"])
    mode = doc.get("mode")
    if mode is None:
        raise ConfigError(["missing required field 'mode'"])
    if mode not in MODES:
        raise ConfigError([f"mode: must be one of {', '.join(MODES)}"])
    target = None
    if mode in ("monte-carlo", "compare"):
        target = doc.get("target")
        if target is None:
            errors.append("missing required field 'target'")
        elif target not in TARGETS:
            errors.append(f"target: must be one of {', '.join(TARGETS)}")
    kind = {"free-sum": "sum", "free-product": "product", "cdma-sinr": "cdma-sinr",
            "cdma-stieltjes": "cdma"}.get(mode, target)

    measures = scenario = z_grid = snr_grid = None
    if kind in ("sum", "product"):
        if "measures" not in doc:
            errors.append("missing required field 'measures'")
        else:
            measures = _parse_measures(doc["measures"], errors, 2 if kind == "product" else 1)
            if kind == "product" and measures and mode != "free-product" and len(measures) != 2:
                errors.append("measures: monte-carlo products take exactly two factors")
            if kind == "product" and measures and mode != "free-product":
                for i, m in enumerate(measures):
                    if m.locations[0] < 0:
                        errors.append(f"measures[{i}]: Monte Carlo products need nonnegative support")
    if kind in ("cdma", "cdma-sinr"):
        if "scenario" not in doc:
            errors.append("missing required field 'scenario'")
        else:
            scenario = _parse_scenario(doc["scenario"], errors)
    if kind in ("sum", "product", "cdma"):
        if "z_grid" not in doc:
            errors.append("missing required field 'z_grid'")
        else:
            z_grid = _parse_z_grid(doc["z_grid"], errors)
    if kind == "cdma-sinr":
        if "snr_grid" not in doc:
            errors.append("missing required field 'snr_grid'")
        else:
            snr_grid = _parse_snr_grid(doc["snr_grid"], errors)
    solver = _parse_solver(doc.get("solver"), errors)
    mc = _parse_mc(doc.get("mc"), errors, {k: overrides.get(k) for k in ("n", "trials", "seed")})
    out = doc.get("output") or {}
    if not isinstance(out, dict):
        errors.append("output: must be an object")
        out = {}
    fmt = overrides.get("format") or out.get("format", "csv")
    if fmt not in FORMATS:
        errors.append(f"output.format: must be one of {', '.join(FORMATS)}")
    path = overrides.get("output") or out.get("path")
    if errors:
        raise ConfigError(errors)
    return RunConfig(mode, target, measures, scenario, z_grid, snr_grid, solver, mc, path, fmt)


# ---- execution ----

def _status(exc: Exception) -> str:
    if isinstance(exc, NonConvergence):
        return "nonconvergence"
    if isinstance(exc, AmbiguousFixedPoint):
        return "ambiguous"
    return "error"


def _stieltjes_solver(cfg: RunConfig) -> Callable[[list], list]:
    """Grid solver returning one state or exception per point, in grid order."""
    if cfg.mode == "free-product" or cfg.target == "product":
        if len(cfg.measures) > 2:
            def run(zs):
                try:
                    _, states = free_product.solve_product_chain(cfg.measures, zs, cfg=cfg.solver)
                    return states
                except RMTError as exc:
                    return [exc] * len(zs)
            return run
        m1, m2 = cfg.measures
        return lambda zs: free_product.solve_product_grid(m1, m2, zs, cfg.solver, strict=False)
    if cfg.mode == "free-sum" or cfg.target == "sum":
        return lambda zs: free_sum.solve_sum_grid(cfg.measures, zs, cfg.solver, strict=False)
    return lambda zs: cdma.solve_theorem1_grid(cfg.scenario, zs, cfg.solver, strict=False)


def _stieltjes_rows(cfg: RunConfig) -> list[list]:
    rows = []
    for z, s in zip(cfg.z_grid, _stieltjes_solver(cfg)(cfg.z_grid)):
        if isinstance(s, Exception):
            rows.append([z.real, z.imag, math.nan, math.nan, math.nan, getattr(s, "iterations", None) or 0,
                         _status(s)])
        else:
            rows.append([z.real, z.imag, s.g.real, s.g.imag, s.residual, s.iterations, "ok"])
    return rows


def _sinr_rows(cfg: RunConfig) -> list[list]:
    rows = []
    for r in cdma.sinr_sweep(cfg.scenario, cfg.snr_grid, cfg.solver, strict=False):
        rows.append([r.snr_db, r.noise_variance, r.transmitter, r.sinr, r.sinr_db, r.rho.real, r.rho.imag,
                     r.residual, r.iterations, r.status])
    return rows


def _mc_values(cfg: RunConfig) -> np.ndarray:
    n, trials, seed = cfg.mc["n"], cfg.mc["trials"], cfg.mc["seed"]
    zs = np.array(cfg.z_grid)
    if cfg.target == "sum":
        return rmt_lab.mc_sum_stieltjes(cfg.measures, n, zs, trials, seed)
    if cfg.target == "product":
        return rmt_lab.mc_product_stieltjes(cfg.measures[0], cfg.measures[1], n, zs, trials, seed)
    return rmt_lab.mc_cdma_stieltjes(cfg.scenario, n, zs, trials, seed)


def _mc_sinr(cfg: RunConfig):
    noise = [cdma.noise_for_snr(cfg.scenario, s) for s in cfg.snr_grid]
    return noise, rmt_lab.mc_sinr(cfg.scenario, cfg.mc["n"], cfg.mc["trials"], cfg.mc["seed"], noise)


def _db(x: float) -> float:
    return 10.0 * math.log10(x) if x > 0 else -math.inf


def _monte_carlo_rows(cfg: RunConfig) -> list[list]:
    n, trials = cfg.mc["n"], cfg.mc["trials"]
    if cfg.target == "cdma-sinr":
        noise, values = _mc_sinr(cfg)
        return [[snr, s2, j, values[a, j], _db(values[a, j]), n, trials]
                for a, (snr, s2) in enumerate(zip(cfg.snr_grid, noise)) for j in range(cfg.scenario.J)]
    values = _mc_values(cfg)
    return [[z.real, z.imag, g.real, g.imag, n, trials] for z, g in zip(cfg.z_grid, values)]


def _compare_rows(cfg: RunConfig) -> list[list]:
    n, trials = cfg.mc["n"], cfg.mc["trials"]
    if cfg.target == "cdma-sinr":
        solved = cdma.sinr_sweep(cfg.scenario, cfg.snr_grid, cfg.solver, strict=False)
        noise, values = _mc_sinr(cfg)
        rows = []
        for r in solved:
            a = cfg.snr_grid.index(r.snr_db)
            mc_db = _db(values[a, r.transmitter])
            rows.append([r.snr_db, r.noise_variance, r.transmitter, r.sinr_db, mc_db,
                         abs(r.sinr_db - mc_db), n, trials, r.status])
        return rows
    states = _stieltjes_solver(cfg)(cfg.z_grid)
    values = _mc_values(cfg)
    rows = []
    for z, s, g in zip(cfg.z_grid, states, values):
        if isinstance(s, Exception):
            rows.append([z.real, z.imag, math.nan, math.nan, g.real, g.imag, math.nan, n, trials, _status(s)])
        else:
            rows.append([z.real, z.imag, s.g.real, s.g.imag, g.real, g.imag, abs(s.g - g), n, trials, "ok"])
    return rows


def columns_for(cfg: RunConfig) -> list[str]:
    sinr = cfg.mode == "cdma-sinr" or cfg.target == "cdma-sinr"
    if cfg.mode == "monte-carlo":
        return MC_SINR_COLUMNS if sinr else MC_COLUMNS
    if cfg.mode == "compare":
        return COMPARE_SINR_COLUMNS if sinr else COMPARE_COLUMNS
    return SINR_COLUMNS if sinr else STIELTJES_COLUMNS


def execute(cfg: RunConfig) -> tuple[list[str], list[list]]:
    """Run a parsed config; returns the column names and rows in grid order."""
    if cfg.mode in ("free-sum", "free-product", "cdma-stieltjes"):
        rows = _stieltjes_rows(cfg)
    elif cfg.mode == "cdma-sinr":
        rows = _sinr_rows(cfg)
    elif cfg.mode == "monte-carlo":
        rows = _monte_carlo_rows(cfg)
    else:
        rows = _compare_rows(cfg)
    return columns_for(cfg), rows


# ---- output ----

def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def render(columns: list[str], rows: list[list], fmt: str, mode: str) -> str:
    """CSV (header always present, 17 significant digits) or a JSON document."""
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
        return buf.getvalue()

    def clean(v):
        if isinstance(v, str):
            return v
        if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
            return int(v)
        f = float(v)
        return f if math.isfinite(f) else None

    doc = {"mode": mode, "columns": columns, "rows": [[clean(v) for v in row] for row in rows]}
    return json.dumps(doc, indent=2) + "\n"


# ---- entry point ----

def _load(path: str):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rmtkit", description="Random-matrix spectrum and CDMA SINR solver.",
                                epilog=EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a config and write the result table", epilog=EPILOG,
                         formatter_class=argparse.RawDescriptionHelpFormatter)
    run.add_argument("config")
    run.add_argument("--output", help="output path (default: config output.path, else stdout)")
    run.add_argument("--format", choices=FORMATS)
    run.add_argument("--seed", type=int, help="Monte Carlo seed (overrides mc.seed)")
    run.add_argument("--trials", type=int, help="Monte Carlo trials (overrides mc.trials)")
    run.add_argument("--n", type=int, help="Monte Carlo matrix dimension (overrides mc.n)")
    run.add_argument("--quiet", action="store_true", help="suppress progress messages")
    val = sub.add_parser("validate", help="check a config without running it")
    val.add_argument("config")
    val.add_argument("--quiet", action="store_true")
    return p


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)

    def say(msg: str):
        if not args.quiet:
            print(msg, file=sys.stderr)

    try:
        doc = _load(args.config)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: cannot read {args.config}: {exc}", file=sys.stderr)
        return EXIT_SCHEMA

    overrides = {}
    if args.command == "run":
        overrides = {"output": args.output, "format": args.format, "seed": args.seed,
                     "trials": args.trials, "n": args.n}
    try:
        cfg = parse_config(doc, overrides)
    except ConfigError as exc:
        for v in exc.violations:
            print(f"violation: {v}", file=sys.stderr)
        return EXIT_SCHEMA

    if args.command == "validate":
        print("OK")
        return EXIT_OK

    say(f"running {cfg.mode}" + (f" ({cfg.target})" if cfg.target else ""))
    columns, rows = execute(cfg)
    text = render(columns, rows, cfg.output_format, cfg.mode)
    if cfg.output_path:
        with open(cfg.output_path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        say(f"wrote {len(rows)} rows to {cfg.output_path}")
    else:
        sys.stdout.write(text)
    failed = [r for r in rows if columns[-1] == "status" and r[-1] != "ok"]
    if failed:
        print(f"error: {len(failed)} of {len(rows)} rows failed to solve; see the status column", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
