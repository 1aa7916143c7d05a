"""
Command-line front end.

    shinzettl spectrum --config configs/delta_minus2.json --radius 10 --out results
    shinzettl verify-all --seed 0

Every command writes a JSON report (and a CSV table for --format csv|both)
and returns an exit code: 0 success, 2 validation error, 3 numerical
failure, 4 expectation mismatch.
"""
import argparse
import logging
import sys
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd

from shinzettl.analysis import (FamilyMember, accretivity_scan, default_family, form_value,
                                green_identity_residual, kernel_growth_test)
from shinzettl.cauchy import make_cauchy_data, quasiderivatives, solve_cauchy, system_residual
from shinzettl.corpus import corpus_table, get_entry, verify_all
from shinzettl.exceptions import ConfigError, NumericalError, ValidationError
from shinzettl.potential import adjoint_potential, load_potential, potential_from_dict, read_json
from shinzettl.reports import FORMATS, make_report, write_report
from shinzettl.spectral import TruncatedProblem, contraction_test, initial_vector, truncated_eigenvalues

logger = logging.getLogger(__name__)

COMMANDS = ("solve", "spectrum", "form", "scan", "green-check", "kernel-growth", "semigroup", "corpus",
            "verify-all")
INITIAL_KINDS = ("exp_decay", "gaussian", "random")
DEFAULT_WINDOW = (-2.0, -0.05)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3
EXIT_MISMATCH = 4


@dataclass(frozen=True)
class ExperimentConfig:
    """
    A validated experiment. ``potential`` is already resolved from the
    inline object, ``potential_file`` or ``corpus_entry``; every other field
    left as None takes the command's default.
    """

    potential: Optional[object] = None
    potential_source: str = ""
    corpus_entry: Optional[str] = None
    lam: complex = 0j
    x0: Optional[float] = None
    c0: Optional[tuple] = None
    c1: Optional[tuple] = None
    interval: Optional[tuple] = None
    adjoint: bool = False
    rtol: Optional[float] = None
    atol: Optional[float] = None
    tol: Optional[float] = None
    radius: Optional[float] = None
    window: Optional[tuple] = None
    grid: Optional[int] = None
    fd_points: Optional[int] = None
    shift: Optional[float] = None
    n_max: Optional[int] = None
    dt: Optional[float] = None
    steps: Optional[int] = None
    draws: Optional[int] = None
    initial: Optional[str] = None
    test_function: Optional[FamilyMember] = None
    seed: int = 0
    out_dir: str = "results"
    name: Optional[str] = None
    format: str = "json"


CONFIG_KEYS = ("potential", "potential_file", "corpus_entry", "lambda", "x0", "c0", "c1", "interval", "adjoint",
               "rtol", "atol", "tol", "radius", "window", "grid", "fd_points", "shift", "n_max", "dt", "steps",
               "draws", "initial", "test_function", "seed", "output")
_OUTPUT_KEYS = {"dir", "name", "format"}
_TEST_FUNCTION_KEYS = {"kind", "center", "scale", "direction", "power", "lambda"}


# Field validation

def _is_number(value):
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _real(value, name):
    if not _is_number(value) or not np.isfinite(value):
        raise ConfigError(f"Field '{name}' must be a finite number, got {value!r}.")
    return float(value)


def _positive(value, name):
    value = _real(value, name)
    if value <= 0:
        raise ConfigError(f"Field '{name}' must be positive, got {value}.")
    return value


def _integer(value, name, minimum):
    if not isinstance(value, int) or isinstance(value, bool) or value < minimum:
        raise ConfigError(f"Field '{name}' must be an integer >= {minimum}, got {value!r}.")
    return value


def _complex(value, name):
    """A number or an [re, im] pair."""
    if _is_number(value):
        return complex(_real(value, name))
    if isinstance(value, list) and len(value) == 2:
        return complex(_real(value[0], name), _real(value[1], name))
    raise ConfigError(f"Field '{name}' must be a number or an [re, im] pair, got {value!r}.")


def _vector(value, name):
    if not isinstance(value, list) or not value:
        raise ConfigError(f"Field '{name}' must be a non-empty list of numbers or [re, im] pairs.")
    return tuple(_complex(v, f"{name}[{i}]") for i, v in enumerate(value))


def _interval(value, name):
    if not isinstance(value, list) or len(value) != 2:
        raise ConfigError(f"Field '{name}' must be a pair [a, b].")
    a, b = _real(value[0], name), _real(value[1], name)
    if not a < b:
        raise ConfigError(f"Field '{name}' must satisfy a < b, got [{a}, {b}].")
    return a, b


def _window(value, name="window"):
    if not isinstance(value, list) or len(value) not in (2, 4):
        raise ConfigError(f"Field '{name}' must be [a, b] or [re_lo, re_hi, im_lo, im_hi].")
    window = tuple(_real(v, name) for v in value)
    if not window[0] < window[1] or (len(window) == 4 and window[2] > window[3]):
        raise ConfigError(f"Field '{name}' is an empty rectangle: {list(window)}.")
    return window


def _test_function(value):
    if not isinstance(value, dict):
        raise ConfigError("Field 'test_function' must be an object.")
    unknown = sorted(set(value) - _TEST_FUNCTION_KEYS)
    if unknown:
        raise ConfigError(f"Unknown key(s) {unknown} in 'test_function'.")
    try:
        return FamilyMember(
            kind=value.get("kind", "hat"),
            center=_real(value.get("center", 0.0), "test_function.center"),
            scale=_positive(value.get("scale", 1.0), "test_function.scale"),
            direction=_vector(value["direction"], "test_function.direction") if "direction" in value else None,
            power=_integer(value.get("power", 0), "test_function.power", 0),
            lam=_complex(value.get("lambda", 0.0), "test_function.lambda"),
        )
    except ConfigError:
        raise
    except ValidationError as e:
        raise ConfigError(f"Field 'test_function': {e}")


def _output(value):
    if not isinstance(value, dict):
        raise ConfigError("Field 'output' must be an object with optional 'dir', 'name', 'format'.")
    unknown = sorted(set(value) - _OUTPUT_KEYS)
    if unknown:
        raise ConfigError(f"Unknown key(s) {unknown} in 'output'.")
    out = {}
    if "dir" in value:
        out["out_dir"] = str(value["dir"])
    if "name" in value:
        out["name"] = str(value["name"])
    if "format" in value:
        if value["format"] not in FORMATS:
            raise ConfigError(f"Field 'output.format' must be one of {list(FORMATS)}, got {value['format']!r}.")
        out["format"] = value["format"]
    return out


def _potential(raw, base_dir):
    sources = [k for k in ("potential", "potential_file", "corpus_entry") if k in raw]
    if len(sources) > 1:
        raise ConfigError(f"Fields {sources} are mutually exclusive; give exactly one potential source.")
    if not sources:
        return {}
    key = sources[0]
    if key == "potential":
        return {"potential": potential_from_dict(raw["potential"]), "potential_source": "inline"}
    if key == "potential_file":
        path = Path(raw["potential_file"])
        if not path.is_absolute():
            path = base_dir / path
        if not path.is_file():
            raise ConfigError(f"Field 'potential_file': {path} does not exist.")
        return {"potential": load_potential(path), "potential_source": str(raw["potential_file"])}
    try:
        entry = get_entry(raw["corpus_entry"])
    except ValidationError as e:
        raise ConfigError(f"Field 'corpus_entry': {e}")
    return {"potential": entry.potential, "potential_source": f"corpus:{entry.name}", "corpus_entry": entry.name}


def config_from_dict(raw, base_dir=Path(".")):
    """Strict validation of an experiment config object."""
    if not isinstance(raw, dict):
        raise ConfigError("An experiment config must be a JSON object.")
    unknown = sorted(set(raw) - set(CONFIG_KEYS))
    if unknown:
        raise ConfigError(f"Unknown config key(s) {unknown}. Allowed: {list(CONFIG_KEYS)}.")

    values = _potential(raw, Path(base_dir))
    if "lambda" in raw:
        values["lam"] = _complex(raw["lambda"], "lambda")
    if "x0" in raw:
        values["x0"] = _real(raw["x0"], "x0")
    for key in ("c0", "c1"):
        if key in raw:
            values[key] = _vector(raw[key], key)
    if "interval" in raw:
        values["interval"] = _interval(raw["interval"], "interval")
    if "adjoint" in raw:
        if not isinstance(raw["adjoint"], bool):
            raise ConfigError(f"Field 'adjoint' must be true or false, got {raw['adjoint']!r}.")
        values["adjoint"] = raw["adjoint"]
    for key in ("rtol", "atol", "tol", "radius", "dt"):
        if key in raw:
            values[key] = _positive(raw[key], key)
    if "shift" in raw:
        values["shift"] = _real(raw["shift"], "shift")
    if "window" in raw:
        values["window"] = _window(raw["window"])
    for key, minimum in (("grid", 2), ("fd_points", 16), ("n_max", 2), ("steps", 1), ("draws", 0), ("seed", 0)):
        if key in raw:
            values[key] = _integer(raw[key], key, minimum)
    if "initial" in raw:
        if raw["initial"] not in INITIAL_KINDS:
            raise ConfigError(f"Field 'initial' must be one of {list(INITIAL_KINDS)}, got {raw['initial']!r}.")
        values["initial"] = raw["initial"]
    if "test_function" in raw:
        values["test_function"] = _test_function(raw["test_function"])
    if "output" in raw:
        values.update(_output(raw["output"]))

    config = ExperimentConfig(**values)
    m = None if config.potential is None else config.potential.m
    for key in ("c0", "c1"):
        vec = getattr(config, key)
        if vec is not None and m is not None and len(vec) != m:
            raise ConfigError(f"Field '{key}' must have m={m} entries, got {len(vec)}.")
    return config


def load_config(path):
    """Read and validate an experiment config; parse errors carry line and column."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"Config file {path} does not exist.")
    config = config_from_dict(read_json(path), base_dir=path.parent)
    logger.debug("Loaded experiment config from %s", path)
    return config


# Commands

def _require_potential(config):
    if config.potential is None:
        raise ValidationError("This command needs a potential: set 'potential', 'potential_file' or "
                              "'corpus_entry' in the config, or pass --entry.")
    return config.potential


def _cmd_solve(config):
    p = _require_potential(config)
    interval = config.interval or (-1.0, 1.0)
    data = None
    if config.c0 is not None or config.c1 is not None or config.x0 is not None:
        data = make_cauchy_data(interval[0] if config.x0 is None else config.x0,
                                config.c0 if config.c0 is not None else np.ones(p.m),
                                config.c1 if config.c1 is not None else np.zeros(p.m), p.m)
    sol = solve_cauchy(p, config.adjoint, config.lam, data, interval=interval, rtol=config.rtol, atol=config.atol)
    xs = np.linspace(interval[0], interval[1], config.grid or 201)
    ends = {}
    for label, x in (("left", interval[0]), ("right", interval[1])):
        ends[label] = {"x": x, **quasiderivatives(sol, x)._asdict()}
    result = {
        "interval": interval,
        "lambda": sol.lam,
        "adjoint": sol.adjoint,
        "x0": sol.data.x0,
        "n_steps": sol.n_steps,
        "discontinuities": sol.discontinuities(),
        "endpoints": ends,
        "system_residual": system_residual(sol),
    }
    return result, sol.to_frame(xs), True


def _cmd_spectrum(config):
    p = _require_potential(config)
    tp = TruncatedProblem(p, config.radius or 10.0, config.window or DEFAULT_WINDOW, rtol=config.rtol,
                          atol=config.atol, grid=config.grid)
    report = truncated_eigenvalues(tp, root_tol=config.tol, oracle=config.fd_points is not None,
                                   fd_points=config.fd_points)
    frame = pd.DataFrame([{"re": e.value.real, "im": e.value.imag, "residual": e.residual,
                           "multiplicity": e.multiplicity} for e in report.eigenvalues],
                         columns=["re", "im", "residual", "multiplicity"])
    return report, frame, True


def _cmd_form(config):
    p = _require_potential(config)
    member = config.test_function or FamilyMember("hat", 0.0, 1.0, None)
    if member.direction is None:
        member = replace(member, direction=tuple(np.eye(p.m, dtype=complex)[0]))
    result = {"test_function": member}
    for operator, target in (("l", p), ("l+", adjoint_potential(p))):
        report = form_value(target, member.build(target))
        result[operator] = {"value": report.value, "real_part": report.real_part, "error": report.error,
                            **report.breakdown}
    frame = pd.DataFrame([{"operator": op, "re": result[op]["value"].real, "im": result[op]["value"].imag}
                          for op in ("l", "l+")])
    return result, frame, True


def _cmd_scan(config):
    p = _require_potential(config)
    family = default_family(p, config.seed, config.draws or 0)
    report = accretivity_scan(p, family, tol=config.tol, progress=True)
    result = {
        "minimum": report.minimum,
        "operator": report.operator,
        "witness": report.witness,
        "witness_value": report.witness_value,
        "negative": report.negative,
        "evidence": report.evidence,
        "minimum_l": report.minimum_for("l"),
        "minimum_l+": report.minimum_for("l+"),
        "members": len(family),
    }
    frame = pd.DataFrame([{"operator": e.operator, "kind": e.member.kind, "center": e.member.center,
                           "scale": e.member.scale, "power": e.member.power, "re": e.value.real,
                           "im": e.value.imag} for e in report.entries])
    return result, frame, True


def _cmd_green_check(config):
    p = _require_potential(config)
    a, b = config.interval or (-3.0, 3.0)
    tol = config.tol or 1e-7
    rng = np.random.default_rng(config.seed)
    m = p.m
    rows = []
    for k in range(config.draws or 10):
        data_u = make_cauchy_data(0.5 * (a + b), rng.normal(size=m) + 1j * rng.normal(size=m),
                                  rng.normal(size=m) + 1j * rng.normal(size=m))
        data_v = make_cauchy_data(0.5 * (a + b), rng.normal(size=m) + 1j * rng.normal(size=m),
                                  rng.normal(size=m) + 1j * rng.normal(size=m))
        lam_u = complex(rng.uniform(-2, 2), rng.uniform(-1, 1))
        lam_v = complex(rng.uniform(-2, 2), rng.uniform(-1, 1))
        lo, hi = sorted(rng.uniform(a, b, size=2))
        u = solve_cauchy(p, False, lam_u, data_u, interval=(a, b), rtol=config.rtol, atol=config.atol)
        v = solve_cauchy(p, True, lam_v, data_v, interval=(a, b), rtol=config.rtol, atol=config.atol)
        residual = green_identity_residual(u, v, float(lo), float(hi))
        rows.append({"draw": k, "a": float(lo), "b": float(hi), "residual": residual})
    frame = pd.DataFrame(rows, columns=["draw", "a", "b", "residual"])
    worst = float(frame["residual"].max()) if rows else 0.0
    result = {"tolerance": tol, "max_residual": worst, "draws": rows}
    return result, frame, worst <= tol


def _cmd_kernel_growth(config):
    p = _require_potential(config)
    report = kernel_growth_test(p, -1.0 if config.shift is None else config.shift, config.n_max or 30,
                                config.draws, config.seed, rtol=config.rtol, atol=config.atol, progress=True)
    result = {"shift": report.shift, "n_max": report.n_max, "bound": report.bound,
              "trivial_kernel_evidence": report.trivial_kernel_evidence, "directions": report.directions}
    rows = []
    for d in report.directions:
        for n, (ratio, ring) in enumerate(zip(d.ratios, d.ring_masses), start=1):
            rows.append({"direction": d.label, "verdict": d.verdict, "n": n, "ratio": ratio, "ring_mass": ring})
    return result, pd.DataFrame(rows, columns=["direction", "verdict", "n", "ratio", "ring_mass"]), True


def _cmd_semigroup(config):
    p = _require_potential(config)
    tp = TruncatedProblem(p, config.radius or 10.0)
    points = config.fd_points or 199
    u0 = initial_vector(tp, points, config.initial or "gaussian", config.seed)
    report = contraction_test(tp, u0, config.dt or 0.01, config.steps or 200)
    result = {"radius": tp.radius, "points": points, "dt": report.dt, "max_ratio": report.max_ratio,
              "nonincreasing": report.nonincreasing, "min_hermitian_eigenvalue": report.min_hermitian_eigenvalue,
              "accretive_discretization": report.accretive_discretization, "norms": report.norms,
              "ratios": report.ratios}
    frame = pd.DataFrame({"step": np.arange(len(report.norms)), "norm": report.norms})
    return result, frame, True


def _cmd_corpus(config):
    table = corpus_table()
    return {"entries": table}, table, True


def _cmd_verify_all(config):
    entries = None if config.corpus_entry is None else [get_entry(config.corpus_entry)]
    results = verify_all(config.seed, entries, progress=True)
    failed = [f"{r.entry}/{r.check}" for r in results if not r.passed]
    frame = pd.DataFrame([{"entry": r.entry, "check": r.check, "provenance": r.provenance, "passed": r.passed,
                           "detail": r.detail} for r in results])
    result = {"checks": len(results), "failed": failed, "results": results}
    return result, frame, not failed


_HANDLERS = {
    "solve": _cmd_solve,
    "spectrum": _cmd_spectrum,
    "form": _cmd_form,
    "scan": _cmd_scan,
    "green-check": _cmd_green_check,
    "kernel-growth": _cmd_kernel_growth,
    "semigroup": _cmd_semigroup,
    "corpus": _cmd_corpus,
    "verify-all": _cmd_verify_all,
}


def _summary(command, status, result):
    if isinstance(result, dict) and "failed" in result:
        return f"{command}: {status} ({result['checks']} checks, {len(result['failed'])} failed)"
    return f"{command}: {status}"


def run(command, config):
    """Run one command, write its artifacts and return the exit code."""
    if command not in _HANDLERS:
        raise ValidationError(f"Unknown command '{command}'. Must be one of {list(COMMANDS)}.")
    name = config.name or command
    frame = None
    try:
        result, frame, passed = _HANDLERS[command](config)
        status, error, code = ("ok", None, EXIT_OK) if passed else ("mismatch", None, EXIT_MISMATCH)
    except ValidationError as e:
        logger.error("%s: %s", command, e)
        result, status, error, code = None, "failed", str(e), EXIT_VALIDATION
    except NumericalError as e:
        logger.error("%s: numerical failure: %s", command, e)
        result, status, error, code = None, "failed", f"{type(e).__name__}: {e}", EXIT_NUMERICAL

    report = make_report(command, status, result, error)
    write_report(report, config.out_dir, name, config.format, frame)
    if frame is not None and code == EXIT_OK and command in ("corpus", "spectrum", "verify-all"):
        print(frame.to_string(index=False))
    print(_summary(command, status, result))
    return code


# Flags

def _parse_window(text):
    try:
        values = [float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"--window expects comma-separated numbers, got '{text}'.")
    if len(values) not in (2, 4):
        raise argparse.ArgumentTypeError(f"--window expects a,b or a,b,c,d, got {len(values)} values.")
    return values


def build_parser():
    parser = argparse.ArgumentParser(prog="shinzettl",
                                     description="Matrix Schrodinger operators with distributional potentials.")
    parser.add_argument("command", choices=COMMANDS, help="Experiment to run")
    parser.add_argument("--config", type=str, help="Experiment config (JSON)")
    parser.add_argument("--out", type=str, help="Output directory for reports")
    parser.add_argument("--seed", type=int, help="Random seed for scan families and random draws")
    parser.add_argument("--tol", type=float, help="Root, accretivity or residual tolerance of the command")
    parser.add_argument("--radius", type=float, help="Truncation radius R")
    parser.add_argument("--window", type=_parse_window, help="Search window a,b or re_lo,re_hi,im_lo,im_hi")
    parser.add_argument("--format", choices=FORMATS, help="Report format")
    parser.add_argument("--entry", type=str, help="Corpus entry to use as the potential")
    parser.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"],
                        help="Logging level")
    return parser


def apply_flags(config, args):
    """Flags override the config file."""
    raw = {}
    if args.entry is not None:
        raw["corpus_entry"] = args.entry
    if args.seed is not None:
        raw["seed"] = args.seed
    for key in ("tol", "radius"):
        if getattr(args, key) is not None:
            raw[key] = getattr(args, key)
    if args.window is not None:
        raw["window"] = args.window
    flagged = config_from_dict(raw)
    updates = {key: getattr(flagged, key) for key in ("seed", "tol", "radius", "window") if key in raw}
    if args.entry is not None:
        updates.update(potential=flagged.potential, potential_source=flagged.potential_source,
                       corpus_entry=flagged.corpus_entry)
    if args.out is not None:
        updates["out_dir"] = args.out
    if args.format is not None:
        updates["format"] = args.format
    return replace(config, **updates)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        config = load_config(args.config) if args.config else ExperimentConfig()
        config = apply_flags(config, args)
    except ValidationError as e:
        logger.error("Invalid configuration: %s", e)
        report = make_report(args.command, "failed", None, str(e))
        write_report(report, args.out or "results", args.command, args.format or "json")
        print(f"{args.command}: failed ({e})")
        return EXIT_VALIDATION
    return run(args.command, config)


if __name__ == "__main__":
    sys.exit(main())
