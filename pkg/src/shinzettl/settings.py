import json
import logging
from dataclasses import dataclass, fields
from pathlib import Path

from shinzettl.exceptions import ConfigError

logger = logging.getLogger(__name__)

DEFAULT_CONFIG_PATH = Path(__file__).with_name("solver_config.json")


@dataclass(frozen=True)
class Settings:
    """Numerical defaults. Every keyword left as ``None`` by a caller falls back to these."""

    rtol: float
    atol: float
    max_steps: int
    blowup_threshold: float
    max_degree: int
    extension: str
    quad_epsabs: float
    quad_epsrel: float
    quad_limit: int
    quad_refinements: int
    root_tol: float
    scan_points: int
    scan_rtol: float
    scan_atol: float
    complex_grid: int
    newton_step: float
    newton_maxiter: int
    renormalize_every: float
    accretivity_tol: float
    kernel_random_draws: int
    fd_dense_limit: int
    fd_eigs_k: int


def load_config(file_path=DEFAULT_CONFIG_PATH):
    """
    Load the solver defaults from a JSON file.

    Unknown and missing keys are both rejected so that a typo never silently
    falls back to a default.
    """
    with open(file_path, "r") as file:
        raw = json.load(file)

    expected = {f.name for f in fields(Settings)}
    unknown = sorted(set(raw) - expected)
    missing = sorted(expected - set(raw))
    if unknown:
        raise ConfigError(f"Unknown solver setting(s) {unknown} in {file_path}.")
    if missing:
        raise ConfigError(f"Missing solver setting(s) {missing} in {file_path}.")
    for key in ("rtol", "atol", "quad_epsabs", "root_tol", "newton_step", "renormalize_every"):
        if raw[key] <= 0:
            raise ConfigError(f"Solver setting '{key}' must be positive, got {raw[key]}.")
    if raw["extension"] not in ("constant", "zero"):
        raise ConfigError(f"Solver setting 'extension' must be 'constant' or 'zero', got {raw['extension']!r}.")

    logger.debug("Loaded solver settings from %s", file_path)
    return Settings(**raw)


_settings = None


def get_settings():
    global _settings
    if _settings is None:
        _settings = load_config()
    return _settings


def pick(value, name):
    """Return ``value`` unless it is None, in which case the configured default."""
    return getattr(get_settings(), name) if value is None else value
