"""Configuration management for the debt-cycle pipeline."""

import logging
import os
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Union

from dotenv import dotenv_values, load_dotenv
from pydantic import ValidationError

from debt_cycles.errors import DebtCyclesError
from debt_cycles.estimation.covariates import default_window_specs
from debt_cycles.schemas import RunConfig, WindowSpec

# Load environment variables from .env file
load_dotenv()

LOG_LEVEL_ENV = "DEBT_CYCLES_LOG_LEVEL"
COVARIATE_PREFIX = "COVARIATE_"

# Config-file key -> RunConfig field
_KEYS = {
    "PANEL": "panel",
    "GROUPS": "groups_path",
    "HORIZON": "horizon",
    "GROUP": "group",
    "WINDOW": "association_window",
    "EXTREMA_WINDOW": "extrema_window",
    "MIN_PHASE": "min_phase",
    "MIN_CYCLE": "min_cycle",
    "MODELS": "models",
    "OUT": "out_dir",
    "FORMAT": "output_format",
    "SEED": "seed",
    "RESTARTS": "restarts",
    "MAX_ITER": "max_iter",
    "INTERACTION_GROUP": "interaction_group",
    "PCA_COMPONENTS": "pca_components",
    "ALLOWED_GROUPS": "allowed_groups",
}
_LIST_FIELDS = {"models", "allowed_groups"}


def get_log_level() -> int:
    """
    Get the logging level from the environment.

    Returns:
        A ``logging`` level number; INFO when the variable is unset.

    Raises:
        ValueError: If DEBT_CYCLES_LOG_LEVEL names no logging level.
    """
    name = os.getenv(LOG_LEVEL_ENV, "INFO").strip().upper()
    level = logging.getLevelName(name)
    if not isinstance(level, int):
        raise ValueError(f"{LOG_LEVEL_ENV}={name!r} is not a logging level")
    return level


def parse_window_spec(name: str, text: str) -> WindowSpec:
    """Parse ``direction:n_quarters:statistic:variable`` into a WindowSpec."""
    parts = [p.strip() for p in text.split(":")]
    if len(parts) != 4:
        raise DebtCyclesError(
            f"{COVARIATE_PREFIX}{name.upper()}={text!r}: "
            "expected direction:n_quarters:statistic:variable"
        )
    direction, n_quarters, statistic, variable = parts
    try:
        return WindowSpec(
            name=name.lower(),
            variable=variable,
            n_quarters=int(n_quarters),
            direction=direction,  # type: ignore[arg-type]
            statistic=statistic,  # type: ignore[arg-type]
        )
    except (ValueError, ValidationError) as e:
        raise DebtCyclesError(f"{COVARIATE_PREFIX}{name.upper()}={text!r}: {e}") from e


def _split(value: Any) -> List[str]:
    if isinstance(value, str):
        return [item.strip() for item in value.split(",") if item.strip()]
    return list(value)


def _from_file(path: Union[str, Path]) -> Dict[str, Any]:
    if not Path(path).is_file():
        raise DebtCyclesError(f"config file not found: {path}")
    fields: Dict[str, Any] = {}
    windows: Dict[str, WindowSpec] = {}
    for key, value in dotenv_values(path).items():
        key = key.upper()
        if value is None or value == "":
            continue
        if key.startswith(COVARIATE_PREFIX):
            spec = parse_window_spec(key[len(COVARIATE_PREFIX) :], value)
            windows[spec.name] = spec
        elif key in _KEYS:
            fields[_KEYS[key]] = value
        else:
            raise DebtCyclesError(f"{path}: unknown configuration key {key}")
    if windows:
        fields["covariate_windows"] = windows
    return fields


def load_run_config(
    config_path: Optional[Union[str, Path]] = None,
    overrides: Optional[Mapping[str, Any]] = None,
) -> RunConfig:
    """
    Merge defaults, an optional KEY=VALUE file and command-line overrides.

    Covariate windows from the file replace defaults of the same name and add
    new ones. Overrides whose value is None are ignored.

    Args:
        config_path: Flat configuration file read with python-dotenv.
        overrides: RunConfig field -> value, typically from CLI flags.

    Returns:
        The validated RunConfig.

    Raises:
        DebtCyclesError: On unknown keys, malformed values or a missing file.
    """
    merged: Dict[str, Any] = {}
    windows = {spec.name: spec for spec in default_window_specs()}
    if config_path is not None:
        from_file = _from_file(config_path)
        windows.update(from_file.pop("covariate_windows", {}))
        merged.update(from_file)
    merged.update({k: v for k, v in (overrides or {}).items() if v is not None})
    for name in _LIST_FIELDS & merged.keys():
        merged[name] = _split(merged[name])
    merged["covariate_windows"] = list(windows.values())
    try:
        return RunConfig(**merged)
    except ValidationError as e:
        raise DebtCyclesError(f"invalid configuration: {e}") from e
