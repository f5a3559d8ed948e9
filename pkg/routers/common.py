"""Config loading and error mapping shared by every subcommand."""
import functools
import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, Optional

import click
import yaml
from pydantic import ValidationError

from db.session import DatasetSession
from geometry.sonar_model import load_intrinsics
from models.errors import ConfigError, SonarKitError
from models.schemas import RunConfig, SonarIntrinsics

logger = logging.getLogger(__name__)


def _validation_message(err: ValidationError) -> str:
    if not err.errors():
        return "Invalid configuration"
    first = err.errors()[0]
    where = ".".join(str(p) for p in first.get("loc", ()))
    msg = first.get("msg", "Invalid configuration")
    return f"{where}: {msg}" if where else msg


def read_config_file(path: Optional[str]) -> Dict[str, Any]:
    if not path:
        return {}
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"Cannot read config {p}: {exc}") from exc
    try:
        doc = yaml.safe_load(text) if p.suffix.lower() in (".yaml", ".yml") else json.loads(text)
    except (yaml.YAMLError, json.JSONDecodeError) as exc:
        raise ConfigError(f"Cannot parse config {p}: {exc}") from exc
    if doc is None:
        return {}
    if not isinstance(doc, dict):
        raise ConfigError(f"Config {p} must hold a mapping at the top level.")
    return doc


def _set(doc: Dict[str, Any], dotted: str, value: Any) -> None:
    node = doc
    *parents, leaf = dotted.split(".")
    for key in parents:
        child = node.get(key)
        if not isinstance(child, dict):
            child = {}
            node[key] = child
        node = child
    node[leaf] = value


def load_run_config(config_path: Optional[str], overrides: Dict[str, Any]) -> RunConfig:
    """File values first, then every non-None flag; the run seed is pushed into the nested seeds."""
    doc = read_config_file(config_path)
    for dotted, value in overrides.items():
        if value is not None:
            _set(doc, dotted, value)
    try:
        cfg = RunConfig.model_validate(doc)
    except ValidationError as err:
        raise ConfigError(_validation_message(err)) from err
    return cfg.model_copy(
        update={
            "noise": cfg.noise.model_copy(update={"seed": cfg.seed}),
            "encoder": cfg.encoder.model_copy(update={"seed": cfg.seed}),
            "train": cfg.train.model_copy(update={"seed": cfg.seed}),
        }
    )


def require(value: Optional[str], flag: str) -> str:
    if not value:
        raise ConfigError(f"{flag} is required (flag or config file).")
    return value


def _intrinsics_mismatch(expected: SonarIntrinsics, found: SonarIntrinsics) -> Optional[str]:
    want, have = expected.to_document(), found.to_document()
    for key, value in want.items():
        if not math.isclose(value, have[key], rel_tol=1e-9, abs_tol=1e-12):
            return f"{key} {have[key]:g} (expected {value:g})"
    return None


def open_dataset(cfg: RunConfig) -> DatasetSession:
    """The dataset of the run; an explicit `intrinsics` must match the one it was generated with."""
    session = DatasetSession(require(cfg.dataset, "--dataset"))
    if cfg.intrinsics:
        expected = load_intrinsics(cfg.intrinsics)
        found = session.intrinsics
        if found is None:
            raise ConfigError(f"Dataset {session.root} records no intrinsics to check --intrinsics {cfg.intrinsics} against.")
        mismatch = _intrinsics_mismatch(expected, found)
        if mismatch:
            raise ConfigError(f"--intrinsics {cfg.intrinsics} does not match dataset {session.root}: {mismatch}.")
    return session


def coam_flag(value: Optional[str]) -> Optional[bool]:
    return None if value is None else value == "on"


def common_options(fn):
    """--config, --seed, --jobs and --intrinsics."""
    fn = click.option("--intrinsics", default=None, help="Preset name or path to an intrinsics JSON document.")(fn)
    fn = click.option("--jobs", type=int, default=None, help="Worker threads for pair-level work.")(fn)
    fn = click.option("--seed", type=int, default=None, help="Run seed; every random stream derives from it.")(fn)
    fn = click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None, help="JSON or YAML run config.")(fn)
    return fn


def handle_errors(fn):
    """Turn toolkit and validation errors into a one-line ClickException."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except SonarKitError as exc:
            logger.debug("Command failed", exc_info=True)
            raise click.ClickException(str(exc)) from exc
        except ValidationError as err:
            raise click.ClickException(_validation_message(err)) from err

    return wrapper
