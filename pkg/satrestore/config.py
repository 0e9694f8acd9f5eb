import hashlib
import json
import os
import sys
from dataclasses import fields, replace
from pathlib import Path
from typing import Any, Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from satrestore.degradations import parse_spec
from satrestore.errors import ConfigError, DegradationError
from satrestore.models import RunConfig

_DEFAULT_CONFIG_PATH = Path("config.toml")
_ENV_FILE_NAME = "satrestore.env"

# Environment variable -> RunConfig field
_ENV_VARS = {
    "SATRESTORE_OUTPUT_ROOT": "output_dir",
    "SATRESTORE_SEED": "seed",
}

_NORMS = ("none", "instance")


def load(path: Path = _DEFAULT_CONFIG_PATH, overrides: list[str] | None = None) -> RunConfig:
    """
    Load a run config from flat TOML, overlay the environment, then CLI overrides.

    The file is a list of `key = value` lines; every key must be a RunConfig field.
    Relative image and output paths are resolved against the config file's directory.
    """
    path = Path(path)
    try:
        with open(path, "rb") as f:
            raw = tomllib.load(f)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None

    for key in ("reference", "distorted", "ground_truth", "output_dir"):
        if isinstance(raw.get(key), str):
            raw[key] = str((path.parent / raw[key]).resolve())

    _load_env(path.parent / _ENV_FILE_NAME, raw)
    raw.update(parse_overrides(overrides or []))
    return validate_config(from_dict(raw))


def _load_env(env_path: Path, raw: dict) -> None:
    """
    Parse a .env-style file and inject known variables into the raw config.

    Shell environment variables take precedence over the file.
    """
    if env_path.exists():
        with open(env_path) as f:
            for line in f:
                line = line.strip()
                if not line or line.startswith("#") or "=" not in line:
                    continue
                key, _, value = line.partition("=")
                key = key.strip()
                value = value.strip().strip('"').strip("'")
                if key not in os.environ:
                    os.environ[key] = value

    _apply_env_vars(raw)


def _apply_env_vars(raw: dict) -> None:
    for var, key in _ENV_VARS.items():
        if not (v := os.environ.get(var)):
            continue
        if key == "seed":
            try:
                v = int(v)
            except ValueError:
                raise ConfigError(f"{var} must be an integer, got {v!r}") from None
        raw[key] = v


def parse_overrides(items: list[str]) -> dict[str, Any]:
    """Parse `key=value` strings using TOML value syntax; bare words become strings."""
    out = {}
    for item in items:
        if "=" not in item:
            raise ConfigError(f"override '{item}' is not of the form key=value")
        key, _, value = item.partition("=")
        key = key.strip()
        try:
            out[key] = tomllib.loads(f"v = {value.strip()}")["v"]
        except tomllib.TOMLDecodeError:
            out[key] = value.strip()
    return out


def from_dict(raw: dict[str, Any]) -> RunConfig:
    known = {f.name: f for f in fields(RunConfig)}
    unknown = sorted(set(raw) - set(known))
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")

    values = {}
    for key, value in raw.items():
        expected = known[key].type
        if expected is float and isinstance(value, int) and not isinstance(value, bool):
            value = float(value)
        elif expected is int and (not isinstance(value, int) or isinstance(value, bool)):
            raise ConfigError(f"{key} must be an integer, got {value!r}")
        elif expected is float and not isinstance(value, float):
            raise ConfigError(f"{key} must be a number, got {value!r}")
        elif expected == Optional[str] and value is not None and not isinstance(value, str):
            raise ConfigError(f"{key} must be a string, got {value!r}")
        elif expected is str and not isinstance(value, str):
            raise ConfigError(f"{key} must be a string, got {value!r}")
        values[key] = value
    return RunConfig(**values)


def validate_config(cfg: RunConfig) -> RunConfig:
    """Return cfg unchanged if every field holds its constraint, else raise for the first one."""
    checks = [
        ("lambda_adv", cfg.lambda_adv >= 0, "must be ≥ 0"),
        ("lambda_reg", cfg.lambda_reg >= 0, "must be ≥ 0"),
        ("lambda_dcy", cfg.lambda_dcy >= 0, "must be ≥ 0"),
        ("lambda_rcy", cfg.lambda_rcy >= 0, "must be ≥ 0"),
        ("n_alpha", cfg.n_alpha >= 1, "must be ≥ 1"),
        ("alpha_scale", cfg.alpha_scale > 0, "must be > 0"),
        ("ddn_iterations", cfg.ddn_iterations >= 0, "must be ≥ 0"),
        ("restore_epochs", cfg.restore_epochs >= 1, "must be ≥ 1"),
        ("learning_rate", cfg.learning_rate > 0, "must be > 0"),
        ("adam_beta1", 0 < cfg.adam_beta1 < 1, "must lie in (0, 1)"),
        ("adam_beta2", 0 < cfg.adam_beta2 < 1, "must lie in (0, 1)"),
        ("patch_size", cfg.patch_size >= 1, "must be ≥ 1"),
        ("base_width", cfg.base_width >= 1, "must be ≥ 1"),
        ("depth", cfg.depth >= 1, "must be ≥ 1"),
        ("distortion_norm", cfg.distortion_norm in _NORMS, f"must be one of {_NORMS}"),
        ("checkpoint_every", cfg.checkpoint_every >= 1, "must be ≥ 1"),
        ("log_every", cfg.log_every >= 1, "must be ≥ 1"),
        ("offset_y", cfg.offset_y >= 0, "must be ≥ 0"),
        ("offset_x", cfg.offset_x >= 0, "must be ≥ 0"),
    ]
    for key, ok, constraint in checks:
        if not ok:
            raise ConfigError(f"{key} {constraint}")

    if cfg.patch_size % cfg.downsample:
        raise ConfigError(
            f"patch_size must be divisible by 2**depth = {cfg.downsample}, got {cfg.patch_size}"
        )
    # instance norm on the content latent needs more than one spatial element
    if cfg.patch_size // cfg.downsample < 2:
        raise ConfigError(
            f"patch_size must be at least {2 * cfg.downsample} for depth {cfg.depth}, "
            f"got {cfg.patch_size}"
        )

    try:
        parse_spec(cfg.degrade, seed=cfg.seed)
    except DegradationError as exc:
        raise ConfigError(f"degrade: {exc}") from None
    return cfg


def with_overrides(cfg: RunConfig, **changes) -> RunConfig:
    return validate_config(replace(cfg, **changes))


def require_path(cfg: RunConfig, key: str) -> Path:
    """Return the image path stored under `key`, raising a ConfigError naming the field."""
    value = getattr(cfg, key)
    if not value:
        raise ConfigError(f"{key}: no path configured")
    path = Path(value)
    if not path.exists():
        raise ConfigError(f"{key}: file not found: {path}")
    return path


def get_output_dir(cfg: RunConfig) -> Path:
    return Path(cfg.output_dir)


def config_hash(cfg: RunConfig) -> str:
    canonical = json.dumps(cfg.as_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()
