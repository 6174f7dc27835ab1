# tgmm_lab/utils/config.py
"""
Configuration helpers.

- .env support through python-dotenv (loaded once, at import)
- environment defaults: TGMM_SEED, TGMM_THREADS, TGMM_RUNS_DIR
- JSON config files with sections {data, model, lstm, train}
- precedence merge: CLI flag > config file > environment > built-in default
"""

import dataclasses
import os
from typing import Any, Dict, Mapping, Optional, Type, TypeVar

from ..errors import ConfigError
from .io import PathLike, load_json

try:
    from dotenv import load_dotenv
    load_dotenv()
except Exception:
    pass

CONFIG_SECTIONS = ("data", "model", "lstm", "train")

T = TypeVar("T")


def env_int(name: str, default: int) -> int:
    raw = os.getenv(name, "")
    if not raw.strip():
        return default
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"environment variable {name} must be an integer, got {raw!r}")


def env_flag(name: str) -> bool:
    return os.getenv(name, "").lower() in ("1", "true", "yes")


def default_seed() -> int:
    return env_int("TGMM_SEED", 0)


def default_threads() -> int:
    return env_int("TGMM_THREADS", 1)


def runs_dir() -> str:
    return os.getenv("TGMM_RUNS_DIR", "runs") or "runs"


def load_config_file(path: Optional[PathLike]) -> Dict[str, Dict[str, Any]]:
    """Read a JSON config file; returns {} sections when path is None."""
    sections: Dict[str, Dict[str, Any]] = {s: {} for s in CONFIG_SECTIONS}
    if path is None:
        return sections
    raw = load_json(path)
    if not isinstance(raw, dict):
        raise ConfigError(f"config {path} must be a JSON object")
    for key, value in raw.items():
        if key not in CONFIG_SECTIONS:
            raise ConfigError(f"unknown config section {key!r} in {path}; expected one of {list(CONFIG_SECTIONS)}")
        if not isinstance(value, dict):
            raise ConfigError(f"config section {key!r} in {path} must be an object")
        sections[key] = dict(value)
    return sections


def merge_layers(*layers: Optional[Mapping[str, Any]]) -> Dict[str, Any]:
    """Later layers win; None values never override."""
    out: Dict[str, Any] = {}
    for layer in layers:
        if not layer:
            continue
        for k, v in layer.items():
            if v is not None:
                out[k] = v
    return out


def build_dataclass(cls: Type[T], values: Mapping[str, Any], section: str = "") -> T:
    """Instantiate a config dataclass, rejecting unknown keys."""
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(values) - names)
    if unknown:
        where = f" in section {section!r}" if section else ""
        raise ConfigError(f"unknown config keys{where}: {unknown}")
    kwargs = {}
    for f in dataclasses.fields(cls):
        if f.name in values:
            v = values[f.name]
            # JSON has no tuples
            if isinstance(v, list) and isinstance(f.default, tuple):
                v = tuple(v)
            kwargs[f.name] = v
    try:
        return cls(**kwargs)
    except (ValueError, TypeError) as e:
        where = f" [{section}]" if section else ""
        raise ConfigError(f"invalid config{where}: {e}") from e


def to_dict(cfg: Any) -> Dict[str, Any]:
    d = dataclasses.asdict(cfg)
    return {k: (list(v) if isinstance(v, tuple) else v) for k, v in d.items()}
