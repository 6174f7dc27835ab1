# tgmm_lab/utils/io.py
import datetime
import json
import os
from datetime import timezone
from pathlib import Path
from typing import Any, Union

from ..errors import DataError

PathLike = Union[str, os.PathLike]


def utc_stamp() -> str:
    return datetime.datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%SZ")


def ensure_dir(p: PathLike) -> Path:
    path = Path(p)
    path.mkdir(parents=True, exist_ok=True)
    return path


def save_json(obj: Any, path: PathLike) -> Path:
    """Write JSON deterministically: sorted keys, 2-space indent, trailing newline."""
    path = Path(path)
    ensure_dir(path.parent)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(obj, f, indent=2, sort_keys=True, ensure_ascii=False)
        f.write("\n")
    return path


def load_json(path: PathLike) -> Any:
    path = Path(path)
    if not path.exists():
        raise DataError(f"file not found: {path}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise DataError(f"invalid JSON in {path}: {e}") from e
    except OSError as e:
        raise DataError(f"cannot read {path}: {e.strerror or e}") from e


def require_dir(p: PathLike, what: str = "directory") -> Path:
    path = Path(p)
    if not path.is_dir():
        raise DataError(f"{what} not found: {path}")
    return path
