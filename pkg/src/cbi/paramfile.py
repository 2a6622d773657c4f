"""Parameter files (TOML or JSON) and small formatting helpers for reports."""
from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path
from typing import Any

import numpy as np
import tomli
import tomli_w

from .params import RawParams, StructureError, params_from_dict, params_to_dict

__all__ = ["load_mapping", "load_params", "dump_params", "file_sha256", "parse_vector", "to_jsonable"]


def load_mapping(path: str | Path) -> dict[str, Any]:
    """Read a ``.toml`` or ``.json`` file; anything else is read as TOML."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise StructureError(f"cannot read {path}: {exc.strerror or exc}") from exc
    try:
        if path.suffix.lower() == ".json":
            return json.loads(raw)
        return tomli.loads(raw.decode("utf-8"))
    except (tomli.TOMLDecodeError, json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise StructureError(f"cannot parse {path}: {exc}") from exc


def load_params(path: str | Path, validated: bool = True) -> RawParams:
    return params_from_dict(load_mapping(path), validated=validated)


def dump_params(p: RawParams, path: str | Path, extra: dict[str, Any] | None = None) -> None:
    obj = params_to_dict(p)
    if extra:
        obj.update(extra)
    path = Path(path)
    if path.suffix.lower() == ".json":
        path.write_text(json.dumps(obj, indent=2) + "\n")
    else:
        path.write_text(tomli_w.dumps(obj))


def file_sha256(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def parse_vector(text: str) -> np.ndarray:
    """``"1,2.5"`` -> ``array([1., 2.5])``."""
    try:
        return np.array([float(v) for v in text.split(",") if v.strip()], dtype=float)
    except ValueError as exc:
        raise StructureError(f"bad vector {text!r}: {exc}") from exc


def to_jsonable(obj: Any) -> Any:
    """Arrays to lists and non-finite floats to strings, recursively."""
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    return obj
