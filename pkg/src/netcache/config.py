"""YAML config loading with line-numbered diagnostics."""

from __future__ import annotations

import hashlib
from pathlib import Path
from typing import Any

import yaml

from .errors import ConfigError


def load_config(path: str | Path) -> dict[str, Any]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"{path}: cannot read config: {e.strerror or e}") from None
    return parse_config(text, str(path))


def parse_config(text: str, name: str = "<config>") -> dict[str, Any]:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        where = f"{name}:{mark.line + 1}:{mark.column + 1}" if mark else name
        problem = getattr(e, "problem", None) or str(e)
        raise ConfigError(f"{where}: {problem}") from None
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{name}: top level must be a mapping")
    return data


def dump_config(data: dict[str, Any]) -> str:
    return yaml.safe_dump(data, sort_keys=False, default_flow_style=False)


def digest_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def digest_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class Fields:
    """Typed accessor over one config mapping that names the offending key on error."""

    def __init__(self, data: Any, where: str):
        if not isinstance(data, dict):
            raise ConfigError(f"{where}: expected a mapping")
        self.data = data
        self.where = where
        self.used: set[str] = set()

    def _get(self, key, default, required):
        self.used.add(key)
        if key not in self.data:
            if required:
                raise ConfigError(f"{self.where}.{key}: required field missing")
            return default
        return self.data[key]

    def num(self, key, default=None, required=False) -> float:
        v = self._get(key, default, required)
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"{self.where}.{key}: expected a number, got {v!r}")
        return float(v)

    def int(self, key, default=None, required=False) -> int:
        v = self._get(key, default, required)
        if isinstance(v, bool) or not isinstance(v, int):
            if isinstance(v, float) and v.is_integer():
                return int(v)
            raise ConfigError(f"{self.where}.{key}: expected an integer, got {v!r}")
        return v

    def str(self, key, default=None, required=False) -> str:
        v = self._get(key, default, required)
        if not isinstance(v, str):
            raise ConfigError(f"{self.where}.{key}: expected a string, got {v!r}")
        return v

    def raw(self, key, default=None, required=False):
        return self._get(key, default, required)

    def finish(self) -> None:
        unknown = sorted(set(self.data) - self.used)
        if unknown:
            raise ConfigError(f"{self.where}: unknown field(s) {', '.join(map(str, unknown))}")
