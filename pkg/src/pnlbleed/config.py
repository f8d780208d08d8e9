"""Strict YAML run configuration.

A config file looks like::

    experiment: meta-cva
    output_dir: results/meta
    mc:
      n_paths: 100000
      n_steps: 1000
      seed: 2024
    params:
      rho_lambda_S: 0.9

Unknown keys anywhere are rejected with the offending line number.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .montecarlo import MonteCarloConfig
from .rng import MAX_SEED

TOP_LEVEL_KEYS = ("experiment", "params", "mc", "output_dir")
MC_KEYS = ("n_paths", "n_steps", "seed", "antithetic")
DEFAULT_MC = {"n_paths": 100_000, "n_steps": 1000, "seed": 2024, "antithetic": False}


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None, source: str | None = None):
        self.line = line
        self.source = source
        where = f"{source or '<config>'}:{line}" if line is not None else (source or "<config>")
        super().__init__(f"{where}: {message}")


@dataclass(frozen=True)
class RunConfig:
    experiment: str
    params: dict
    mc: MonteCarloConfig
    output_dir: Path | None = None
    source: str | None = field(default=None, compare=False)


def _node_for(root, path):
    node = root
    for key in path:
        if not isinstance(node, yaml.MappingNode):
            return None
        for k, v in node.value:
            if k.value == key:
                node = v
                break
        else:
            return None
    return node


def _key_line(root, path) -> int | None:
    """1-based line of the key at ``path`` (a tuple of mapping keys)."""
    parent = _node_for(root, path[:-1]) if len(path) > 1 else root
    if isinstance(parent, yaml.MappingNode):
        for k, _ in parent.value:
            if k.value == path[-1]:
                return k.start_mark.line + 1
    return None


def _as_float(value, name, line, source):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"'{name}' must be a number, got {value!r}", line, source)
    return float(value)


def _coerce_param(name, value, default, line, source):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"'{name}' must be true or false", line, source)
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"'{name}' must be an integer, got {value!r}", line, source)
        return value
    if isinstance(default, (list, tuple)):
        if not isinstance(value, list) or not value:
            raise ConfigError(f"'{name}' must be a non-empty list of numbers", line, source)
        return [_as_float(v, name, line, source) for v in value]
    return _as_float(value, name, line, source)


def parse_config(text: str, defaults_for, source: str | None = None) -> RunConfig:
    """Parse and validate config text.

    ``defaults_for(name)`` returns the default parameter dict of an
    experiment, or raises ``KeyError`` for unknown names.
    """
    try:
        root = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark is not None else None
        problem = getattr(exc, "problem", None) or str(exc)
        raise ConfigError(f"malformed YAML: {problem}", line, source) from exc
    if not isinstance(data, dict):
        raise ConfigError("top level must be a mapping", 1, source)

    for key in data:
        if key not in TOP_LEVEL_KEYS:
            raise ConfigError(f"unknown top-level key '{key}'", _key_line(root, (key,)), source)
    if "experiment" not in data:
        raise ConfigError("missing required key 'experiment'", None, source)
    name = data["experiment"]
    try:
        defaults = defaults_for(name)
    except KeyError:
        raise ConfigError(f"unknown experiment {name!r}",
                          _key_line(root, ("experiment",)), source) from None

    raw_params = data.get("params") or {}
    if not isinstance(raw_params, dict):
        raise ConfigError("'params' must be a mapping", _key_line(root, ("params",)), source)
    params = dict(defaults)
    for key, value in raw_params.items():
        line = _key_line(root, ("params", key))
        if key not in defaults:
            raise ConfigError(f"unknown parameter '{key}' for experiment {name!r}", line, source)
        params[key] = _coerce_param(key, value, defaults[key], line, source)

    raw_mc = data.get("mc") or {}
    if not isinstance(raw_mc, dict):
        raise ConfigError("'mc' must be a mapping", _key_line(root, ("mc",)), source)
    mc = dict(DEFAULT_MC)
    for key, value in raw_mc.items():
        line = _key_line(root, ("mc", key))
        if key not in MC_KEYS:
            raise ConfigError(f"unknown mc key '{key}'", line, source)
        if key == "antithetic":
            if not isinstance(value, bool):
                raise ConfigError("'antithetic' must be true or false", line, source)
        elif isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"'{key}' must be an integer, got {value!r}", line, source)
        elif key == "seed" and not 0 <= value <= MAX_SEED:
            raise ConfigError("seed must be an unsigned 64-bit integer", line, source)
        elif key != "seed" and value < 1:
            raise ConfigError(f"'{key}' must be at least 1", line, source)
        mc[key] = value
    try:
        mc_cfg = MonteCarloConfig(**mc)
    except ValueError as exc:
        raise ConfigError(str(exc), _key_line(root, ("mc",)), source) from exc

    output_dir = data.get("output_dir")
    if output_dir is not None and not isinstance(output_dir, str):
        raise ConfigError("'output_dir' must be a string", _key_line(root, ("output_dir",)),
                          source)
    return RunConfig(name, params, mc_cfg, Path(output_dir) if output_dir else None, source)


def load_config(path, defaults_for) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", None, str(path)) from exc
    return parse_config(text, defaults_for, source=str(path))
