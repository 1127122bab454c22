"""TOML experiment configuration.

Four sections are recognised and every key is optional::

    [crystal]   gamma, phi1, chi, phi_a, phi_b, eta1, eta2, herald_port
    [homodyne]  eta
    [run]       samples, blocks, seed, output, workers, chunk
    [grid]      start, stop, points, endpoint

Unknown sections or keys raise :class:`ConfigError`. Angles (and the grid
bounds) accept plain numbers or short arithmetic strings in ``pi`` such as
``"0.3*pi"`` or ``"pi/2"``.
"""

from __future__ import annotations

import ast
import math
import operator
from dataclasses import replace
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .experiment import ConfigError, ExperimentConfig, PhiGrid
from .source import CrystalParams

ANGLE_KEYS = {"phi1", "chi", "phi_a", "phi_b", "start", "stop"}
SCHEMA = {
    "crystal": {"gamma": float, "phi1": float, "chi": float, "phi_a": float, "phi_b": float,
                "eta1": float, "eta2": float, "herald_port": str},
    "homodyne": {"eta": float},
    "run": {"samples": int, "blocks": int, "seed": int, "output": str, "workers": int, "chunk": int},
    "grid": {"start": float, "stop": float, "points": int, "endpoint": bool},
}

_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul, ast.Div: operator.truediv}


def parse_angle(value) -> float:
    """Number, or an arithmetic string over numeric literals and ``pi``."""
    if isinstance(value, bool):
        raise ConfigError(f"expected an angle, got {value!r}")
    if isinstance(value, (int, float)):
        return float(value)
    if not isinstance(value, str):
        raise ConfigError(f"expected an angle, got {value!r}")

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) and not isinstance(node.value, bool):
            return float(node.value)
        if isinstance(node, ast.Name) and node.id == "pi":
            return math.pi
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            v = ev(node.operand)
            return -v if isinstance(node.op, ast.USub) else v
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](ev(node.left), ev(node.right))
        raise ConfigError(f"cannot parse angle {value!r}")

    try:
        return ev(ast.parse(value.strip(), mode="eval"))
    except (SyntaxError, ZeroDivisionError) as exc:
        raise ConfigError(f"cannot parse angle {value!r}") from exc


def _coerce(section: str, key: str, value):
    kind = SCHEMA[section][key]
    if key in ANGLE_KEYS:
        return parse_angle(value)
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"[{section}] {key} must be a number, got {value!r}")
        return float(value)
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"[{section}] {key} must be an integer, got {value!r}")
        return value
    if not isinstance(value, kind):
        raise ConfigError(f"[{section}] {key} must be {kind.__name__}, got {value!r}")
    return value


def config_from_dict(data: dict) -> ExperimentConfig:
    sections = {}
    for name, body in data.items():
        if name not in SCHEMA:
            raise ConfigError(f"unknown config section [{name}]")
        if not isinstance(body, dict):
            raise ConfigError(f"[{name}] must be a table")
        for key in body:
            if key not in SCHEMA[name]:
                raise ConfigError(f"unknown key '{key}' in [{name}]")
        sections[name] = {k: _coerce(name, k, v) for k, v in body.items()}
    try:
        crystal = CrystalParams(**sections.get("crystal", {}))
        grid = PhiGrid(**sections.get("grid", {}))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    run = dict(sections.get("run", {}))
    if "output" in run:
        run["output"] = Path(run["output"])
    return ExperimentConfig(crystal=crystal, grid=grid, **sections.get("homodyne", {}), **run)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        with path.open("rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {path}: {exc}") from exc
    return config_from_dict(data)


def with_overrides(config: ExperimentConfig, seed=None, samples=None, output=None) -> ExperimentConfig:
    """Copy of ``config`` with command-line overrides, re-validated."""
    changes = {}
    if seed is not None:
        changes["seed"] = seed
    if samples is not None:
        changes["samples"] = samples
    if output is not None:
        changes["output"] = Path(output)
    return replace(config, **changes) if changes else config
