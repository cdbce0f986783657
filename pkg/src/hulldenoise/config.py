"""Sectioned key=value experiment configs, validated against a fixed schema.

Errors name the offending line so a config can be fixed without guessing.
"""
from __future__ import annotations

import configparser
import math
import re
from dataclasses import dataclass
from typing import Any, Callable


def _float_list(text: str) -> list[float]:
    return [float(v) for v in re.split(r"[,\s]+", text.strip()) if v]


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _opt(conv: Callable) -> Callable:
    def parse(text: str):
        return None if text.strip().lower() in ("", "none", "auto") else conv(text)
    return parse


def _positive(v):
    return v is None or v > 0


def _nonneg(v):
    return v >= 0


def _choice(*options):
    def check(v):
        return v in options
    return check


@dataclass(frozen=True)
class Key:
    parse: Callable[[str], Any]
    default: Any
    check: Callable[[Any], bool] | None = None
    hint: str = ""


SCHEMA: dict[str, dict[str, Key]] = {
    "data": {
        "manifold": Key(str, "ellipse", _choice("ellipse", "hypocycloid", "circle"),
                        "ellipse, hypocycloid or circle"),
        "ambient_dim": Key(int, 2, lambda v: v >= 2, ">= 2"),
        "a": Key(float, 1.0, _positive, "> 0"),
        "n_cusps": Key(int, 5, lambda v: v >= 3, ">= 3"),
        "radius": Key(float, 1.0, _positive, "> 0"),
        "n0": Key(int, 5000, lambda v: v > 0, "> 0"),
        "n1": Key(int, 10000, lambda v: v > 0, "> 0"),
        "n": Key(int, 20000, lambda v: v > 0, "> 0"),
        "sigma": Key(float, 0.2, _nonneg, ">= 0"),
        "seed": Key(int, 0, _nonneg, ">= 0"),
    },
    "denoise": {
        "dataset": Key(_opt(str), None),
        "eps0": Key(float, 0.5, lambda v: 0 < v <= 2, "in (0, 2]"),
        "eps": Key(float, 0.1, _positive, "> 0"),
        "alpha": Key(float, 0.05, lambda v: 0 < v < 1, "in (0, 1)"),
        "eta": Key(float, 0.1, lambda v: 0 < v < 1, "in (0, 1)"),
        "delta": Key(_opt(float), None, _positive, "> 0"),
        "D": Key(_opt(int), None, _positive, ">= 1"),
        "d": Key(int, 1, lambda v: v >= 1, ">= 1"),
        "c_M": Key(float, 0.15, lambda v: 0 < v <= 1 / math.e, "in (0, 1/e]"),
        "provider": Key(str, "statistical", _choice("statistical", "exact"), "statistical or exact"),
        "mesh": Key(_opt(float), None, lambda v: v is None or 0 < v <= 2, "in (0, 2]"),
        "net_constant": Key(float, 1.0, _positive, "> 0"),
        "d_star": Key(_opt(float), None, _positive, "> 0"),
        "C_radius": Key(float, 2.0, _positive, "> 0"),
        "C_bias": Key(float, 1.0, _positive, "> 0"),
        "C_J": Key(float, 1.0, _positive, "> 0"),
        "gamma": Key(float, 3.0, _nonneg, ">= 0"),
        "A": Key(float, 1.0, _positive, "> 0"),
        "C_d": Key(float, 1.0, _positive, "> 0"),
        "failure_tolerance": Key(float, 0.01, lambda v: 0 <= v <= 1, "in [0, 1]"),
        "net_cap": Key(int, 10_000_000, lambda v: v > 0, "> 0"),
        "measure_exact": Key(_bool, True),
    },
    "hypocycloid": {
        "source": Key(str, "cusp", _choice("cusp", "near-cusp", "mid-arc"), "cusp, near-cusp or mid-arc"),
        "sigmas": Key(_float_list, [0.3, 0.5, 1.0, 10.0], lambda v: len(v) > 0 and min(v) > 0,
                      "non-empty list of positive values"),
        "count": Key(int, 10000, lambda v: v > 0, "> 0"),
        "bins": Key(int, 720, lambda v: v > 0, "> 0"),
        "a": Key(float, 1.0, _positive, "> 0"),
        "n_cusps": Key(int, 5, lambda v: v >= 3, ">= 3"),
        "vertex_window": Key(float, 0.1, _positive, "> 0"),
        "seed": Key(int, 0, _nonneg, ">= 0"),
    },
    "oracle_eval": {
        "dataset": Key(_opt(str), None),
        "hyperplanes": Key(_opt(str), None),
        "queries": Key(int, 50, lambda v: v > 0, "> 0"),
        "max_distance": Key(float, 1.0, _nonneg, ">= 0"),
        "deltas": Key(_float_list, [0.05], lambda v: len(v) > 0 and min(v) > 0,
                      "non-empty list of positive values"),
        "d": Key(int, 1, lambda v: v >= 1, ">= 1"),
        "c_M": Key(float, 0.15, lambda v: 0 < v <= 1 / math.e, "in (0, 1/e]"),
        "grid": Key(int, 4096, lambda v: v >= 8, ">= 8"),
        "seed": Key(int, 0, _nonneg, ">= 0"),
    },
    "cryoem": {
        "k": Key(int, 3, _choice(2, 3), "2 or 3"),
        "n_pix": Key(int, 16, lambda v: v >= 1, ">= 1"),
        "density": Key(str, "default", _choice("default", "radial"), "default or radial"),
        "count": Key(int, 3000, lambda v: v > 0, "> 0"),
        "n0": Key(int, 500, lambda v: v > 0, "> 0"),
        "n1": Key(int, 1500, lambda v: v > 0, "> 0"),
        "sigma_rel": Key(float, 0.1, _nonneg, ">= 0"),
        "D": Key(int, 3, lambda v: v >= 1, ">= 1"),
        "mesh": Key(float, 0.1, lambda v: 0 < v <= 2, "in (0, 2]"),
        "delta": Key(float, 0.05, _positive, "> 0"),
        "provider": Key(str, "exact", _choice("statistical", "exact"), "statistical or exact"),
        "c_M": Key(float, 0.15, lambda v: 0 < v <= 1 / math.e, "in (0, 1/e]"),
        "seed": Key(int, 0, _nonneg, ">= 0"),
    },
    "bounds": {
        "n": Key(int, 2, lambda v: v >= 1, ">= 1"),
        "D": Key(_opt(int), None, _positive, ">= 1"),
        "d": Key(int, 1, lambda v: v >= 1, ">= 1"),
        "sigma": Key(float, 0.2, lambda v: 0 < v <= 1, "in (0, 1]"),
        "c_M": Key(float, 0.15, lambda v: 0 < v <= 1 / math.e, "in (0, 1/e]"),
        "eps0": Key(float, 0.5, lambda v: 0 < v <= 2, "in (0, 2]"),
        "eps": Key(float, 0.1, _positive, "> 0"),
        "alpha": Key(float, 0.05, lambda v: 0 < v < 1, "in (0, 1)"),
        "eta": Key(float, 0.1, lambda v: 0 < v < 1, "in (0, 1)"),
        "delta": Key(float, 0.05, _positive, "> 0"),
        "N0": Key(int, 5000, lambda v: v > 0, "> 0"),
        "gamma": Key(float, 3.0, _nonneg, ">= 0"),
        "tau": Key(float, 0.25, _positive, "> 0"),
        "volume": Key(float, 4.844, _positive, "> 0"),
        "C_radius": Key(float, 2.0, _positive, "> 0"),
        "C_bias": Key(float, 1.0, _positive, "> 0"),
        "C_J": Key(float, 1.0, _positive, "> 0"),
        "A": Key(float, 1.0, _positive, "> 0"),
        "C_d": Key(float, 1.0, _positive, "> 0"),
    },
}


class Config:
    """Validated view of a config file: cfg.section('data') -> dict with defaults filled."""

    def __init__(self, values: dict[str, dict[str, Any]], path: str | None = None):
        self.values = values
        self.path = path

    def section(self, name: str) -> dict[str, Any]:
        out = {k: key.default for k, key in SCHEMA[name].items()}
        out.update(self.values.get(name, {}))
        # lists are mutable defaults; hand out copies
        return {k: (list(v) if isinstance(v, list) else v) for k, v in out.items()}

    def has_section(self, name: str) -> bool:
        return name in self.values


def _line_index(text: str) -> dict[tuple[str | None, str | None], int]:
    """Line number of each section header and each key, for error messages."""
    index = {}
    section = None
    for num, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line[0] in "#;":
            continue
        m = re.match(r"\[([^\]]+)\]", line)
        if m:
            section = m.group(1).strip()
            index.setdefault((section, None), num)
            continue
        m = re.match(r"([^=:\s][^=:]*?)\s*[=:]", line)
        if m:
            index.setdefault((section, m.group(1).strip()), num)
    return index


def parse_config(text: str, path: str = "<config>") -> Config:
    from .errors import ConfigError

    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str  # keys are case-sensitive (D vs d)
    try:
        parser.read_string(text, source=path)
    except configparser.Error as exc:
        lineno = getattr(exc, "lineno", None)
        where = f"{path}:{lineno}" if lineno else path
        raise ConfigError(f"{where}: {exc.message if hasattr(exc, 'message') else exc}") from exc
    lines = _line_index(text)
    values: dict[str, dict[str, Any]] = {}
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(f"{path}:{lines.get((section, None), '?')}: unknown section [{section}]; "
                              f"expected one of {', '.join(SCHEMA)}")
        values[section] = {}
        for key, raw in parser.items(section):
            line = lines.get((section, key), "?")
            spec = SCHEMA[section].get(key)
            if spec is None:
                raise ConfigError(f"{path}:{line}: unknown key {key!r} in [{section}]")
            try:
                value = spec.parse(raw)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"{path}:{line}: [{section}] {key} = {raw!r}: {exc}") from exc
            if spec.check is not None and value is not None and not spec.check(value):
                raise ConfigError(f"{path}:{line}: [{section}] {key} = {raw!r} must be {spec.hint}")
            values[section][key] = value
    return Config(values, path)


def load_config(path: str | None) -> Config:
    if path is None:
        return Config({})
    from .errors import ConfigError

    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, path)
