"""Flat ``key = value`` run configuration.

Blank lines and ``#`` comments are ignored; ``[section]`` headers are
accepted and ignored so INI-style files work.  Unknown keys, duplicate
keys and malformed values are reported with their line number.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import ConfigError
from .momentum import FluidParams
from .stepper import SimConfig

# key -> (target, converter); target is "params", "sim" or "run"
_KEYS = {
    "gamma": ("params", float),
    "mu": ("params", float),
    "lambda": ("params", float),
    "a": ("params", float),
    "dt": ("sim", float),
    "T": ("sim", float),
    "couple": ("sim", float),
    "picard_tol": ("sim", float),
    "picard_max": ("sim", int),
    "relaxation": ("sim", float),
    "continuation_steps": ("sim", int),
    "rho_floor": ("sim", float),
    "rho0": ("run", str),
    "force": ("run", str),
    "mesh": ("run", str),
    "unit_square": ("run", int),
}
_RENAME = {"lambda": "lam", "couple": "c_coupling"}


@dataclass
class RunConfig:
    """A parsed file: the simulation config plus data selectors."""

    sim: SimConfig
    rho0: str = "sine"
    force: str = "trig"
    mesh: str | None = None
    unit_square: int | None = None
    echo: dict = field(default_factory=dict)


def _parse_lines(text, source="<config>"):
    values, lines = {}, {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line or (line.startswith("[") and line.endswith("]")):
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in _KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r} (first on line {lines[key]})")
        conv = _KEYS[key][1]
        try:
            values[key] = conv(val)
        except ValueError:
            raise ConfigError(f"{source}:{lineno}: cannot read {key!r} as {conv.__name__}: {val!r}") from None
        lines[key] = lineno
    return values, lines


def _construct(cls, keys, values, lines, source, **extra):
    """Build ``cls`` and blame the first line whose key makes it invalid."""
    kw = {_RENAME.get(k, k): values[k] for k in keys}
    kw.update(extra)
    try:
        return cls(**kw)
    except ConfigError as exc:
        msg = str(exc)
    ordered = sorted(keys, key=lines.get)
    line = None
    for i in range(1, len(ordered) + 1):
        part = {_RENAME.get(k, k): values[k] for k in ordered[:i]}
        part.update({k: v for k, v in extra.items() if k not in part})
        try:
            cls(**part)
        except ConfigError:
            line = lines[ordered[i - 1]]
            break
    raise ConfigError(f"{source}:{line}: {msg}" if line else f"{source}: {msg}") from None


def _build(values, lines, source, coupling=None, default_coupling=None):
    p_keys = [k for k in values if _KEYS[k][0] == "params"]
    params = _construct(FluidParams, p_keys, values, lines, source)
    s_keys = [k for k in values if _KEYS[k][0] == "sim"]
    extra = {"params": params}
    if coupling is not None:
        extra["c_coupling"] = coupling
        s_keys = [k for k in s_keys if k != "couple"]
    elif "couple" not in values and default_coupling is not None:
        extra["c_coupling"] = default_coupling
    if "c_coupling" in extra or "couple" in values:
        # dt follows from the mesh; an explicit dt in the file is superseded
        s_keys = [k for k in s_keys if k != "dt"]
        extra["dt"] = None
    sim = _construct(SimConfig, s_keys, values, lines, source, **extra)
    run = {k: values[k] for k in values if _KEYS[k][0] == "run"}
    if "mesh" in run and "unit_square" in run:
        line = max(lines["mesh"], lines["unit_square"])
        raise ConfigError(f"{source}:{line}: give either 'mesh' or 'unit_square', not both")
    return RunConfig(sim=sim, echo=dict(values), **run)


def parse_config_text(text, source="<config>", coupling=None, default_coupling=None) -> RunConfig:
    """Parse configuration text.

    ``coupling`` overrides any time step in the text with ``dt = c h``;
    ``default_coupling`` does the same unless the text sets ``couple``.
    """
    values, lines = _parse_lines(text, source)
    return _build(values, lines, source, coupling, default_coupling)


def read_config(path, coupling=None, default_coupling=None) -> RunConfig:
    """Parse a configuration file including its data selectors."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    return parse_config_text(text, str(path), coupling, default_coupling)


def parse_config(path) -> SimConfig:
    """Parse and validate a configuration file into a :class:`SimConfig`."""
    return read_config(path).sim
