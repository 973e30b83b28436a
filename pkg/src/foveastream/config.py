"""INI-style simulation config.

One section per component config, keys named after the dataclass fields::

    [sim]
    mode = full
    frames = 2000

    [controller]
    c = 120

    [netmon]
    gamma_delay = 100

Sections: ``sim``, ``fsc``, ``fov``, ``foveation``, ``controller``,
``netmon``. Unknown sections or keys are errors, so typos do not silently
fall back to defaults.
"""

from __future__ import annotations

import configparser
import dataclasses
from typing import Any, Dict, Mapping

from .simpipe import SimConfig

# section name -> SimConfig field holding that component's dataclass
SECTIONS = {
    "fsc": "fsc",
    "fov": "fov",
    "foveation": "foveation",
    "controller": "controller",
    "netmon": "netmon",
}
_OPTIONAL_FLOATS = {"sigma_px", "c_reference_width"}


class ConfigError(ValueError):
    pass


def _coerce(key: str, raw: str, default: Any) -> Any:
    raw = raw.strip()
    try:
        if key in _OPTIONAL_FLOATS:
            return None if raw.lower() in ("", "none") else float(raw)
        if key == "feedback_drops":
            return frozenset(int(v) for v in raw.replace(",", " ").split())
        if isinstance(default, bool):
            return configparser.ConfigParser.BOOLEAN_STATES[raw.lower()]
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"bad value for {key}: {raw!r}") from exc
    return raw


def _section_values(name: str, items: Mapping[str, str], target) -> Dict[str, Any]:
    known = {f.name for f in dataclasses.fields(target)}
    out = {}
    for key, raw in items.items():
        if key not in known:
            raise ConfigError(f"[{name}] has no key {key!r}; expected one of {sorted(known)}")
        out[key] = _coerce(key, raw, getattr(target, key))
    return out


def apply_overrides(cfg: SimConfig, sections: Mapping[str, Mapping[str, str]]) -> SimConfig:
    """Return ``cfg`` with string-valued ``{section: {key: value}}`` overrides applied."""
    top: Dict[str, Any] = {}
    for name, items in sections.items():
        if not items:
            continue
        if name == "sim":
            top.update(_section_values(name, items, cfg))
            continue
        if name not in SECTIONS:
            raise ConfigError(f"unknown config section [{name}]")
        sub = getattr(cfg, SECTIONS[name])
        try:
            top[SECTIONS[name]] = dataclasses.replace(sub, **_section_values(name, items, sub))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"[{name}]: {exc}") from exc
    try:
        return dataclasses.replace(cfg, **top)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path, base: SimConfig | None = None) -> SimConfig:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    sections = {name: dict(parser[name]) for name in parser.sections()}
    return apply_overrides(base or SimConfig(), sections)


def _render(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, frozenset):
        return ",".join(str(x) for x in sorted(v))
    return str(getattr(v, "value", v))


def dump_config(cfg: SimConfig) -> str:
    """Render ``cfg`` in the format ``load_config`` reads."""
    sections = {"sim": {f.name: getattr(cfg, f.name) for f in dataclasses.fields(cfg)
                        if f.name not in SECTIONS.values()}}
    for name, attr in SECTIONS.items():
        sub = getattr(cfg, attr)
        sections[name] = {f.name: getattr(sub, f.name) for f in dataclasses.fields(sub)}
    lines = []
    for name, items in sections.items():
        lines.append(f"[{name}]")
        lines.extend(f"{k} = {_render(v)}" for k, v in items.items())
        lines.append("")
    return "\n".join(lines)
