"""Flat key-value training config files (INI syntax, keys addressed as ``section.key``).

Example::

    [train]
    steps = 200
    seed = 3

    [ablation]
    map2style = wmsa
    window_sizes = 8, 8, 8, 8
"""
import configparser
import dataclasses
import typing
from typing import Dict

from .trainer import TrainConfig

_BOOL = {"1": True, "yes": True, "true": True, "on": True,
         "0": False, "no": False, "false": False, "off": False}


class ConfigError(ValueError):
    pass


def config_fields() -> Dict[str, dataclasses.Field]:
    """Dotted key -> dataclass field."""
    return {f"{f.metadata['section']}.{f.name}": f for f in dataclasses.fields(TrainConfig)}


def _convert(key, raw, ftype):
    raw = raw.strip()
    try:
        if ftype is bool:
            if raw.lower() not in _BOOL:
                raise ValueError(f"not a boolean: {raw!r}")
            return _BOOL[raw.lower()]
        if ftype is int:
            return int(raw)
        if ftype is float:
            return float(raw)
        if ftype is str:
            return raw
        if typing.get_origin(ftype) in (list, typing.List):
            (inner,) = typing.get_args(ftype)
            return [inner(v) for v in raw.replace(",", " ").split()]
    except ValueError as e:
        raise ConfigError(f"bad value for {key}: {e}") from e
    raise ConfigError(f"unsupported type for {key}")


def parse_config_text(text: str) -> TrainConfig:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as e:
        raise ConfigError(f"malformed config: {e}") from e
    fields = config_fields()
    hints = typing.get_type_hints(TrainConfig)
    values, unknown = {}, []
    for section in parser.sections():
        for key, raw in parser.items(section):
            dotted = f"{section}.{key}"
            if dotted not in fields:
                unknown.append(dotted)
                continue
            name = fields[dotted].name
            values[name] = _convert(dotted, raw, hints[name])
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    try:
        return TrainConfig(**values)
    except ValueError as e:
        raise ConfigError(str(e)) from e


def load_config(path: str) -> TrainConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as e:
        raise OSError(f"cannot read config {path}: {e}") from e
    return parse_config_text(text)


def dump_config(cfg: TrainConfig) -> str:
    sections: Dict[str, list] = {}
    for f in dataclasses.fields(cfg):
        v = getattr(cfg, f.name)
        if isinstance(v, list):
            v = ", ".join(str(i) for i in v)
        sections.setdefault(f.metadata["section"], []).append(f"{f.name} = {v}")
    return "\n".join(f"[{s}]\n" + "\n".join(lines) + "\n" for s, lines in sections.items())
