"""INI run configuration with a fixed schema.

Every key has a type and either a default or is required; unknown
sections and keys are rejected.  Errors carry the file name and line of
the offending entry.  A default of ``None`` means "use the library
default" (the dataclass default of the matching training config).
"""
from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Optional, Tuple

KINDS = ("train-discrete", "train-selectivity-only", "train-continuous", "eval", "plan", "decompose",
         "q-transfer")
REQUIRED = object()


class ConfigError(ValueError):
    """Invalid configuration; the CLI maps it to exit status 2."""


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _opt(conv: Callable[[str], Any]) -> Callable[[str], Any]:
    def parse(text: str):
        return None if text.strip().lower() in ("", "none") else conv(text)
    parse.__name__ = f"optional {conv.__name__}"
    return parse


Schema = Dict[str, Dict[str, Tuple[Callable[[str], Any], Any]]]

SCHEMA: Schema = {
    "run": {"seed": (int, 0), "steps": (_opt(int), None), "checkpoint_every": (int, 5000),
            "flush_every": (int, 100)},
    "env": {"kind": (str, REQUIRED), "seed": (int, 0), "slip": (float, 0.0), "sprite_source": (str, "builtin"),
            "idx_images": (_opt(str), None), "idx_labels": (_opt(str), None), "maze_blocks": (int, 4)},
    "discrete": {"n_features": (_opt(int), None), "lam": (_opt(float), None), "lr_f": (_opt(float), None),
                 "lr_g": (_opt(float), None), "lr_k": (_opt(float), None), "batch": (_opt(int), None),
                 "selectivity": (str, "directed"), "log_numerator": (str, "directed"),
                 "baseline_decay": (_opt(float), None)},
    "continuous": {"n_features": (_opt(int), None), "n_phi": (_opt(int), None), "batch": (_opt(int), None),
                   "lam": (_opt(float), None), "lr": (_opt(float), None), "selector": (_opt(str), None),
                   "sigma": (_opt(float), None), "sigma_every": (_opt(int), None),
                   "sigma_freeze": (_opt(int), None), "sigma_scale": (_opt(float), None),
                   "w_max": (_opt(float), None), "min_behavior_prob": (_opt(float), None),
                   "baseline_decay": (_opt(float), None), "denominator_grad": (_opt(str), None),
                   "entropy": (_opt(float), None), "explore": (_opt(float), None),
                   "noise": (_opt(str), None)},
    "eval": {"checkpoint": (_opt(str), None), "samples": (int, 1000), "n_bases": (int, 20),
             "radius": (_opt(float), None), "pairs": (int, 50), "max_distance": (int, 5)},
    "q_transfer": {"mode": (str, "pretrained-frozen"), "checkpoint": (_opt(str), None),
                   "episodes": (_opt(int), None), "step_cap": (_opt(int), None), "gamma": (_opt(float), None),
                   "eps_start": (_opt(float), None), "eps_end": (_opt(float), None),
                   "lr_head": (_opt(float), None), "lr_encoder": (_opt(float), None),
                   "goal_x": (int, 0), "goal_y": (int, 0)},
}


@dataclass
class RunConfig:
    kind: str
    values: Dict[str, Dict[str, Any]]
    source: str = "<defaults>"
    lines: Dict[str, int] = field(default_factory=dict)

    @property
    def seed(self) -> int:
        return self.values["run"]["seed"]

    def section(self, name: str) -> Dict[str, Any]:
        return dict(self.values[name])

    def given(self, name: str) -> Dict[str, Any]:
        """Entries of a section that differ from "library default" (None)."""
        return {k: v for k, v in self.values[name].items() if v is not None}

    def where(self, key: str) -> str:
        line = self.lines.get(key)
        return f"{self.source}:{line}" if line else self.source

    def to_ini(self) -> str:
        out = [f"# {self.kind}"]
        for sec, entries in self.values.items():
            out.append(f"[{sec}]")
            out.extend(f"{k} = {'none' if v is None else v}" for k, v in entries.items())
            out.append("")
        return "\n".join(out)


_SECTION = re.compile(r"^\s*\[([^\]]+)\]")
_KEY = re.compile(r"^\s*([^=:#;\s][^=:]*?)\s*[=:]")


def _line_map(text: str) -> Dict[str, int]:
    """'section' and 'section.key' -> 1-based line number of their first appearance."""
    out, sec = {}, None
    for i, line in enumerate(text.splitlines(), 1):
        m = _SECTION.match(line)
        if m:
            sec = m.group(1).strip()
            out.setdefault(sec, i)
            continue
        m = _KEY.match(line)
        if m and sec is not None and not line[:1].isspace():
            out.setdefault(f"{sec}.{m.group(1).strip().lower()}", i)
    return out


def parse_config(text: str, kind: str, source: str = "<string>", seed: Optional[int] = None) -> RunConfig:
    if kind not in KINDS:
        raise ConfigError(f"unknown experiment kind {kind!r}; expected one of {KINDS}")
    cp = configparser.ConfigParser(interpolation=None, default_section="__none__")
    try:
        cp.read_string(text, source=source)
    except configparser.DuplicateOptionError as exc:
        raise ConfigError(f"{source}:{exc.lineno}: duplicate key {exc.section}.{exc.option}") from None
    except configparser.DuplicateSectionError as exc:
        raise ConfigError(f"{source}:{exc.lineno}: duplicate section [{exc.section}]") from None
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError(f"{source}:{exc.lineno}: entry before any [section] header") from None
    except configparser.ParsingError as exc:
        lineno, line = exc.errors[0]
        raise ConfigError(f"{source}:{lineno}: cannot parse {line!r}") from None
    lines = _line_map(text)
    values: Dict[str, Dict[str, Any]] = {}
    for sec in cp.sections():
        if sec not in SCHEMA:
            raise ConfigError(f"{source}:{lines.get(sec, '?')}: unknown section [{sec}]")
        for key in cp[sec]:
            if key not in SCHEMA[sec]:
                raise ConfigError(f"{source}:{lines.get(f'{sec}.{key}', '?')}: unknown key '{sec}.{key}'")
    for sec, keys in SCHEMA.items():
        values[sec] = {}
        for key, (conv, default) in keys.items():
            name = f"{sec}.{key}"
            if cp.has_option(sec, key):
                raw = cp.get(sec, key)
                try:
                    values[sec][key] = conv(raw)
                except ValueError:
                    kind_name = getattr(conv, "__name__", "value")
                    raise ConfigError(f"{source}:{lines.get(name, '?')}: {name}: expected {kind_name}, "
                                      f"got {raw!r}") from None
            elif default is REQUIRED:
                raise ConfigError(f"{source}: missing required key '{name}'")
            else:
                values[sec][key] = default
    if seed is not None:
        values["run"]["seed"] = int(seed)
    return RunConfig(kind, values, source, lines)


def load_config(path, kind: str, seed: Optional[int] = None) -> RunConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, kind, str(path), seed)
