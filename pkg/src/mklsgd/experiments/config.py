"""INI-style config files for the CLI.

Example sweep file::

    [sweep]
    seeds = 0-20
    out = outlier_sweep.csv

    [problem]
    kind = regression
    n = 1000
    d = 10

    [grid]
    kappa = 1, 10
    epsilon = 0.05, 0.1, 0.2
    variant = sgd, mkl
    k = 2

    [optimizer]
    max_steps = 20000

Values are Python literals where they parse as one (numbers, ``None``,
``True``, lists, tuples) and bare strings otherwise. Grid entries are
comma-separated lists. Every error names the file and line.
"""
from __future__ import annotations

import ast
import configparser
import re
from dataclasses import fields
from typing import Optional

from .. import datagen
from ..losses import InvalidInputError


class ConfigError(InvalidInputError):
    def __init__(self, message, path=None, line=None):
        self.path, self.line = path, line
        where = f"{path}:{line}: " if line is not None else (f"{path}: " if path else "")
        super().__init__(where + message)


PROBLEM_SPECS = {"regression": datagen.RegressionSpec, "quadratic": datagen.QuadraticEnsembleSpec,
                 "classification": datagen.ClassificationSpec}

_SECTION = re.compile(r"^\s*\[([^\]]+)\]")
_KEY = re.compile(r"^\s*([^=:#;\s][^=:]*?)\s*[=:]")


def _line_index(text: str) -> dict:
    """``(section, key) -> 1-based line`` plus ``(section, None)`` for headers."""
    index, section = {}, None
    for no, line in enumerate(text.splitlines(), start=1):
        m = _SECTION.match(line)
        if m:
            section = m.group(1).strip()
            index.setdefault((section, None), no)
            continue
        m = _KEY.match(line)
        if m and section is not None and not line[:1].isspace():
            index.setdefault((section, m.group(1).strip().lower()), no)
    return index


def parse_scalar(raw: str):
    raw = raw.strip()
    if raw.lower() in ("true", "yes", "on"):
        return True
    if raw.lower() in ("false", "no", "off"):
        return False
    if raw.lower() == "none":
        return None
    try:
        return ast.literal_eval(raw)
    except (ValueError, SyntaxError):
        return raw


def parse_list(raw: str) -> list:
    raw = raw.strip()
    try:
        val = ast.literal_eval("[" + raw + "]")
        if all(not isinstance(v, str) or v for v in val):
            return list(val)
    except (ValueError, SyntaxError):
        pass
    return [parse_scalar(part) for part in raw.split(",") if part.strip()]


def parse_seeds(raw: str) -> tuple:
    """``"0-20"``, ``"0, 3, 7"`` or a mix like ``"0-4, 9"``."""
    out = []
    for part in raw.split(","):
        part = part.strip()
        m = re.fullmatch(r"(\d+)\s*-\s*(\d+)", part)
        if m:
            lo, hi = int(m.group(1)), int(m.group(2))
            if hi < lo:
                raise ValueError(f"empty seed range {part!r}")
            out.extend(range(lo, hi + 1))
        elif part:
            out.append(int(part))
    if not out:
        raise ValueError("no seeds given")
    return tuple(out)


class ConfigFile:
    """A parsed config with line-aware accessors.

    ``schema`` maps each allowed section to its allowed keys (``None``
    allows any key, validated later by the caller).
    """

    def __init__(self, path: str, schema: dict, text: Optional[str] = None):
        self.path = path
        if text is None:
            try:
                with open(path, encoding="utf-8") as fh:
                    text = fh.read()
            except OSError as exc:
                raise ConfigError(f"cannot read config: {exc.strerror or exc}", path) from None
        self.lines = _line_index(text)
        parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
        try:
            parser.read_string(text, source=path)
        except configparser.Error as exc:
            line = getattr(exc, "lineno", None)
            msg = str(exc).splitlines()[0]
            if line is None and getattr(exc, "errors", None):
                line, bad = exc.errors[0]
                msg = f"cannot parse {bad.strip()!r} (expected key = value)"
            raise ConfigError(msg, path, line) from None
        self.parser = parser
        for section in parser.sections():
            if section not in schema:
                raise ConfigError(f"unknown section [{section}]; expected one of "
                                  f"{', '.join('[' + s + ']' for s in schema)}", path, self.line(section))
            allowed = schema[section]
            if allowed is None:
                continue
            for key in parser[section]:
                if key not in allowed:
                    raise ConfigError(f"unknown key {key!r} in [{section}]", path, self.line(section, key))

    def line(self, section, key=None):
        return self.lines.get((section, key))

    def error(self, message, section, key=None) -> ConfigError:
        return ConfigError(message, self.path, self.line(section, key))

    def has(self, section) -> bool:
        return self.parser.has_section(section)

    def items(self, section) -> dict:
        return dict(self.parser[section]) if self.has(section) else {}

    def get(self, section, key, default=None, kind=parse_scalar):
        if not self.has(section) or key not in self.parser[section]:
            return default
        try:
            return kind(self.parser[section][key])
        except (ValueError, TypeError) as exc:
            raise self.error(f"bad value for {key!r}: {exc}", section, key) from None


def spec_fields(spec_cls) -> set:
    return {f.name for f in fields(spec_cls)}


def build_spec(cfg: ConfigFile, problem: str, section: str = "problem", **overrides):
    """Instantiate the datagen spec of ``problem`` from ``[section]``, reporting bad keys by line."""
    if problem not in PROBLEM_SPECS:
        raise ConfigError(f"unknown problem {problem!r}; expected one of {sorted(PROBLEM_SPECS)}", cfg.path)
    spec_cls = PROBLEM_SPECS[problem]
    allowed = spec_fields(spec_cls)
    kwargs = {}
    for key in cfg.items(section):
        if key not in allowed:
            raise cfg.error(f"unknown {problem} field {key!r}", section, key)
        kwargs[key] = cfg.get(section, key)
    kwargs.update({k: v for k, v in overrides.items() if v is not None})
    for key in ("l_range", "radius_range"):
        if key in kwargs:
            kwargs[key] = tuple(kwargs[key])
    try:
        return spec_cls(**kwargs)
    except (InvalidInputError, TypeError) as exc:
        raise ConfigError(f"invalid [{section}]: {exc}", cfg.path, cfg.line(section)) from None
