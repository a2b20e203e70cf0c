"""Run configuration: a small INI dialect with typed, validated keys.

Example::

    [models]
    family = two_gaussian
    a = 1.0

    [sample]
    values = 0.3 -0.2 0.5

    [run]
    beta = nishimori
    x_points = 201

Lists are whitespace separated; matrix rows (discrete probability vectors)
are separated by ``;``.  Lines starting with ``#`` are comments.
"""

from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field

from .errors import UsageError

NISHIMORI = "nishimori"


def _float(text):
    return float(text)


def _int(text):
    value = int(text)
    return value


def _seed(text):
    value = int(text)
    if not 0 <= value < 2**64:
        raise ValueError("seed must be an unsigned 64-bit integer")
    return value


def _floats(text):
    items = text.split()
    if not items:
        raise ValueError("empty list")
    return tuple(float(v) for v in items)


def _strs(text):
    items = text.split()
    if not items:
        raise ValueError("empty list")
    return tuple(items)


def _matrix(text):
    rows = [r for r in (s.strip() for s in text.split(";")) if r]
    if not rows:
        raise ValueError("empty matrix")
    return tuple(_floats(r) for r in rows)


def _beta(text):
    t = text.strip()
    if t.lower() == NISHIMORI:
        return NISHIMORI
    value = float(t)
    if not value >= 0:
        raise ValueError("beta must be >= 0")
    return value


def _choice(*options):
    def parse(text):
        t = text.strip()
        if t not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return t

    return parse


def _str(text):
    t = text.strip()
    if not t:
        raise ValueError("empty value")
    return t


FAMILIES = ("two_gaussian", "gaussians", "normal_family", "normal_grid", "discrete")

SCHEMA = {
    "models": {
        "family": _choice(*FAMILIES),
        "a": _float,
        "means": _floats,
        "sds": _floats,
        "ids": _strs,
        "probs": _matrix,
        "grid_nodes": _int,
    },
    "sample": {
        "values": _floats,
        "file": _str,
        "generator": _choice("normal", "categorical"),
        "n": _int,
        "mean": _float,
        "sd": _float,
        "probs": _floats,
    },
    "run": {
        "beta": _beta,
        "seed": _seed,
        "x_min": _float,
        "x_max": _float,
        "x_points": _int,
        "n": _int,
        "beta_grid": _floats,
        "mode": _choice("exact", "mc"),
        "replicates": _int,
        "eval_draws": _int,
        "gt_mean": _float,
        "gt_sd": _float,
        "gt_index": _int,
        "gt_probs": _floats,
        "candidate_means": _floats,
        "candidate_sds": _floats,
        "candidate_probs": _matrix,
        "holdout": _floats,
        "draws": _int,
        "sweeps": _int,
    },
}

SAMPLE_SOURCES = ("values", "file", "generator")


@dataclass(frozen=True)
class RunConfig:
    models: dict = field(default_factory=dict)
    sample: dict = field(default_factory=dict)
    run: dict = field(default_factory=dict)

    def section(self, name) -> dict:
        return getattr(self, name)

    @property
    def seed(self):
        return self.run.get("seed")

    def with_seed(self, seed) -> "RunConfig":
        run = dict(self.run)
        run["seed"] = seed
        return RunConfig(dict(self.models), dict(self.sample), run)


def _line_of(text, section, key=None):
    """1-based line of ``[section]`` or of ``key`` inside it, else None."""
    current = None
    key_re = re.compile(rf"^\s*{re.escape(key)}\s*=", re.I) if key else None
    for lineno, line in enumerate(text.splitlines(), 1):
        m = re.match(r"^\s*\[([^\]]+)\]", line)
        if m:
            current = m.group(1).strip()
            if key is None and current == section:
                return lineno
            continue
        if key_re is not None and current == section and key_re.match(line):
            return lineno
    return None


def parse_config(text: str, strict: bool = True, seed=None, warn=None) -> RunConfig:
    """Parse and validate configuration text.

    ``seed`` overrides ``[run] seed`` (the CLI ``--seed`` flag).  With
    ``strict=False`` unknown keys are reported through ``warn`` and dropped.
    """
    parser = configparser.ConfigParser(
        strict=True,
        interpolation=None,
        delimiters=("=",),
        comment_prefixes=("#",),
        empty_lines_in_values=False,
    )
    try:
        parser.read_string(text, source="<config>")
    except configparser.DuplicateOptionError as exc:
        raise UsageError("duplicate key", key=exc.option, line=exc.lineno) from None
    except configparser.DuplicateSectionError as exc:
        raise UsageError(f"duplicate section [{exc.section}]", line=exc.lineno) from None
    except configparser.MissingSectionHeaderError as exc:
        raise UsageError("key outside of a [section]", line=exc.lineno) from None
    except configparser.ParsingError as exc:
        lineno = exc.errors[0][0] if exc.errors else None
        raise UsageError("malformed line, expected key = value", line=lineno) from None

    sections = {"models": {}, "sample": {}, "run": {}}
    for name in parser.sections():
        if name not in SCHEMA:
            raise UsageError(f"unknown section [{name}]", line=_line_of(text, name))
        schema = SCHEMA[name]
        for key, raw in parser.items(name):
            if key not in schema:
                if strict:
                    raise UsageError(
                        f"unknown key in [{name}]", key=key, line=_line_of(text, name, key)
                    )
                if warn is not None:
                    warn(f"ignoring unknown key {key!r} in [{name}]")
                continue
            try:
                sections[name][key] = schema[key](raw)
            except (ValueError, TypeError) as exc:
                raise UsageError(
                    f"bad value {raw!r} in [{name}]: {exc}",
                    key=key,
                    line=_line_of(text, name, key),
                ) from None

    if seed is not None:
        sections["run"]["seed"] = _seed(str(seed))

    sources = [k for k in SAMPLE_SOURCES if k in sections["sample"]]
    if len(sources) > 1:
        raise UsageError(
            f"conflicting sample sources: {', '.join(sources)}",
            key=sources[1],
            line=_line_of(text, "sample", sources[1]),
        )
    needs_seed = "generator" in sections["sample"] or sections["run"].get("mode") == "mc"
    if needs_seed and "seed" not in sections["run"]:
        raise UsageError("a seed is required for generated samples and Monte Carlo", key="seed")
    return RunConfig(sections["models"], sections["sample"], sections["run"])


def _format(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, bool):
        raise TypeError("booleans are not part of the format")
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple) and value and isinstance(value[0], tuple):
        return "; ".join(_format(row) for row in value)
    if isinstance(value, tuple):
        return " ".join(_format(v) for v in value)
    raise TypeError(f"cannot serialize {value!r}")


def serialize_config(cfg: RunConfig) -> str:
    lines = []
    for name in ("models", "sample", "run"):
        section = cfg.section(name)
        if not section:
            continue
        if lines:
            lines.append("")
        lines.append(f"[{name}]")
        for key in SCHEMA[name]:
            if key in section:
                lines.append(f"{key} = {_format(section[key])}")
    return "\n".join(lines) + "\n"
