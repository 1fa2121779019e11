"""Flat ``key = value`` run configuration with dotted sections.

Example::

    # comments start with '#'
    problem.L = "x^2 + u^2"
    operator.alpha = 0.5
    weight.kind = exp
    grid.n = 1001

Values may be quoted; quotes are stripped.  Typing happens on access, so a
validation error always names the offending key.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .errors import UsageError, ValidationError
from .grid import Grid, WeightFunction
from .operators import NORMALIZATIONS, OperatorParams, make_params

__all__ = ["RunConfig", "parse_text", "load", "sample_path", "sample_names", "MODES"]

MODES = ("ml", "op", "ibp", "solve", "el", "presets")


def _unquote(value: str) -> str:
    value = value.strip()
    if len(value) >= 2 and value[0] == value[-1] and value[0] in "\"'":
        return value[1:-1]
    return value


def parse_text(text: str, source: str = "<config>") -> dict[str, str]:
    """Parse the key-value format into an ordered ``dict`` of strings."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise UsageError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if not key or any(c.isspace() for c in key):
            raise UsageError(f"{source}:{lineno}: invalid key {key!r}")
        out[key] = _unquote(value)
    return out


def parse_override(item: str) -> tuple[str, str]:
    if "=" not in item:
        raise UsageError(f"override {item!r} is not of the form key=value")
    key, value = item.split("=", 1)
    key = key.strip()
    if not key:
        raise UsageError(f"override {item!r} has an empty key")
    return key, _unquote(value)


def sample_names() -> list[str]:
    root = resources.files("wgfrac") / "samples"
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".cfg"))


def sample_path(name: str) -> Path:
    path = Path(str(resources.files("wgfrac") / "samples" / f"{name}.cfg"))
    if not path.is_file():
        raise UsageError(f"no bundled sample {name!r}; available: {', '.join(sample_names())}")
    return path


@dataclass
class RunConfig:
    """Raw settings plus typed accessors; ``base_dir`` anchors relative paths."""

    values: dict[str, str] = field(default_factory=dict)
    base_dir: Path = Path(".")

    def override(self, items) -> "RunConfig":
        vals = dict(self.values)
        for item in items or ():
            key, value = parse_override(item)
            vals[key] = value
        return RunConfig(vals, self.base_dir)

    def has(self, key: str) -> bool:
        return key in self.values

    def str(self, key: str, default=None, choices=None) -> str:
        if key not in self.values:
            if default is None:
                raise ValidationError(f"missing required key {key!r}")
            return default
        val = self.values[key]
        if choices is not None and val not in choices:
            raise ValidationError(f"{key} must be one of {list(choices)}, got {val!r}")
        return val

    def float(self, key: str, default=None) -> float:
        if key not in self.values:
            if default is None:
                raise ValidationError(f"missing required key {key!r}")
            return float(default)
        try:
            val = float(self.values[key])
        except ValueError:
            raise ValidationError(f"{key} must be a number, got {self.values[key]!r}") from None
        if not math.isfinite(val):
            raise ValidationError(f"{key} must be finite, got {self.values[key]!r}")
        return val

    def int(self, key: str, default=None) -> int:
        val = self.float(key, default)
        if val != int(val):
            raise ValidationError(f"{key} must be an integer, got {self.values[key]!r}")
        return int(val)

    def bool(self, key: str, default: bool = False) -> bool:
        if key not in self.values:
            return default
        val = self.values[key].lower()
        if val in ("true", "yes", "1", "on"):
            return True
        if val in ("false", "no", "0", "off"):
            return False
        raise ValidationError(f"{key} must be a boolean, got {self.values[key]!r}")

    def path(self, key: str) -> Path:
        p = Path(self.str(key))
        return p if p.is_absolute() else self.base_dir / p

    # -- domain objects --------------------------------------------------

    def grid(self) -> Grid:
        return Grid(self.float("grid.a"), self.float("grid.b"), self.int("grid.n"))

    def weight(self) -> WeightFunction:
        kind = self.str("weight.kind", "constant", ("constant", "exp", "power"))
        if kind == "constant":
            return WeightFunction("constant", c=self.float("weight.c", 1.0))
        return WeightFunction(kind, k=self.float("weight.k"))

    def operator(self) -> tuple[OperatorParams, WeightFunction]:
        """Operator parameters and weight, honoring ``operator.preset``."""
        from .variational import PRESETS, apply_preset

        alpha = self.float("operator.alpha")
        norm = self.str("operator.normalization", "unit", NORMALIZATIONS)
        if not self.has("operator.preset"):
            return make_params(alpha, self.float("operator.beta"), norm), self.weight()
        name = self.str("operator.preset", choices=tuple(PRESETS))
        preset = PRESETS[name]
        if self.has("operator.beta"):
            raise ValidationError(f"operator.beta conflicts with operator.preset = {name}")
        if preset.unit_weight and not self.weight().is_unit:
            raise ValidationError(f"weight.* keys conflict with operator.preset = {name} (w = 1)")
        params, w = apply_preset(preset, alpha, norm, None if preset.unit_weight else self.weight())
        return params, w

    def as_dict(self) -> dict[str, str]:
        return dict(sorted(self.values.items()))


def load(path, overrides=()) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror or exc}") from exc
    return RunConfig(parse_text(text, str(path)), path.parent).override(overrides)
