"""Uniform grids, sampled functions and the weight-function catalog."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DomainError, UsageError

__all__ = ["Grid", "GridFunction", "WeightFunction", "WEIGHT_KINDS",
           "format_float", "write_atomic"]

WEIGHT_KINDS = ("constant", "exp", "power")


def format_float(x: float) -> str:
    """17 significant digits, enough to round-trip a double."""
    return format(float(x), ".17g")


def write_atomic(path, text: str) -> None:
    """Write ``text`` to ``path`` through a temporary file and a rename."""
    path = Path(path)
    tmp = path.with_name(f".{path.name}.tmp")
    tmp.write_text(text, encoding="utf-8", newline="\n")
    tmp.replace(path)


@dataclass(frozen=True)
class Grid:
    """Uniform grid ``t_i = a + i*h``, ``i = 0..n-1``."""

    a: float
    b: float
    n: int

    def __post_init__(self):
        a, b = float(self.a), float(self.b)
        if not (math.isfinite(a) and math.isfinite(b)) or not b > a:
            raise DomainError(f"grid requires finite a < b, got a={self.a!r}, b={self.b!r}")
        if int(self.n) != self.n or self.n < 3:
            raise DomainError(f"grid requires an integer n >= 3, got {self.n!r}")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "n", int(self.n))

    @property
    def h(self) -> float:
        return (self.b - self.a) / (self.n - 1)

    @property
    def nodes(self) -> np.ndarray:
        return self.a + self.h * np.arange(self.n)

    def refined(self, times: int = 1) -> "Grid":
        """Grid with the spacing halved ``times`` times (nested nodes)."""
        return Grid(self.a, self.b, (self.n - 1) * 2**times + 1)

    def trapezoid_weights(self) -> np.ndarray:
        q = np.full(self.n, self.h)
        q[0] = q[-1] = 0.5 * self.h
        return q


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Samples ``f(t_i)`` of a scalar function on a :class:`Grid`."""

    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.grid.n,):
            raise UsageError(f"expected {self.grid.n} samples, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise DomainError("grid function has non-finite samples")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def sample(cls, grid: Grid, fn) -> "GridFunction":
        """Sample a vectorized callable on the grid nodes."""
        return cls(grid, np.broadcast_to(fn(grid.nodes), (grid.n,)))

    @property
    def t(self) -> np.ndarray:
        return self.grid.nodes

    def reflected(self) -> "GridFunction":
        """Samples of ``f(a + b - t)``."""
        return GridFunction(self.grid, self.values[::-1])

    def integral(self) -> float:
        """Composite trapezoid rule on the grid."""
        return float(self.grid.trapezoid_weights() @ self.values)

    def sup(self) -> float:
        return float(np.max(np.abs(self.values)))

    def to_csv(self, path, column: str = "value") -> None:
        lines = [f"t,{column}"]
        lines += [f"{format_float(t)},{format_float(v)}" for t, v in zip(self.t, self.values)]
        write_atomic(path, "\n".join(lines) + "\n")

    @classmethod
    def from_csv(cls, path, column: str | None = None) -> "GridFunction":
        """Read a CSV with a ``t`` column; nodes must form a uniform grid."""
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        if not rows:
            raise UsageError(f"{path}: no data rows")
        header = list(rows[0].keys())
        if "t" not in header:
            raise UsageError(f"{path}: missing 't' column")
        if column is None:
            others = [c for c in header if c != "t"]
            if not others:
                raise UsageError(f"{path}: no value column")
            column = others[0]
        elif column not in header:
            raise UsageError(f"{path}: missing column {column!r}")
        t = np.array([float(r["t"]) for r in rows])
        v = np.array([float(r[column]) for r in rows])
        grid = Grid(t[0], t[-1], len(t))
        if not np.allclose(t, grid.nodes, rtol=0, atol=1e-9 * max(1.0, abs(grid.b - grid.a))):
            raise UsageError(f"{path}: t column is not a uniform grid")
        return cls(grid, v)


@dataclass(frozen=True)
class WeightFunction:
    """Positive C^1 weight from a small closed-form catalog.

    ``constant``: ``w(t) = c``; ``exp``: ``w(t) = exp(k t)``;
    ``power``: ``w(t) = (1 + t)**k`` (requires ``t > -1`` on the grid).
    """

    kind: str = "constant"
    c: float = 1.0
    k: float = 0.0

    def __post_init__(self):
        if self.kind not in WEIGHT_KINDS:
            raise DomainError(f"unknown weight kind {self.kind!r}; expected one of {WEIGHT_KINDS}")
        if not (math.isfinite(self.c) and math.isfinite(self.k)):
            raise DomainError("weight parameters must be finite")
        if self.kind == "constant" and not self.c > 0:
            raise DomainError(f"constant weight must be positive, got c={self.c!r}")

    @classmethod
    def unit(cls) -> "WeightFunction":
        return cls("constant", 1.0, 0.0)

    @property
    def is_unit(self) -> bool:
        return self.kind == "constant" and self.c == 1.0

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "constant":
            return np.full(t.shape, self.c)
        if self.kind == "exp":
            return np.exp(self.k * t)
        return (1.0 + t) ** self.k

    def derivative(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "constant":
            return np.zeros(t.shape)
        if self.kind == "exp":
            return self.k * np.exp(self.k * t)
        return self.k * (1.0 + t) ** (self.k - 1.0)

    def samples(self, grid: Grid) -> np.ndarray:
        """Weight values on the grid, after checking positivity on [a, b]."""
        if self.kind == "power" and not grid.a > -1.0:
            raise DomainError(f"power weight (1+t)^k needs a > -1, got a={grid.a!r}")
        w = self(grid.nodes)
        if not (np.all(np.isfinite(w)) and np.all(w > 0)):
            raise DomainError(f"weight {self} is not finite and positive on [{grid.a}, {grid.b}]")
        return w

    def describe(self) -> dict:
        if self.kind == "constant":
            return {"kind": "constant", "c": self.c}
        return {"kind": self.kind, "k": self.k}
