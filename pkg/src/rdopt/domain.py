"""Axis-aligned boxes in design space."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainTooSmallError, ShapeError


@dataclass(frozen=True, eq=False)
class BoxDomain:
    """Axis-aligned box ``[lower, upper]`` in N dimensions.

    Units are carried as metadata only and never enter the arithmetic.

    Parameters
    ----------
    lower, upper : array_like, shape (N,)
        Bounds per axis. ``lower[i] <= upper[i]`` is required; a box with
        ``lower[i] == upper[i]`` is *degenerate* and only allowed when
        ``allow_degenerate=True``.
    labels : sequence of str, optional
        Parameter names, defaults to ``p0, p1, ...``.
    units : str, optional
        Unit label shared by all axes (e.g. ``"nm"``).
    """

    lower: np.ndarray
    upper: np.ndarray
    labels: tuple = field(default=())
    units: str = ""
    allow_degenerate: bool = False

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float)).copy()
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float)).copy()
        if lo.ndim != 1 or lo.shape != hi.shape or lo.size == 0:
            raise ShapeError(f"bounds must be 1-D and equal length, got {lo.shape} and {hi.shape}")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ValueError("domain bounds must be finite")
        bad = hi < lo if self.allow_degenerate else hi <= lo
        if np.any(bad):
            i = int(np.flatnonzero(bad)[0])
            raise DomainTooSmallError(
                f"axis {i}: lower bound {lo[i]!r} not below upper bound {hi[i]!r}", axis=i)
        labels = tuple(self.labels) if self.labels else tuple(f"p{i}" for i in range(lo.size))
        if len(labels) != lo.size:
            raise ShapeError(f"{len(labels)} labels for {lo.size} axes")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        object.__setattr__(self, "labels", labels)

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    @property
    def is_degenerate(self) -> bool:
        return bool(np.any(self.upper == self.lower))

    def contains(self, points, atol=0.0):
        """Boolean mask (or scalar for a single point) of points inside the box."""
        p = np.asarray(points, dtype=float)
        inside = np.all((p >= self.lower - atol) & (p <= self.upper + atol), axis=-1)
        return bool(inside) if inside.ndim == 0 else inside

    def to_unit(self, points):
        """Map points to the unit cube of this box."""
        p = np.asarray(points, dtype=float)
        if p.shape[-1] != self.dim:
            raise ShapeError(f"expected {self.dim} coordinates, got {p.shape[-1]}")
        w = np.where(self.width > 0, self.width, 1.0)
        return (p - self.lower) / w

    def from_unit(self, u):
        u = np.asarray(u, dtype=float)
        if u.shape[-1] != self.dim:
            raise ShapeError(f"expected {self.dim} coordinates, got {u.shape[-1]}")
        return self.lower + u * (self.upper - self.lower)

    def clip(self, points):
        return np.clip(np.asarray(points, dtype=float), self.lower, self.upper)

    def intersect(self, other: "BoxDomain") -> "BoxDomain":
        """Intersection with ``other``; labels and units are taken from ``self``."""
        lo = np.maximum(self.lower, other.lower)
        hi = np.minimum(self.upper, other.upper)
        return BoxDomain(lo, hi, self.labels, self.units, allow_degenerate=True)

    def issubset(self, other: "BoxDomain", atol=1e-12) -> bool:
        return bool(np.all(self.lower >= other.lower - atol) and np.all(self.upper <= other.upper + atol))

    def __eq__(self, other):
        if not isinstance(other, BoxDomain):
            return NotImplemented
        return (np.array_equal(self.lower, other.lower) and np.array_equal(self.upper, other.upper)
                and self.labels == other.labels and self.units == other.units)

    def __hash__(self):
        return hash((self.lower.tobytes(), self.upper.tobytes(), self.labels, self.units))

    def __repr__(self):
        axes = ", ".join(f"{l}=[{a:g}, {b:g}]" for l, a, b in zip(self.labels, self.lower, self.upper))
        unit = f" {self.units}" if self.units else ""
        return f"BoxDomain({axes}{unit})"

    def to_dict(self) -> dict:
        return {"lower": self.lower.tolist(), "upper": self.upper.tolist(),
                "labels": list(self.labels), "units": self.units}

    @classmethod
    def from_dict(cls, d: dict, allow_degenerate=False) -> "BoxDomain":
        return cls(d["lower"], d["upper"], tuple(d.get("labels", ())), d.get("units", ""),
                   allow_degenerate=allow_degenerate)

    @classmethod
    def cube(cls, lower: float, upper: float, dim: int, **kwargs) -> "BoxDomain":
        return cls(np.full(dim, float(lower)), np.full(dim, float(upper)), **kwargs)
