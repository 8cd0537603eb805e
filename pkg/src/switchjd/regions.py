"""Spatial domains: open balls and open boxes."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError


def _as_points(x, d: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x.reshape(-1, d) if d > 1 or x.size != 1 else x.reshape(1, 1)
    return x


@dataclass(frozen=True, eq=False)
class Region:
    """Common interface of the open sets used as domains, targets and jump sets."""

    @property
    def dim(self) -> int:
        raise NotImplementedError

    def contains(self, x) -> np.ndarray:
        return self.signed_distance(x) > 0.0

    def signed_distance(self, x) -> np.ndarray:
        """Distance to the complement inside, minus the distance to the set outside."""
        raise NotImplementedError

    def normal(self, x) -> np.ndarray:
        """Unit outward normal of the nearest boundary piece, shape (n, d)."""
        raise NotImplementedError

    def project(self, x) -> np.ndarray:
        """Nearest boundary point, nudged so it is never a member of the open set."""
        raise NotImplementedError

    def containing_ball(self) -> "Ball":
        raise NotImplementedError

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    @property
    def inradius(self) -> float:
        raise NotImplementedError

    @property
    def midpoint(self) -> np.ndarray:
        raise NotImplementedError

    def sample_inside(self, u: np.ndarray) -> np.ndarray:
        """Map uniforms of shape (n, d) to points of the set (rejection-free for boxes)."""
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError

    def _nudge_out(self, y: np.ndarray) -> np.ndarray:
        inside = self.contains(y)
        while np.any(inside):
            c = self.midpoint
            y[inside] = c + (y[inside] - c) * (1.0 + 4e-16)
            inside = self.contains(y)
        return y


@dataclass(frozen=True, eq=False)
class Ball(Region):
    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", np.atleast_1d(np.asarray(self.center, dtype=float)))
        if not self.radius > 0:
            raise ConfigError("ball radius must be positive", field="radius")

    @property
    def dim(self) -> int:
        return self.center.shape[0]

    def signed_distance(self, x) -> np.ndarray:
        x = _as_points(x, self.dim)
        return self.radius - np.linalg.norm(x - self.center, axis=1)

    def normal(self, x) -> np.ndarray:
        v = _as_points(x, self.dim) - self.center
        nrm = np.linalg.norm(v, axis=1, keepdims=True)
        out = np.zeros_like(v)
        out[:, 0] = 1.0
        ok = nrm[:, 0] > 0
        out[ok] = v[ok] / nrm[ok]
        return out

    def project(self, x) -> np.ndarray:
        y = self.center + self.radius * self.normal(x)
        return self._nudge_out(y)

    def containing_ball(self) -> "Ball":
        return self

    def bounding_box(self):
        return self.center - self.radius, self.center + self.radius

    @property
    def inradius(self) -> float:
        return float(self.radius)

    @property
    def midpoint(self) -> np.ndarray:
        return self.center

    def sample_inside(self, u):
        u = np.asarray(u, dtype=float)
        d = self.dim
        if d == 1:
            return self.center + self.radius * (2.0 * u[:, :1] - 1.0)
        from scipy.stats import norm
        g = norm.ppf(u[:, :d])
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        rad = self.radius * u[:, d:d + 1] ** (1.0 / d) if u.shape[1] > d else self.radius * 0.5
        return self.center + rad * g

    def to_dict(self) -> dict:
        return {"shape": "ball", "center": self.center.tolist(), "radius": float(self.radius)}


@dataclass(frozen=True, eq=False)
class Box(Region):
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.shape != hi.shape:
            raise ConfigError("box corners differ in dimension", field="lower/upper")
        if not np.all(hi > lo):
            raise ConfigError("box upper corner must exceed lower corner", field="upper")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    def signed_distance(self, x) -> np.ndarray:
        x = _as_points(x, self.dim)
        inner = np.minimum(x - self.lower, self.upper - x)
        sd_in = inner.min(axis=1)
        gap = np.maximum(np.maximum(self.lower - x, x - self.upper), 0.0)
        return np.where(sd_in > 0, sd_in, -np.linalg.norm(gap, axis=1))

    def normal(self, x) -> np.ndarray:
        x = _as_points(x, self.dim)
        n, d = x.shape
        out = np.zeros((n, d))
        gap = np.maximum(np.maximum(self.lower - x, x - self.upper), 0.0)
        gnorm = np.linalg.norm(gap, axis=1)
        outside = gnorm > 0
        sgn = np.where(x > self.upper, 1.0, -1.0)
        out[outside] = (gap * sgn)[outside] / gnorm[outside, None]
        dist = np.concatenate((x - self.lower, self.upper - x), axis=1)
        k = dist.argmin(axis=1)
        rows = np.flatnonzero(~outside)
        face = k[rows] % d
        out[rows, face] = np.where(k[rows] < d, -1.0, 1.0)
        return out

    def project(self, x) -> np.ndarray:
        x = _as_points(x, self.dim)
        y = np.clip(x, self.lower, self.upper)
        inside = self.signed_distance(y) > 0
        if np.any(inside):
            xi = y[inside]
            dist = np.concatenate((xi - self.lower, self.upper - xi), axis=1)
            k = dist.argmin(axis=1)
            rows = np.arange(xi.shape[0])
            face = k % self.dim
            xi[rows, face] = np.where(k < self.dim, self.lower[face], self.upper[face])
            y[inside] = xi
        return self._nudge_out(y)

    def containing_ball(self) -> Ball:
        c = 0.5 * (self.lower + self.upper)
        return Ball(c, float(np.linalg.norm(self.upper - c)) * (1.0 + 1e-12))

    def bounding_box(self):
        return self.lower.copy(), self.upper.copy()

    @property
    def inradius(self) -> float:
        return float(0.5 * np.min(self.upper - self.lower))

    @property
    def midpoint(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    def sample_inside(self, u):
        u = np.asarray(u, dtype=float)[:, :self.dim]
        return self.lower + u * (self.upper - self.lower)

    def to_dict(self) -> dict:
        return {"shape": "box", "lower": self.lower.tolist(), "upper": self.upper.tolist()}


def interval(a: float, b: float) -> Box:
    """The open interval (a, b) as a one-dimensional box."""
    return Box([a], [b])


def region_from_dict(spec: dict, d: int | None = None, field: str = "region") -> Region:
    if not isinstance(spec, dict):
        raise ConfigError("region must be a mapping", field=field)
    shape = spec.get("shape")
    if shape == "ball":
        _check_keys(spec, {"shape", "center", "radius"}, field)
        reg = Ball(spec["center"], float(spec["radius"]))
    elif shape == "box":
        _check_keys(spec, {"shape", "lower", "upper"}, field)
        reg = Box(spec["lower"], spec["upper"])
    else:
        raise ConfigError(f"unknown region shape {shape!r}", field=f"{field}.shape")
    if d is not None and reg.dim != d:
        from .errors import StructuralError
        raise StructuralError(f"{field}: region dimension {reg.dim} != model dimension {d}")
    return reg


def _check_keys(spec: dict, allowed: set, field: str) -> None:
    unknown = set(spec) - allowed
    if unknown:
        raise ConfigError(f"unknown keys {sorted(unknown)}", field=field)
    missing = allowed - set(spec)
    if missing:
        raise ConfigError(f"missing keys {sorted(missing)}", field=field)
