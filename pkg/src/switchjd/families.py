"""Registry of bounded parametric coefficient families and jump densities.

Models are assembled only from these families, so every coefficient is bounded
by construction and every model is expressible in a configuration file.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import gamma

from .errors import ConfigError
from .regions import Region, region_from_dict


# ---------------------------------------------------------------------------
# scalar families: x (n, d) -> (n,)
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ScalarFamily:
    """A bounded scalar function of position with declared range."""

    name = "abstract"

    def __call__(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def bounds(self) -> tuple[float, float]:
        raise NotImplementedError

    @property
    def is_constant(self) -> bool:
        return False

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class Constant(ScalarFamily):
    value: float
    name = "constant"

    def __call__(self, x):
        return np.full(np.shape(x)[0], float(self.value))

    def bounds(self):
        return float(self.value), float(self.value)

    @property
    def is_constant(self) -> bool:
        return True

    def to_dict(self):
        return {"family": "constant", "value": float(self.value)}


@dataclass(frozen=True, eq=False)
class AffineClamped(ScalarFamily):
    """``clip(offset + slope . x, lower, upper)``."""

    offset: float
    slope: np.ndarray
    lower: float
    upper: float
    name = "affine_clamped"

    def __call__(self, x):
        return np.clip(self.offset + x @ self.slope, self.lower, self.upper)

    def bounds(self):
        return float(self.lower), float(self.upper)

    def to_dict(self):
        return {"family": self.name, "offset": self.offset, "slope": self.slope.tolist(),
                "lower": self.lower, "upper": self.upper}


@dataclass(frozen=True, eq=False)
class RadialBump(ScalarFamily):
    """``base + amplitude * exp(-|x - center|^2 / width^2)``."""

    base: float
    amplitude: float
    center: np.ndarray
    width: float
    name = "radial_bump"

    def __call__(self, x):
        r2 = np.sum((x - self.center) ** 2, axis=1)
        return self.base + self.amplitude * np.exp(-r2 / self.width**2)

    def bounds(self):
        ends = (self.base, self.base + self.amplitude)
        return float(min(ends)), float(max(ends))

    def to_dict(self):
        return {"family": self.name, "base": self.base, "amplitude": self.amplitude,
                "center": self.center.tolist(), "width": self.width}


@dataclass(frozen=True, eq=False)
class Logistic(ScalarFamily):
    """``low + (high - low) / (1 + exp(-steepness * (direction . x - threshold)))``."""

    low: float
    high: float
    direction: np.ndarray
    threshold: float
    steepness: float
    name = "logistic"

    def __call__(self, x):
        s = self.steepness * (x @ self.direction - self.threshold)
        return self.low + (self.high - self.low) * 0.5 * (1.0 + np.tanh(0.5 * s))

    def bounds(self):
        return float(min(self.low, self.high)), float(max(self.low, self.high))

    def to_dict(self):
        return {"family": self.name, "low": self.low, "high": self.high,
                "direction": self.direction.tolist(), "threshold": self.threshold,
                "steepness": self.steepness}


@dataclass(frozen=True, eq=False)
class Radial(ScalarFamily):
    """``clip(c0 + c1 |x - center| + c2 |x - center|^2, lower, upper)``."""

    center: np.ndarray
    coefficients: tuple
    lower: float
    upper: float
    name = "radial"

    def __call__(self, x):
        r = np.linalg.norm(x - self.center, axis=1)
        c0, c1, c2 = self.coefficients
        return np.clip(c0 + c1 * r + c2 * r * r, self.lower, self.upper)

    def bounds(self):
        return float(self.lower), float(self.upper)

    def to_dict(self):
        return {"family": self.name, "center": self.center.tolist(),
                "coefficients": list(self.coefficients), "lower": self.lower, "upper": self.upper}


@dataclass(frozen=True, eq=False)
class HalfSpaceIndicator(ScalarFamily):
    """``inside`` where ``normal . x >= offset``, ``outside`` elsewhere."""

    normal: np.ndarray
    offset: float
    inside: float = 1.0
    outside: float = 0.0
    name = "indicator_halfspace"

    def __call__(self, x):
        return np.where(x @ self.normal >= self.offset, self.inside, self.outside)

    def bounds(self):
        return float(min(self.inside, self.outside)), float(max(self.inside, self.outside))

    def to_dict(self):
        return {"family": self.name, "normal": self.normal.tolist(), "offset": self.offset,
                "inside": self.inside, "outside": self.outside}


@dataclass(frozen=True, eq=False)
class RegionIndicator(ScalarFamily):
    """``inside`` on a ball or box (closure included), ``outside`` elsewhere."""

    region: Region
    inside: float = 1.0
    outside: float = 0.0
    name = "indicator_region"

    def __call__(self, x):
        return np.where(self.region.signed_distance(x) >= 0.0, self.inside, self.outside)

    def bounds(self):
        return float(min(self.inside, self.outside)), float(max(self.inside, self.outside))

    def to_dict(self):
        return {"family": self.name, "region": self.region.to_dict(), "inside": self.inside,
                "outside": self.outside}


@dataclass(frozen=True, eq=False)
class LinearCombination(ScalarFamily):
    """``sum_k c_k f_k`` of registered families."""

    terms: tuple
    name = "linear_combination"

    def __call__(self, x):
        out = np.zeros(np.shape(x)[0])
        for c, f in self.terms:
            out = out + c * f(x)
        return out

    def bounds(self):
        lo = hi = 0.0
        for c, f in self.terms:
            a, b = c * f.bounds()[0], c * f.bounds()[1]
            lo += min(a, b)
            hi += max(a, b)
        return lo, hi

    def to_dict(self):
        return {"family": self.name,
                "terms": [{"coefficient": c, "term": f.to_dict()} for c, f in self.terms]}


def _vec(params: dict, key: str, d: int, fld: str, default=None) -> np.ndarray:
    if key not in params:
        if default is None:
            raise ConfigError(f"missing parameter {key!r}", field=fld)
        return np.full(d, float(default))
    v = np.atleast_1d(np.asarray(params[key], dtype=float))
    if v.shape != (d,):
        from .errors import StructuralError
        raise StructuralError(f"{fld}.{key}: expected length {d}, got shape {v.shape}")
    return v


def _num(params: dict, key: str, fld: str, default=None) -> float:
    if key not in params:
        if default is None:
            raise ConfigError(f"missing parameter {key!r}", field=fld)
        return float(default)
    val = params[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(f"parameter {key!r} must be a number", field=f"{fld}.{key}")
    if not math.isfinite(val):
        raise ConfigError(f"parameter {key!r} must be finite", field=f"{fld}.{key}")
    return float(val)


def _make_affine(p, d, fld):
    lo, hi = _num(p, "lower", fld), _num(p, "upper", fld)
    if lo > hi:
        raise ConfigError("lower exceeds upper", field=fld)
    return AffineClamped(_num(p, "offset", fld, 0.0), _vec(p, "slope", d, fld), lo, hi)


def _make_bump(p, d, fld):
    width = _num(p, "width", fld)
    if width <= 0:
        raise ConfigError("width must be positive", field=f"{fld}.width")
    return RadialBump(_num(p, "base", fld, 0.0), _num(p, "amplitude", fld),
                      _vec(p, "center", d, fld, 0.0), width)


def _make_logistic(p, d, fld):
    return Logistic(_num(p, "low", fld), _num(p, "high", fld), _vec(p, "direction", d, fld),
                    _num(p, "threshold", fld, 0.0), _num(p, "steepness", fld, 1.0))


def _make_radial(p, d, fld):
    coef = p.get("coefficients")
    if not isinstance(coef, list) or len(coef) != 3:
        raise ConfigError("coefficients must be a list of three numbers", field=f"{fld}.coefficients")
    lo, hi = _num(p, "lower", fld), _num(p, "upper", fld)
    if lo > hi:
        raise ConfigError("lower exceeds upper", field=fld)
    return Radial(_vec(p, "center", d, fld, 0.0), tuple(float(c) for c in coef), lo, hi)


def _make_halfspace(p, d, fld):
    return HalfSpaceIndicator(_vec(p, "normal", d, fld), _num(p, "offset", fld, 0.0),
                              _num(p, "inside", fld, 1.0), _num(p, "outside", fld, 0.0))


def _make_region_indicator(p, d, fld):
    return RegionIndicator(region_from_dict(p.get("region"), d, f"{fld}.region"),
                           _num(p, "inside", fld, 1.0), _num(p, "outside", fld, 0.0))


def _make_combination(p, d, fld):
    terms = p.get("terms")
    if not isinstance(terms, list) or not terms:
        raise ConfigError("terms must be a nonempty list", field=f"{fld}.terms")
    out = []
    for k, t in enumerate(terms):
        if not isinstance(t, dict) or set(t) != {"coefficient", "term"}:
            raise ConfigError("each term needs exactly 'coefficient' and 'term'", field=f"{fld}.terms[{k}]")
        out.append((_num(t, "coefficient", f"{fld}.terms[{k}]"),
                    scalar_family(t["term"], d, f"{fld}.terms[{k}].term")))
    return LinearCombination(tuple(out))


_SCALAR_FAMILIES: dict[str, tuple[Callable, set]] = {
    "linear_combination": (_make_combination, {"terms"}),
    "constant": (lambda p, d, fld: Constant(_num(p, "value", fld)), {"value"}),
    "affine_clamped": (_make_affine, {"offset", "slope", "lower", "upper"}),
    "radial_bump": (_make_bump, {"base", "amplitude", "center", "width"}),
    "logistic": (_make_logistic, {"low", "high", "direction", "threshold", "steepness"}),
    "radial": (_make_radial, {"center", "coefficients", "lower", "upper"}),
    "indicator_halfspace": (_make_halfspace, {"normal", "offset", "inside", "outside"}),
    "indicator_region": (_make_region_indicator, {"region", "inside", "outside"}),
}


def scalar_family(spec, d: int, fld: str) -> ScalarFamily:
    """Build a scalar family from a number (constant shorthand) or a mapping."""
    if isinstance(spec, ScalarFamily):
        return spec
    if isinstance(spec, (int, float)) and not isinstance(spec, bool):
        return Constant(_num({"value": spec}, "value", fld))
    if not isinstance(spec, dict):
        raise ConfigError("expected a number or a family mapping", field=fld)
    name = spec.get("family")
    if name not in _SCALAR_FAMILIES:
        raise ConfigError(f"unknown family {name!r}", field=f"{fld}.family")
    make, allowed = _SCALAR_FAMILIES[name]
    unknown = set(spec) - allowed - {"family"}
    if unknown:
        raise ConfigError(f"unknown keys {sorted(unknown)}", field=fld)
    return make(spec, d, fld)


# ---------------------------------------------------------------------------
# jump densities: probability densities on R^d used as the dominating law
# ---------------------------------------------------------------------------

def _unit_ball_volume(d: int) -> float:
    return math.pi ** (d / 2) / gamma(d / 2 + 1)


def _sphere_area(d: int) -> float:
    return d * _unit_ball_volume(d)


def _directions(g: np.ndarray) -> np.ndarray:
    nrm = np.linalg.norm(g, axis=1, keepdims=True)
    nrm[nrm == 0] = 1.0
    return g / nrm


@dataclass(frozen=True, eq=False)
class JumpDensity:
    """Normalised density on R^d sampled from ``d`` normals and one uniform."""

    dim: int
    name = "abstract"

    def pdf(self, z: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def sample(self, g: np.ndarray, u: np.ndarray) -> np.ndarray:
        """Map standard normals ``g`` (n, d) and uniforms ``u`` (n,) to jump sizes."""
        raise NotImplementedError

    def radius_bound(self) -> float:
        """Radius outside which the density is zero (``inf`` if unbounded)."""
        return math.inf

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class UniformBall(JumpDensity):
    radius: float = 1.0
    name = "uniform_ball"

    def pdf(self, z):
        inside = np.linalg.norm(z, axis=1) < self.radius
        return inside / (_unit_ball_volume(self.dim) * self.radius**self.dim)

    def sample(self, g, u):
        return _directions(g) * (self.radius * u ** (1.0 / self.dim))[:, None]

    def radius_bound(self):
        return float(self.radius)

    def to_dict(self):
        return {"family": self.name, "radius": self.radius}


@dataclass(frozen=True, eq=False)
class UniformShell(JumpDensity):
    inner: float = 0.5
    outer: float = 1.0
    name = "uniform_shell"

    def pdf(self, z):
        r = np.linalg.norm(z, axis=1)
        vol = _unit_ball_volume(self.dim) * (self.outer**self.dim - self.inner**self.dim)
        return ((r >= self.inner) & (r < self.outer)) / vol

    def sample(self, g, u):
        d = self.dim
        r = (self.inner**d + u * (self.outer**d - self.inner**d)) ** (1.0 / d)
        return _directions(g) * r[:, None]

    def radius_bound(self):
        return float(self.outer)

    def to_dict(self):
        return {"family": self.name, "inner": self.inner, "outer": self.outer}


@dataclass(frozen=True, eq=False)
class Gaussian(JumpDensity):
    std: float = 1.0
    mean: np.ndarray = field(default=None)
    name = "gaussian"

    def __post_init__(self):
        m = np.zeros(self.dim) if self.mean is None else np.atleast_1d(np.asarray(self.mean, float))
        object.__setattr__(self, "mean", m)

    def pdf(self, z):
        r2 = np.sum((z - self.mean) ** 2, axis=1)
        return np.exp(-0.5 * r2 / self.std**2) / (2 * math.pi * self.std**2) ** (self.dim / 2)

    def sample(self, g, u):
        return self.mean + self.std * g

    def to_dict(self):
        return {"family": self.name, "std": self.std, "mean": self.mean.tolist()}


@dataclass(frozen=True, eq=False)
class Lomax(JumpDensity):
    """Isotropic heavy tail: radius ~ Lomax(alpha, scale), uniform direction.

    The radial density ``alpha scale^alpha / (scale + r)^(alpha + 1)`` keeps the
    jump kernel comparable between nearby starting points far from the target,
    which is what the Harnack comparability condition needs.
    """

    alpha: float = 1.0
    scale: float = 1.0
    name = "lomax"

    def pdf(self, z):
        r = np.linalg.norm(z, axis=1)
        radial = self.alpha * self.scale**self.alpha / (self.scale + r) ** (self.alpha + 1)
        with np.errstate(divide="ignore"):
            return radial / (_sphere_area(self.dim) * r ** (self.dim - 1))

    def sample(self, g, u):
        r = self.scale * ((1.0 - u) ** (-1.0 / self.alpha) - 1.0)
        return _directions(g) * r[:, None]

    def to_dict(self):
        return {"family": self.name, "alpha": self.alpha, "scale": self.scale}


def _positive(p, key, fld, default=None):
    v = _num(p, key, fld, default)
    if v <= 0:
        raise ConfigError(f"{key} must be positive", field=f"{fld}.{key}")
    return v


def jump_density(spec, d: int, fld: str) -> JumpDensity:
    if not isinstance(spec, dict):
        raise ConfigError("density must be a mapping", field=fld)
    name = spec.get("family")
    allowed = {"uniform_ball": {"radius"}, "uniform_shell": {"inner", "outer"},
               "gaussian": {"std", "mean"}, "lomax": {"alpha", "scale"}}
    if name not in allowed:
        raise ConfigError(f"unknown density family {name!r}", field=f"{fld}.family")
    unknown = set(spec) - allowed[name] - {"family"}
    if unknown:
        raise ConfigError(f"unknown keys {sorted(unknown)}", field=fld)
    if name == "uniform_ball":
        return UniformBall(d, _positive(spec, "radius", fld))
    if name == "uniform_shell":
        inner, outer = _num(spec, "inner", fld), _positive(spec, "outer", fld)
        if not 0 <= inner < outer:
            raise ConfigError("need 0 <= inner < outer", field=fld)
        return UniformShell(d, inner, outer)
    if name == "gaussian":
        return Gaussian(d, _positive(spec, "std", fld), _vec(spec, "mean", d, fld, 0.0))
    return Lomax(d, _positive(spec, "alpha", fld), _positive(spec, "scale", fld))
