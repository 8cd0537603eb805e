"""Model description for regime-switching jump diffusions and assumption checks.

A model couples, for each regime ``i``, a drift ``b(x, i)``, a diffusion
matrix ``a(x, i) = s_i(x) A_i`` entering the generator as
``sum_kl a_kl d_k d_l`` (no factor 1/2), a finite-activity jump kernel
``pi_i(x, dz) = intensity * r_i(x, z) * p_i(z) dz`` and a switching matrix
``Q(x)`` whose row sums may be negative (killing).
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import rng
from .errors import ConfigError, StructuralError, UsageError
from .families import (Constant, JumpDensity, ScalarFamily, jump_density,
                       scalar_family)
from .regions import Box, Region, region_from_dict

CEMETERY = -1

# ---------------------------------------------------------------------------
# jump kernels
# ---------------------------------------------------------------------------


def _midpoint_grid(lower, upper, nodes: int):
    d = len(lower)
    edges = [np.linspace(lower[k], upper[k], nodes + 1) for k in range(d)]
    mids = [0.5 * (e[1:] + e[:-1]) for e in edges]
    mesh = np.meshgrid(*mids, indexing="ij")
    pts = np.column_stack([m.ravel() for m in mesh])
    cell = float(np.prod([(upper[k] - lower[k]) / nodes for k in range(d)]))
    return pts, cell


@dataclass(frozen=True, eq=False)
class JumpKernel:
    """Finite-activity kernel thinned from a dominating measure.

    ``intensity * p(z) dz`` dominates ``pi(x, dz)``; a candidate ``z`` drawn
    from ``p`` is accepted with probability ``ratio(x) * ratio_z(z)``.
    """

    regime: int
    intensity: float
    density: JumpDensity
    ratio: ScalarFamily = field(default_factory=lambda: Constant(1.0))
    ratio_z: ScalarFamily = field(default_factory=lambda: Constant(1.0))
    compensated: bool = False
    kappa2: float | None = None
    beta: float | None = None

    @property
    def has_harnack_metadata(self) -> bool:
        return self.kappa2 is not None and self.beta is not None

    def acceptance(self, x: np.ndarray, z: np.ndarray) -> np.ndarray:
        return self.ratio(x) * self.ratio_z(z)

    def kernel_density(self, x: np.ndarray, z: np.ndarray) -> np.ndarray:
        """Lebesgue density of ``pi(x, dz)`` at ``z`` (row-wise pairs)."""
        return self.intensity * self.acceptance(x, z) * self.density.pdf(z)

    @cached_property
    def small_jump_mean(self) -> np.ndarray:
        """``int_{|z|<1} z ratio_z(z) p(z) dz`` by midpoint quadrature."""
        d = self.density.dim
        nodes = {1: 4096, 2: 256}.get(d, 48)
        pts, cell = _midpoint_grid(-np.ones(d), np.ones(d), nodes)
        pts = pts[np.linalg.norm(pts, axis=1) < 1.0]
        w = self.ratio_z(pts) * self.density.pdf(pts) * cell
        return (pts * w[:, None]).sum(axis=0)

    def compensation_drift(self, x: np.ndarray) -> np.ndarray:
        """Drift added so the simulated jumps match the generator's compensated form."""
        if not self.compensated:
            return np.zeros_like(x)
        return -self.intensity * self.ratio(x)[:, None] * self.small_jump_mean[None, :]

    def mass(self, x: np.ndarray, target: Region, nodes: int = 64) -> np.ndarray:
        """``pi(x, B - x)`` for each row of ``x`` by midpoint quadrature over ``B``."""
        lo, hi = target.bounding_box()
        pts, cell = _midpoint_grid(lo, hi, nodes)
        pts = pts[target.contains(pts)]
        out = np.empty(x.shape[0])
        chunk = max(1, 2_000_000 // max(1, pts.shape[0]))
        for s in range(0, x.shape[0], chunk):
            xs = x[s:s + chunk]
            z = (pts[None, :, :] - xs[:, None, :]).reshape(-1, x.shape[1])
            dens = (self.ratio_z(z) * self.density.pdf(z)).reshape(xs.shape[0], -1)
            out[s:s + chunk] = dens.sum(axis=1) * cell
        return self.intensity * self.ratio(x) * out

    def to_dict(self) -> dict:
        out = {"regime": self.regime + 1, "intensity": self.intensity,
               "density": self.density.to_dict(), "ratio": self.ratio.to_dict(),
               "ratio_z": self.ratio_z.to_dict(),
               "convention": "compensated" if self.compensated else "plain"}
        if self.has_harnack_metadata:
            out["harnack"] = {"kappa2": self.kappa2, "beta": self.beta}
        return out


# ---------------------------------------------------------------------------
# model
# ---------------------------------------------------------------------------


def _sym_sqrt(a: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(0.5 * (a + a.T))
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """Coefficients of the switched jump diffusion (regimes indexed from 0)."""

    dim: int
    n_regimes: int
    drift: tuple
    diffusion: tuple
    diffusion_scale: tuple
    jumps: tuple
    rates: tuple
    killing: tuple
    kappa0: float | None = None
    declared_rate_bound: float | None = None
    sample_region: Region | None = None
    source: dict | None = None

    def __post_init__(self):
        d, m = self.dim, self.n_regimes
        if d < 1 or m < 1:
            raise StructuralError("dimension and regime count must be positive")
        for name, seq in (("drift", self.drift), ("diffusion", self.diffusion),
                          ("diffusion_scale", self.diffusion_scale), ("jumps", self.jumps),
                          ("rates", self.rates), ("killing", self.killing)):
            if len(seq) != m:
                raise StructuralError(f"{name}: expected {m} regimes, got {len(seq)}")
        for i in range(m):
            if len(self.drift[i]) != d:
                raise StructuralError(f"drift of regime {i + 1}: expected {d} components")
            if np.shape(self.diffusion[i]) != (d, d):
                raise StructuralError(f"diffusion of regime {i + 1}: expected {d}x{d} matrix")
            if len(self.rates[i]) != m:
                raise StructuralError(f"switching row {i + 1}: expected {m} entries")
            k = self.jumps[i]
            if k is not None and k.density.dim != d:
                raise StructuralError(f"jump density of regime {i + 1} has wrong dimension")
        if self.declared_rate_bound is not None:
            if self.declared_rate_bound < self.family_rate_bound - 1e-12:
                raise ConfigError("rate_bound is below the switching families' bounds",
                                  field="switching.rate_bound")

    # -- construction ------------------------------------------------------

    @classmethod
    def from_dict(cls, cfg: dict) -> "ModelSpec":
        from .config import model_from_dict
        return model_from_dict(cfg)

    @cached_property
    def config_hash(self) -> str:
        payload = json.dumps(self.source if self.source is not None else repr(self),
                             sort_keys=True, default=str)
        return hashlib.sha256(payload.encode()).hexdigest()[:16]

    # -- coefficients --------------------------------------------------------

    def drift_at(self, x: np.ndarray, i: int) -> np.ndarray:
        """Generator drift ``b(x, i)``, shape (n, d)."""
        return np.column_stack([f(x) for f in self.drift[i]])

    def effective_drift(self, x: np.ndarray, i: int) -> np.ndarray:
        """Drift actually simulated: ``b`` plus the small-jump compensation."""
        b = self.drift_at(x, i)
        k = self.jumps[i]
        if k is not None and k.compensated:
            b = b + k.compensation_drift(x)
        return b

    def diffusion_at(self, x: np.ndarray, i: int) -> np.ndarray:
        """``a(x, i)``, shape (n, d, d)."""
        return self.diffusion_scale[i](x)[:, None, None] * self.diffusion[i][None, :, :]

    @cached_property
    def diffusion_root(self) -> tuple:
        """Symmetric square roots of the constant matrix factors ``A_i``."""
        return tuple(_sym_sqrt(np.asarray(a, float)) for a in self.diffusion)

    def q_row(self, x: np.ndarray, i: int) -> np.ndarray:
        """Row ``i`` of ``Q(x)``, shape (n, m)."""
        n = x.shape[0]
        out = np.zeros((n, self.n_regimes))
        for j, f in enumerate(self.rates[i]):
            if j != i:
                out[:, j] = f(x)
        diag = self.rates[i][i]
        if diag is None:
            out[:, i] = -out.sum(axis=1) - self.killing[i](x)
        else:
            out[:, i] = diag(x)
        return out

    def q_matrix(self, x: np.ndarray) -> np.ndarray:
        return np.stack([self.q_row(x, i) for i in range(self.n_regimes)], axis=1)

    def killing_rate(self, x: np.ndarray, i: int) -> np.ndarray:
        """``kappa(x, i) = -sum_j q_ij(x)``."""
        return -self.q_row(x, i).sum(axis=1)

    @cached_property
    def family_rate_bound(self) -> float:
        bound = 0.0
        for i in range(self.n_regimes):
            diag = self.rates[i][i]
            if diag is None:
                s = sum(max(0.0, f.bounds()[1]) for j, f in enumerate(self.rates[i]) if j != i)
                s += max(0.0, self.killing[i].bounds()[1])
            else:
                lo, hi = diag.bounds()
                s = max(abs(lo), abs(hi))
            bound = max(bound, s)
        return float(bound)

    @property
    def rate_bound(self) -> float:
        """Uniformization rate ``Q_max >= sup_x max_i |q_ii(x)|``."""
        if self.declared_rate_bound is not None:
            return float(self.declared_rate_bound)
        return self.family_rate_bound

    @cached_property
    def has_switching(self) -> bool:
        for i in range(self.n_regimes):
            for j, f in enumerate(self.rates[i]):
                if f is not None and f.bounds() != (0.0, 0.0):
                    return True
            if self.killing[i].bounds() != (0.0, 0.0):
                return True
        return False

    @property
    def has_jumps(self) -> bool:
        return any(k is not None and k.intensity > 0 for k in self.jumps)

    def is_markovian_declared(self) -> bool:
        """True when every row sum is identically zero by construction."""
        return all(self.rates[i][i] is None and self.killing[i].bounds() == (0.0, 0.0)
                   for i in range(self.n_regimes))

    def coefficient_families(self):
        """Yield ``(field name, regime, family)`` for every scalar family."""
        for i in range(self.n_regimes):
            for k, f in enumerate(self.drift[i]):
                yield f"regimes[{i + 1}].drift[{k + 1}]", i, f
            yield f"regimes[{i + 1}].diffusion.scale", i, self.diffusion_scale[i]
            for j, f in enumerate(self.rates[i]):
                if f is not None:
                    yield f"switching.rates[{i + 1}][{j + 1}]", i, f
            yield f"switching.killing[{i + 1}]", i, self.killing[i]
            k = self.jumps[i]
            if k is not None:
                yield f"jumps[regime={i + 1}].ratio", i, k.ratio

    def with_changes(self, **changes) -> "ModelSpec":
        from dataclasses import replace
        changes.setdefault("source", None)
        return replace(self, **changes)


# ---------------------------------------------------------------------------
# boundary data
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class BoundaryData:
    """Exterior data ``phi(x, i)`` with a declared upper bound ``M``."""

    families: tuple
    declared_bound: float | None = None
    mirror_symmetric: bool = False

    @property
    def n_regimes(self) -> int:
        return len(self.families)

    @property
    def bound(self) -> float:
        if self.declared_bound is not None:
            return float(self.declared_bound)
        return max(f.bounds()[1] for f in self.families)

    @property
    def lower_bound(self) -> float:
        return min(f.bounds()[0] for f in self.families)

    def __call__(self, x: np.ndarray, regimes: np.ndarray) -> np.ndarray:
        """Values at exit states; the cemetery (regime ``-1``) maps to zero."""
        regimes = np.asarray(regimes)
        out = np.zeros(x.shape[0])
        for i, f in enumerate(self.families):
            sel = regimes == i
            if np.any(sel):
                out[sel] = f(x[sel])
        return out

    def is_identically_zero(self) -> bool:
        return all(f.bounds() == (0.0, 0.0) for f in self.families)

    def scaled(self, c: float) -> "BoundaryData":
        from .families import LinearCombination
        return BoundaryData(tuple(LinearCombination(((c, f),)) for f in self.families),
                            None if self.declared_bound is None else c * self.declared_bound)

    def to_dict(self) -> dict:
        out = {"regimes": [f.to_dict() for f in self.families]}
        if self.declared_bound is not None:
            out["bound"] = self.declared_bound
        return out

    @classmethod
    def constant(cls, value: float, m: int) -> "BoundaryData":
        return cls(tuple(Constant(float(value)) for _ in range(m)), mirror_symmetric=True)


# ---------------------------------------------------------------------------
# assumption checks
# ---------------------------------------------------------------------------


@dataclass
class CheckResult:
    status: str  # "pass" | "fail" | "not-declared"
    detail: str = ""
    witness: dict | None = None

    def to_dict(self) -> dict:
        out = {"status": self.status, "detail": self.detail}
        if self.witness is not None:
            out["witness"] = self.witness
        return out


@dataclass
class ValidationReport:
    checks: dict
    config_hash: str = ""

    @property
    def usable(self) -> bool:
        return all(self.checks[k].status == "pass" for k in ("A1", "A2", "A3", "Q"))

    def failures(self) -> list[str]:
        return [k for k, c in self.checks.items() if c.status == "fail"]

    def to_dict(self) -> dict:
        return {"config_hash": self.config_hash, "usable": self.usable,
                "checks": {k: c.to_dict() for k, c in self.checks.items()}}


@dataclass
class EllipticityBounds:
    lower: float
    upper: float
    passed: bool | None
    witness: dict | None = None


def _default_samples(spec: ModelSpec, n: int, seed: int = 0) -> np.ndarray:
    region = spec.sample_region or Box(-2.0 * np.ones(spec.dim), 2.0 * np.ones(spec.dim))
    u = np.column_stack([rng.uniform_pair(seed, np.arange(n), 0, s) for s in range(spec.dim // 2 + 1)])
    return region.sample_inside(u[:, :spec.dim + 1])


def ellipticity_bounds(spec: ModelSpec, sample_points) -> EllipticityBounds:
    """Extreme eigenvalues of ``a(x, i)`` over sampled ``(x, i)`` pairs.

    ``sample_points`` is a list of ``(x, i)`` pairs or a pair of arrays
    ``(points (n, d), regimes (n,))``.
    """
    pts, regs = _split_samples(spec, sample_points)
    if pts.shape[0] == 0:
        raise UsageError("ellipticity_bounds needs at least one sample point")
    for i in np.unique(regs):
        a = np.asarray(spec.diffusion[i], float)
        if not np.allclose(a, a.T, rtol=0, atol=1e-12):
            raise StructuralError(f"diffusion matrix of regime {i + 1} is not symmetric")
    lo, hi = math.inf, -math.inf
    wit_lo = wit_hi = None
    for i in np.unique(regs):
        x = pts[regs == i]
        w, v = np.linalg.eigh(spec.diffusion_at(x, int(i)))
        kmin, kmax = int(np.argmin(w[:, 0])), int(np.argmax(w[:, -1]))
        if w[kmin, 0] < lo:
            lo = float(w[kmin, 0])
            wit_lo = {"x": x[kmin].tolist(), "regime": int(i) + 1, "xi": v[kmin][:, 0].tolist(),
                      "eigenvalue": lo}
        if w[kmax, -1] > hi:
            hi = float(w[kmax, -1])
            wit_hi = {"x": x[kmax].tolist(), "regime": int(i) + 1, "xi": v[kmax][:, -1].tolist(),
                      "eigenvalue": hi}
    passed = None
    witness = None
    if spec.kappa0 is not None:
        k0 = spec.kappa0
        tol = 1e-12
        if lo < k0 - tol:
            passed, witness = False, wit_lo
        elif hi > 1.0 / k0 + tol:
            passed, witness = False, wit_hi
        else:
            passed = True
    return EllipticityBounds(lo, hi, passed, witness)


def _split_samples(spec: ModelSpec, sample_points):
    if isinstance(sample_points, tuple) and len(sample_points) == 2 and \
            isinstance(sample_points[0], np.ndarray) and np.ndim(sample_points[0]) == 2:
        return np.asarray(sample_points[0], float), np.asarray(sample_points[1], int)
    pairs = list(sample_points)
    if not pairs:
        return np.empty((0, spec.dim)), np.empty(0, int)
    pts = np.array([np.atleast_1d(np.asarray(p[0], float)) for p in pairs])
    regs = np.array([int(p[1]) for p in pairs])
    return pts.reshape(len(pairs), spec.dim), regs


def validate_model(spec: ModelSpec, n_samples: int = 10_000, seed: int = 0) -> ValidationReport:
    """Sample-based check of the standing assumptions.

    Reports ``A1`` (bounded families), ``A2`` (uniform ellipticity),
    ``A3`` (jump domination and thinning validity), ``A4`` (kernel
    comparability, only when declared) and ``Q`` (sub-Markovian switching).
    """
    x = _default_samples(spec, n_samples, seed)
    checks: dict[str, CheckResult] = {}

    a1 = CheckResult("pass", f"{n_samples} points per regime")
    for name, i, fam in spec.coefficient_families():
        vals = fam(x)
        lo, hi = fam.bounds()
        bad = ~np.isfinite(vals) | (vals < lo - 1e-12) | (vals > hi + 1e-12)
        if np.any(bad):
            k = int(np.argmax(bad))
            a1 = CheckResult("fail", f"{name} leaves its declared range [{lo}, {hi}]",
                             {"field": name, "x": x[k].tolist(), "value": float(vals[k])})
            break
    checks["A1"] = a1

    regs = np.repeat(np.arange(spec.n_regimes), n_samples)
    pts = np.tile(x, (spec.n_regimes, 1))
    try:
        eb = ellipticity_bounds(spec, (pts, regs))
    except StructuralError as exc:
        checks["A2"] = CheckResult("fail", str(exc))
    else:
        rng_txt = f"eigenvalues in [{eb.lower:.6g}, {eb.upper:.6g}]"
        if eb.passed is None:
            checks["A2"] = CheckResult("not-declared", rng_txt + "; kappa0 not declared")
        elif eb.passed:
            checks["A2"] = CheckResult("pass", rng_txt + f" within [{spec.kappa0}, {1 / spec.kappa0}]")
        else:
            checks["A2"] = CheckResult("fail", rng_txt + f" not within [{spec.kappa0}, {1 / spec.kappa0}]",
                                       eb.witness)

    checks["A3"] = _check_jumps(spec, x, seed)
    checks["A4"] = _check_comparability(spec, seed)
    checks["Q"] = _check_switching(spec, x)
    return ValidationReport(checks, spec.config_hash)


def _check_switching(spec: ModelSpec, x: np.ndarray) -> CheckResult:
    for i in range(spec.n_regimes):
        row = spec.q_row(x, i)
        for j in range(spec.n_regimes):
            if j != i and np.any(row[:, j] < 0):
                k = int(np.argmax(row[:, j] < 0))
                return CheckResult("fail", f"negative off-diagonal rate q_{i + 1}{j + 1}",
                                   {"field": f"switching.rates[{i + 1}][{j + 1}]",
                                    "x": x[k].tolist(), "value": float(row[k, j])})
        sums = row.sum(axis=1)
        if np.any(sums > 1e-12):
            k = int(np.argmax(sums))
            return CheckResult("fail", f"row {i + 1} of Q has positive sum",
                               {"field": f"switching.rates[{i + 1}]", "x": x[k].tolist(),
                                "value": float(sums[k])})
        if np.any(-row[:, i] > spec.rate_bound + 1e-12):
            k = int(np.argmax(-row[:, i]))
            return CheckResult("fail", "rate bound below |q_ii|",
                               {"field": "switching.rate_bound", "x": x[k].tolist(),
                                "value": float(-row[k, i])})
    kind = "Markovian" if spec.is_markovian_declared() else "sub-Markovian"
    return CheckResult("pass", f"{kind}; uniformization rate {spec.rate_bound:.6g}")


def _jump_draws(kernel: JumpKernel, n: int, seed: int, slot0: int):
    d = kernel.density.dim
    g = rng.normals(seed, np.arange(n), 1, slot0, d)
    u = rng.uniform_pair(seed, np.arange(n), 1, slot0 + (d + 1) // 2)[:, 0]
    return kernel.density.sample(g, u)


def _check_jumps(spec: ModelSpec, x: np.ndarray, seed: int) -> CheckResult:
    kappa1 = 0.0
    for i, k in enumerate(spec.jumps):
        if k is None:
            continue
        if not (math.isfinite(k.intensity) and k.intensity >= 0):
            return CheckResult("fail", f"jump intensity of regime {i + 1} is not finite",
                               {"field": f"jumps[regime={i + 1}].intensity"})
        z = _jump_draws(k, x.shape[0], seed, 10 * i)
        r = k.acceptance(x, z)
        bad = ~np.isfinite(r) | (r < 0) | (r > 1)
        if np.any(bad):
            j = int(np.argmax(bad))
            return CheckResult("fail", f"thinning ratio of regime {i + 1} leaves [0, 1]",
                               {"field": f"jumps[regime={i + 1}].ratio", "x": x[j].tolist(),
                                "z": z[j].tolist(), "value": float(r[j])})
        kappa1 += k.intensity * float(np.mean(np.minimum(1.0, np.sum(z * z, axis=1))))
    return CheckResult("pass", f"dominating measure with int(1 ^ |z|^2) Pi(dz) ~ {kappa1:.6g}",
                       {"kappa1": kappa1})


def _check_comparability(spec: ModelSpec, seed: int, n: int = 10_000) -> CheckResult:
    kernels = [k for k in spec.jumps if k is not None and k.intensity > 0]
    if not kernels:
        return CheckResult("pass", "no jumps: comparability holds trivially")
    if not all(k.has_harnack_metadata for k in kernels):
        return CheckResult("not-declared", "kappa2/beta not declared for every jump kernel")
    worst = 0.0
    d = spec.dim
    idx = np.arange(n)
    for k in kernels:
        u = np.column_stack([rng.uniform_pair(seed + 1, idx, 2, s) for s in range(d + 3)])
        r = u[:, 0]  # r in (0, 1]
        x0 = (spec.sample_region or Box(-np.ones(d), np.ones(d))).sample_inside(u[:, 1:1 + d + 1])
        g = rng.normals(seed + 1, idx, 3, 0, 3 * d)
        dirs = [g[:, j * d:(j + 1) * d] / np.linalg.norm(g[:, j * d:(j + 1) * d], axis=1, keepdims=True)
                for j in range(3)]
        ux = u[:, d + 2]
        uy = rng.uniform_pair(seed + 1, idx, 4, 0)
        x = x0 + dirs[0] * (0.5 * r * ux ** (1 / d))[:, None]
        y = x0 + dirs[1] * (0.5 * r * uy[:, 0] ** (1 / d))[:, None]
        # target z outside B(x0, r): radius r * (1 + Pareto tail)
        z = x0 + dirs[2] * (r / uy[:, 1] ** 0.5)[:, None]
        num = k.kernel_density(x, z - x)
        den = k.kernel_density(y, z - y)
        alpha = k.kappa2 * r ** (-k.beta)
        bad = num > np.maximum(1.0, alpha) * den * (1 + 1e-9)
        if np.any(bad):
            j = int(np.argmax(bad))
            return CheckResult("fail", f"comparability fails for regime {k.regime + 1}",
                               {"x": x[j].tolist(), "y": y[j].tolist(), "z": z[j].tolist(),
                                "r": float(r[j]), "ratio": float(num[j] / den[j]) if den[j] > 0 else math.inf,
                                "alpha_r": float(alpha[j])})
        with np.errstate(divide="ignore", invalid="ignore"):
            q = np.where(den > 0, num / den / np.maximum(1.0, alpha), 0.0)
        worst = max(worst, float(np.nanmax(q)))
    return CheckResult("pass", f"sampled ratio / alpha_r at most {worst:.4g}")


# ---------------------------------------------------------------------------
# irreducibility
# ---------------------------------------------------------------------------


@dataclass
class IrreducibilityReport:
    mode: str
    irreducible: bool
    paths: dict
    witness: tuple | None
    link_infimum: np.ndarray
    link_positive_fraction: np.ndarray

    def to_dict(self) -> dict:
        return {"mode": self.mode, "irreducible": self.irreducible,
                "paths": {f"{i + 1}->{j + 1}": [s + 1 for s in p] for (i, j), p in self.paths.items()},
                "witness": None if self.witness is None else [w + 1 for w in self.witness]}


def irreducibility_check(spec: ModelSpec, region: Region, mode: str = "irreducible",
                         sample_points=None, threshold=None, n_samples: int = 4096,
                         seed: int = 0) -> IrreducibilityReport:
    """Connectivity of the switching graph on ``region``.

    ``irreducible`` links ``i -> j`` when ``q_ij > 0`` on a positive fraction of
    the samples.  ``strict`` requires ``inf q_ij >= threshold > 0`` on every
    off-diagonal link (``threshold`` defaults to any positive infimum).
    """
    import networkx as nx

    if mode not in ("irreducible", "strict"):
        raise UsageError(f"unknown irreducibility mode {mode!r}")
    if sample_points is None:
        u = np.column_stack([rng.uniform_pair(seed, np.arange(n_samples), 5, s)
                             for s in range(spec.dim // 2 + 1)])
        x = region.sample_inside(u[:, :spec.dim + 1])
        x = x[region.contains(x)]
    else:
        x = np.asarray(sample_points, float).reshape(-1, spec.dim)
    if x.shape[0] == 0:
        raise UsageError("irreducibility_check needs a nonempty sample set")
    m = spec.n_regimes
    q = spec.q_matrix(x)
    inf = q.min(axis=0)
    frac = (q > 0).mean(axis=0)
    g = nx.DiGraph()
    g.add_nodes_from(range(m))
    witness = None
    for i in range(m):
        for j in range(m):
            if i == j:
                continue
            if mode == "strict":
                q0 = 0.0 if threshold is None else float(np.asarray(threshold)[i, j]
                                                           if np.ndim(threshold) else threshold)
                ok = inf[i, j] > 0 and inf[i, j] >= q0
                if not ok and witness is None:
                    witness = (i, j)
            else:
                ok = frac[i, j] > 0
            if ok:
                g.add_edge(i, j)
    paths = {}
    for i in range(m):
        for j in range(m):
            if i == j:
                continue
            try:
                paths[(i, j)] = nx.shortest_path(g, i, j)
            except nx.NetworkXNoPath:
                if witness is None:
                    witness = (i, j)
    return IrreducibilityReport(mode, witness is None, paths, witness, inf, frac)
