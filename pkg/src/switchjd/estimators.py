"""Monte Carlo estimators built on :mod:`switchjd.sampler`.

Every estimator is a deterministic function of its inputs: paths are indexed,
per-path values are concatenated in path order and reduced with fixed-shape
numpy sums, so the worker count never changes a result.  Standard errors
are sample standard deviations over ``sqrt(N)``.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import UsageError
from .families import Constant, ScalarFamily
from .lattice import Lattice, LatticeField
from .model import CEMETERY, BoundaryData, ModelSpec
from .regions import Region
from .sampler import (EXITED, HIT, KILLED, TRUNCATED, GreenIntegrand, LevyCounter,
                      SamplerConfig, StopRule, simulate, simulate_batch)

TRUNCATION_WARN = 0.01


@dataclass
class EstimateResult:
    """A Monte Carlo mean with provenance."""

    value: float
    stderr: float
    n: int
    seed: int
    h: float
    wall_time: float
    truncated_fraction: float = 0.0
    killed_fraction: float = 0.0
    warning: str | None = None
    label: str = ""
    model_hash: str | None = None
    sample_min: float = math.nan
    sample_max: float = math.nan
    detail: dict = field(default_factory=dict)

    def z(self, reference: float) -> float:
        """``(value - reference) / stderr``; infinite when the error is zero and the values differ."""
        diff = self.value - reference
        if self.stderr > 0:
            return diff / self.stderr
        return 0.0 if diff == 0 else math.copysign(math.inf, diff)

    def within(self, reference: float, k: float = 3.0) -> bool:
        return abs(self.value - reference) <= k * self.stderr

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        """One-line JSON record."""
        return json.dumps(self.to_dict(), sort_keys=True, default=_json_default)


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(type(obj).__name__)


def summarize(values, **meta) -> EstimateResult:
    """Mean and standard error of per-path values (given in path order)."""
    v = np.asarray(values, dtype=float)
    n = v.shape[0]
    se = float(np.std(v, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return EstimateResult(value=float(np.mean(v)), stderr=se, n=n,
                          sample_min=float(v.min()), sample_max=float(v.max()), **meta)


def _finish(res, values, model, cfg, t0, label, **extra) -> EstimateResult:
    trunc = float(np.mean(res.status == TRUNCATED))
    warn = None
    if trunc > TRUNCATION_WARN:
        warn = f"{trunc:.2%} of paths truncated at the horizon {cfg.horizon}"
    return summarize(values, seed=cfg.seed, h=cfg.step, wall_time=time.perf_counter() - t0,
                     truncated_fraction=trunc, killed_fraction=float(np.mean(res.status == KILLED)),
                     warning=warn, label=label, model_hash=model.config_hash, **extra)


def _as_family(f) -> ScalarFamily:
    if isinstance(f, (int, float)):
        return Constant(float(f))
    if not callable(f):
        raise UsageError("integrand must be a number or a scalar family")
    return f


def _check_inside(region: Region, x, what: str = "initial point"):
    if not bool(region.contains(np.atleast_1d(np.asarray(x, float)))[0]):
        raise UsageError(f"{what} {list(np.atleast_1d(x))} is not inside the region")


# ---------------------------------------------------------------------------
# exit times and hitting probabilities
# ---------------------------------------------------------------------------


def estimate_exit_time(model: ModelSpec, region: Region, init, cfg: SamplerConfig, n: int,
                       *, first_path: int = 0):
    """Mean exit time of ``region`` and its empirical distribution function.

    Killed paths stop at their lifetime; truncated paths count with the
    horizon as a lower bound and raise the truncation warning.

    Returns:
        ``(result, tail)`` where ``tail(t)`` is the fraction of paths with
        ``tau <= t`` (vectorised over ``t``).
    """
    _check_inside(region, init[0])
    t0 = time.perf_counter()
    res = simulate(model, init, StopRule.exit_of(region), cfg, n, first_path=first_path)
    est = _finish(res, res.time, model, cfg, t0, "exit_time")
    taus = np.sort(res.time)

    def tail(t):
        return np.searchsorted(taus, np.asarray(t, dtype=float), side="right") / taus.shape[0]

    return est, tail


def estimate_hitting_prob(model: ModelSpec, target: Region, container: Region, init,
                          cfg: SamplerConfig, n: int, *, regime: int | None = None,
                          first_path: int = 0) -> EstimateResult:
    """Probability of entering ``target`` (in ``regime`` if given) before leaving ``container``."""
    _check_inside(container, init[0])
    t0 = time.perf_counter()
    res = simulate(model, init, StopRule.hit(target, container, regime), cfg, n,
                   first_path=first_path)
    return _finish(res, (res.status == HIT).astype(float), model, cfg, t0, "hitting_prob")


# ---------------------------------------------------------------------------
# harmonic functions
# ---------------------------------------------------------------------------


def harmonic_samples(model: ModelSpec, region: Region, phi: BoundaryData, init,
                     cfg: SamplerConfig, n: int, *, first_path: int = 0):
    """Per-path values ``phi(X_tau, Lambda_tau)``: zero when killed or truncated."""
    res = simulate(model, init, StopRule.exit_of(region), cfg, n, first_path=first_path)
    return res, _phi_at_exit(phi, res)


def _phi_at_exit(phi: BoundaryData, res) -> np.ndarray:
    exited = res.status == EXITED
    return np.where(exited, phi(res.x, np.where(exited, res.regime, CEMETERY)), 0.0)


class _Slice:
    """Status view of a block of a batched result."""

    def __init__(self, res, sl):
        self.status = res.status[sl]


def estimate_harmonic(model: ModelSpec, region: Region, phi: BoundaryData, queries,
                      cfg: SamplerConfig, n: int, *, path_offset: int = 0):
    """``u(x, i) = E_{x,i} phi(X_tau, Lambda_tau)`` at query states.

    Args:
        queries: a :class:`Lattice` (every node in every regime) or a list of
            ``(x, i)`` pairs with regimes from 0.
        path_offset: first path index; query ``q`` uses paths
            ``path_offset + q n .. path_offset + (q + 1) n - 1``.

    Returns:
        A :class:`LatticeField` for a lattice (with the per-query results in
        ``meta["results"]``), otherwise a list of :class:`EstimateResult`.
    """
    if phi.n_regimes != model.n_regimes:
        raise UsageError("boundary data and model differ in regime count")
    lattice = queries if isinstance(queries, Lattice) else None
    if lattice is not None:
        queries = [(lattice.nodes[k], i) for i in range(model.n_regimes) for k in range(len(lattice))]
    xs = []
    for x, _ in queries:
        _check_inside(region, x, "query point")
        xs.append(np.atleast_1d(np.asarray(x, dtype=float)))
    nq = len(queries)
    t0 = time.perf_counter()
    res = simulate_batch(model, np.repeat(np.array(xs), n, axis=0),
                         np.repeat([int(i) for _, i in queries], n),
                         path_offset + np.arange(nq * n), StopRule.exit_of(region), cfg)
    vals = _phi_at_exit(phi, res)
    wall = (time.perf_counter() - t0) / nq
    out = []
    for q, (x, i) in enumerate(queries):
        sl = slice(q * n, (q + 1) * n)
        out.append(_finish(_Slice(res, sl), vals[sl], model, cfg, time.perf_counter() - wall,
                           f"harmonic[x={list(np.atleast_1d(x))}, i={i + 1}]"))
    if lattice is None:
        return out
    return _field(lattice, model.n_regimes, out)


def _field(lattice: Lattice, m: int, results: list) -> LatticeField:
    nn = len(lattice)
    vals = np.array([r.value for r in results]).reshape(m, nn).T
    se = np.array([r.stderr for r in results]).reshape(m, nn).T
    meta = {"results": results,
            "killed_fraction": float(np.mean([r.killed_fraction for r in results])),
            "truncated_fraction": float(max(r.truncated_fraction for r in results)),
            "sample_max": float(max(r.sample_max for r in results)),
            "sample_min": float(min(r.sample_min for r in results))}
    return LatticeField(lattice, vals, se, meta)


# ---------------------------------------------------------------------------
# Green operators of the frozen-regime process
# ---------------------------------------------------------------------------


def estimate_green(model: ModelSpec, regime: int, region: Region, f, x, cfg: SamplerConfig,
                   n: int, *, killing=None, first_path: int = 0) -> EstimateResult:
    """``E_x int_0^tau e(s) f(X_s) ds`` for the process frozen in ``regime``.

    ``e`` is the survival weight of killing at rate ``-q_ii`` (or at the rate
    given by ``killing``, a number or scalar family).  ``f`` and the killing
    rate enter each step as the mean of their endpoint values and the discount
    is integrated exactly over the step; the last step ends at the exit time.
    """
    _check_inside(region, x)
    f = _as_family(f)
    kill = None if killing is None else _as_family(killing)
    t0 = time.perf_counter()
    obs = GreenIntegrand((f,))
    res = simulate(model, (x, regime), StopRule.exit_of(region), cfg, n, frozen=True,
                   observers=(obs,), first_path=first_path, kill_rate=kill)
    return _finish(res, res.observed[0][:, 0], model, cfg, t0, "green")


# ---------------------------------------------------------------------------
# Levy system
# ---------------------------------------------------------------------------


def levy_system_residual(model: ModelSpec, source: Region, target: Region, regime: int,
                         horizon: float, init, cfg: SamplerConfig, n: int, *,
                         nodes: int = 64, first_path: int = 0) -> EstimateResult:
    """Jump count from ``A`` into ``B`` in ``regime`` minus its compensator, up to ``horizon``.

    Both terms are computed on the same paths; ``pi(x, B - x)`` uses a
    midpoint rule with ``nodes`` points per dimension of ``B``.
    ``detail`` holds the two terms separately.
    """
    if not horizon > 0:
        raise UsageError("horizon must be positive")
    if _set_distance(source, target) <= 0:
        raise UsageError("the two sets must be at positive distance")
    t0 = time.perf_counter()
    obs = LevyCounter(source, target, regime, nodes)
    res = simulate(model, init, StopRule.at_horizon(horizon), cfg, n, observers=(obs,),
                   first_path=first_path)
    counts, comp = res.observed[0][:, 0], res.observed[0][:, 1]
    est = _finish(res, counts - comp, model, cfg, t0, "levy_residual")
    c, k = summarize(counts, seed=cfg.seed, h=cfg.step, wall_time=0.0), \
        summarize(comp, seed=cfg.seed, h=cfg.step, wall_time=0.0)
    est.detail = {"count": c.value, "count_stderr": c.stderr,
                  "compensator": k.value, "compensator_stderr": k.stderr, "nodes": nodes}
    lo, hi = target.bounding_box()
    width = float(np.min(hi - lo))
    if nodes < 16:
        est.warning = f"quadrature grid of {nodes} nodes is coarse for a set of width {width:g}"
    return est


def _set_distance(a: Region, b: Region, n: int = 4096) -> float:
    """Lower estimate of ``dist(A, B)`` from boundary-distance queries on a sample of ``A``."""
    lo, hi = a.bounding_box()
    d = lo.shape[0]
    k = max(2, int(round(n ** (1.0 / d))))
    grids = np.meshgrid(*[np.linspace(lo[j], hi[j], k) for j in range(d)], indexing="ij")
    pts = np.column_stack([g.ravel() for g in grids])
    pts = pts[a.signed_distance(pts) >= 0] if np.any(a.signed_distance(pts) >= 0) else pts
    cell = float(np.max((hi - lo) / (k - 1)))
    return float(np.min(-b.signed_distance(pts))) - cell
