"""Coupled harmonic system by Green-operator fixed-point iteration.

For each regime ``i`` the harmonic function splits as

    u(., i) = v_i + sum_{j != i} G^i_D(q_ij u(., j)),

where ``G^i_D`` is the Green operator of the regime-``i`` process killed at
rate ``-q_ii`` and ``v_i`` the discounted boundary term.  Both are sampled
once per (node, regime) from the frozen-regime process: ``v_i`` as a mean of
``e(tau) phi(X_tau, i)`` and the Green operator as a matrix acting on node
values through the lattice interpolation weights.  The iteration then runs
on these frozen samples, so it is a deterministic linear map.

Between the outermost nodes and the boundary the coupling term uses the
known boundary values ``phi(., j)`` (harmonic functions are continuous up to
regular boundary points), so that part of it is folded into ``v``.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import DivergenceError, UsageError
from .estimators import EstimateResult, TRUNCATION_WARN, estimate_harmonic
from .lattice import Lattice, LatticeField, build_lattice
from .model import BoundaryData, ModelSpec
from .regions import Region
from .sampler import (EXITED, TRUNCATED, OccupationProjector, SamplerConfig, StopRule,
                      simulate_batch)

__all__ = ["build_lattice", "FrozenSamples", "sample_frozen", "estimate_boundary_term",
           "green_apply", "ConvergenceTrace", "fixed_point_solve", "DiscrepancyReport",
           "compare_direct"]


@dataclass
class FrozenSamples:
    """First and second moments of the frozen-regime samples at every (node, regime).

    Rows are ordered regime-major: row ``i * n_nodes + k`` is node ``k`` in
    regime ``i``; ``K`` maps stacked node values (same order) to Green terms.
    """

    lattice: Lattice
    n_regimes: int
    n: int
    v: np.ndarray
    K: np.ndarray
    m_vv: np.ndarray
    m_vz: np.ndarray
    m_zz: np.ndarray
    truncated: np.ndarray
    extrapolated: np.ndarray
    wall_time: float = 0.0

    @property
    def v_stderr(self) -> np.ndarray:
        var = (self.m_vv - self.v ** 2) * self.n / max(self.n - 1, 1)
        return np.sqrt(np.maximum(var, 0.0) / self.n)

    def row_variance(self, u: np.ndarray) -> np.ndarray:
        """Per-row variance of ``v + Z . u`` over paths (unbiased)."""
        mean = self.v + self.K @ u
        second = self.m_vv + 2.0 * (self.m_vz @ u)
        if self.m_zz.shape[1] == u.shape[0]:
            second = second + np.einsum("k,rkl,l->r", u, self.m_zz, u)
        return np.maximum(second - mean ** 2, 0.0) * self.n / max(self.n - 1, 1)


def _node_offset(i: int, k: int, nn: int, n: int, path_offset: int) -> int:
    return path_offset + (i * nn + k) * n


def sample_frozen(model: ModelSpec, region: Region, phi: BoundaryData, lattice: Lattice,
                  cfg: SamplerConfig, n: int, *, regimes=None, path_offset: int = 0,
                  green: bool = True) -> FrozenSamples:
    """Sample boundary terms and projected Green operators at every node.

    Args:
        regimes: regimes to sample (default all); rows of other regimes stay zero.
        path_offset: first path index; (node ``k``, regime ``i``) uses the
            ``n`` paths starting at ``path_offset + (i n_nodes + k) n``.
        green: also project the occupation measure (needed for coupling).
    """
    if phi is not None and phi.n_regimes != model.n_regimes:
        raise UsageError("boundary data and model differ in regime count")
    t0 = time.perf_counter()
    m, nn = model.n_regimes, len(lattice)
    rows = m * nn
    v = np.zeros(rows)
    K = np.zeros((rows, rows))
    m_vv = np.zeros(rows)
    m_vz = np.zeros((rows, rows))
    m_zz = np.zeros((rows, rows, rows)) if green and m > 1 else np.zeros((rows, 1, 1))
    trunc = np.zeros(rows)
    extrap = np.zeros(rows)
    todo = [i * nn + k for i in (range(m) if regimes is None else regimes) for k in range(nn)]
    project = green and m > 1
    obs = (OccupationProjector(lattice, phi),) if project else ()
    res = simulate_batch(
        model, np.repeat(lattice.nodes[[r % nn for r in todo]], n, axis=0),
        np.repeat([r // nn for r in todo], n),
        np.concatenate([_node_offset(r // nn, r % nn, nn, n, path_offset) + np.arange(n) for r in todo]),
        StopRule.exit_of(region), cfg, frozen=True, observers=obs)
    for b, r in enumerate(todo):
        sl = slice(b * n, (b + 1) * n)
        status = res.status[sl]
        exited = status == EXITED
        y = np.zeros(n)
        if phi is not None and np.any(exited):
            y[exited] = np.exp(res.log_weight[sl][exited]) * phi.families[r // nn](res.x[sl][exited])
        v[r] = np.mean(y)
        m_vv[r] = np.mean(y * y)
        trunc[r] = np.mean(status == TRUNCATED)
        if project:
            z = res.observed[0][sl, :rows]
            extrap[r] = float(np.mean(res.observed[0][sl, rows]))
            y = y + res.observed[0][sl, rows + 1]
            v[r] = np.mean(y)
            m_vv[r] = np.mean(y * y)
            K[r] = z.mean(axis=0)
            m_vz[r] = (y @ z) / n
            m_zz[r] = (z.T @ z) / n
    return FrozenSamples(lattice, m, n, v, K, m_vv, m_vz, m_zz, trunc, extrap,
                         time.perf_counter() - t0)


def _single_field(lattice: Lattice, values, stderr, **meta) -> LatticeField:
    return LatticeField(lattice, np.asarray(values).reshape(-1, 1),
                        np.asarray(stderr).reshape(-1, 1), dict(meta))


def estimate_boundary_term(model: ModelSpec, regime: int, region: Region, phi: BoundaryData,
                           lattice: Lattice, cfg: SamplerConfig, n: int, *,
                           path_offset: int = 0) -> LatticeField:
    """``v_i(x) = E_x[e(tau) phi(X_tau, i)]`` at every node for the frozen regime ``i``.

    Returns a one-column field.  The paths are those of
    :func:`estimate_harmonic` on the same lattice and offset, so without
    switching the two agree exactly.
    """
    fs = sample_frozen(model, region, phi, lattice, cfg, n, regimes=[regime],
                       path_offset=path_offset, green=False)
    nn = len(lattice)
    rows = slice(regime * nn, (regime + 1) * nn)
    tr = float(fs.truncated[rows].max())
    warn = f"{tr:.2%} of paths truncated" if tr > TRUNCATION_WARN else None
    return _single_field(lattice, fs.v[rows], fs.v_stderr[rows], regime=regime,
                         truncated_fraction=tr, warning=warn)


def green_apply(model: ModelSpec, regime: int, region: Region, g, source_regime: int,
                lattice: Lattice, cfg: SamplerConfig, n: int, *, path_offset: int = 0,
                samples: FrozenSamples | None = None) -> LatticeField:
    """``G^i_D(q_ij g)`` at every node, with ``g`` interpolated from node values.

    Args:
        g: node values of regime ``j = source_regime`` (array or one-column field).
        samples: reuse frozen samples instead of simulating.

    Returns a one-column field; ``meta["extrapolated_time"]`` is the mean
    weighted time spent outside the nodes' bounding box (where ``g`` is
    extrapolated by a constant).
    """
    if source_regime == regime:
        raise UsageError("the Green term couples distinct regimes")
    nn = len(lattice)
    gv = np.asarray(g.values[:, 0] if isinstance(g, LatticeField) else g, dtype=float)
    if gv.shape != (nn,) or not np.all(np.isfinite(gv)):
        raise UsageError("g must hold one finite value per node")
    fs = samples
    if fs is None:
        fs = sample_frozen(model, region, None, lattice, cfg, n, regimes=[regime],
                           path_offset=path_offset)
    rows = slice(regime * nn, (regime + 1) * nn)
    u = np.zeros(model.n_regimes * nn)
    u[source_regime * nn:(source_regime + 1) * nn] = gv
    val = fs.K[rows] @ u if model.n_regimes > 1 else np.zeros(nn)
    if model.n_regimes > 1:
        second = np.einsum("k,rkl,l->r", u, fs.m_zz[rows], u)
        var = np.maximum(second - val ** 2, 0.0) * fs.n / max(fs.n - 1, 1)
    else:
        var = np.zeros(nn)
    return _single_field(lattice, val, np.sqrt(var / fs.n), regime=regime,
                         source_regime=source_regime,
                         extrapolated_time=float(fs.extrapolated[rows].max()))


@dataclass
class ConvergenceTrace:
    """Sup-norm update sizes of the fixed-point iteration."""

    norms: list = field(default_factory=list)
    tol: float = 0.0
    converged: bool = False

    @property
    def iterations(self) -> int:
        return len(self.norms)

    @property
    def ratios(self) -> list:
        return [b / a for a, b in zip(self.norms, self.norms[1:]) if a > 0]

    def to_dict(self) -> dict:
        return {"norms": self.norms, "ratios": self.ratios, "tol": self.tol,
                "iterations": self.iterations, "converged": self.converged}


def fixed_point_solve(model: ModelSpec, region: Region, phi: BoundaryData, lattice: Lattice,
                      cfg: SamplerConfig, n: int, *, max_iter: int = 100, tol: float | None = None,
                      path_offset: int = 0, samples: FrozenSamples | None = None):
    """Iterate ``u <- v + K u`` from ``u = v`` on frozen samples.

    Args:
        tol: stopping tolerance on the sup-norm update and on the remaining
            error bound ``norm * rho / (1 - rho)`` with ``rho`` the last update
            ratio; default a tenth of the smallest positive standard error of
            ``v``.  The truncation error is one-sided (iterates increase from
            ``v`` for nonnegative data), so it must sit well below the noise.
        samples: precomputed :func:`sample_frozen` output.

    Returns:
        ``(field, trace)``.  Standard errors propagate the per-node sampling
        variance of ``v + Z u`` through ``(I - K)^{-1}`` (nodes are sampled
        independently).  ``field.meta`` holds the frozen samples.

    Raises:
        DivergenceError: when the update norm fails to decrease in three
            consecutive iterations.
    """
    fs = samples if samples is not None else sample_frozen(model, region, phi, lattice, cfg, n,
                                                           path_offset=path_offset)
    m, nn = model.n_regimes, len(lattice)
    if tol is None:
        se = fs.v_stderr[fs.v_stderr > 0]
        tol = max(0.1 * float(se.min()), 1e-12) if se.size else 1e-12
    trace = ConvergenceTrace(tol=tol)
    u = fs.v.copy()
    rises = 0
    for _ in range(max_iter):
        new = fs.v + fs.K @ u
        norm = float(np.max(np.abs(new - u)))
        if trace.norms and norm >= trace.norms[-1]:
            rises += 1
        else:
            rises = 0
        trace.norms.append(norm)
        u = new
        rho = norm / trace.norms[-2] if len(trace.norms) > 1 and trace.norms[-2] > 0 else 0.0
        if norm < tol and (rho >= 1 or norm * rho / (1 - rho) < tol):
            trace.converged = True
            break
        if rises >= 3:
            raise DivergenceError("update norms did not decrease over 3 consecutive iterations",
                                  trace=trace.norms)
    var_rows = fs.row_variance(u) / fs.n
    a = np.linalg.inv(np.eye(m * nn) - fs.K)
    se = np.sqrt(np.maximum(np.einsum("rk,k,rk->r", a, var_rows, a), 0.0))
    fld = LatticeField(lattice, u.reshape(m, nn).T, se.reshape(m, nn).T,
                       {"trace": trace, "samples": fs,
                        "truncated_fraction": float(fs.truncated.max())})
    return fld, trace


@dataclass
class DiscrepancyReport:
    """Per-(node, regime) comparison of two fields with standard errors."""

    z: np.ndarray
    diff: np.ndarray
    direct: LatticeField

    @property
    def max_abs_z(self) -> float:
        return float(np.max(np.abs(self.z)))

    @property
    def max_abs_diff(self) -> float:
        return float(np.max(np.abs(self.diff)))

    @property
    def mean_abs_diff(self) -> float:
        return float(np.mean(np.abs(self.diff)))

    def worst(self):
        k, i = np.unravel_index(np.argmax(np.abs(self.z)), self.z.shape)
        return int(k), int(i)

    def to_dict(self) -> dict:
        k, i = self.worst()
        return {"max_abs_z": self.max_abs_z, "max_abs_diff": self.max_abs_diff,
                "mean_abs_diff": self.mean_abs_diff,
                "worst": {"node": k, "x": self.direct.lattice.nodes[k].tolist(), "regime": i + 1},
                "z": self.z.tolist()}


def combined_z(a: LatticeField, b: LatticeField) -> np.ndarray:
    se = np.sqrt(a.stderr ** 2 + b.stderr ** 2)
    diff = a.values - b.values
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, diff / se, np.where(diff == 0, 0.0, np.inf))
    return z


def compare_direct(u_fixed: LatticeField, model: ModelSpec, region: Region, phi: BoundaryData,
                   cfg: SamplerConfig, n: int, *, path_offset: int = 0) -> DiscrepancyReport:
    """Direct switching Monte Carlo at every node against a solved field.

    Use a seed (or path offset) different from the one that produced
    ``u_fixed`` so the two estimates are independent.
    """
    direct = estimate_harmonic(model, region, phi, u_fixed.lattice, cfg, n, path_offset=path_offset)
    return DiscrepancyReport(combined_z(u_fixed, direct), u_fixed.values - direct.values, direct)
