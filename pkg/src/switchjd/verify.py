"""Statistical test procedures for the qualitative theorems.

Each check returns one or more :class:`TheoremReport` records.  Statements
about every point of a continuum are checked at lattice nodes with
3-standard-error bands, which is a surrogate and is labelled as such.

Two failure levels are kept apart:

* statistical failures (``verdict == "fail"``), where an estimate leaves its
  confidence band;
* pathwise defects (``defect == True``), where an exact per-path identity
  such as ``phi(X_tau) <= M`` is violated.  These can only come from a bug or
  from wrong declared data, never from noise.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import UsageError
from .estimators import _check_inside, _json_default, _phi_at_exit, estimate_hitting_prob
from .estimators import levy_system_residual
from .lattice import Lattice
from .model import BoundaryData, ModelSpec, irreducibility_check
from .regions import Ball, Region
from .sampler import EXITED, KILLED, TRUNCATED, SamplerConfig, StopRule, simulate, simulate_batch

THEOREMS = ("MaxPrinciple-I", "MaxPrinciple-II-surrogate", "Positivity", "Harnack",
            "ExitUpper", "ExitLower", "ExitTail", "LevySystem", "HittingLower")
VERDICTS = ("pass", "fail", "inconclusive")
BAND = 3.0
SURROGATE = "checked at lattice nodes with 3-standard-error bands"


@dataclass
class TheoremReport:
    """Verdict and evidence of one check.

    Attributes:
        witness: the node, regime or statistic that left its band; required
            when ``verdict == "fail"``.
        budget: the sample budget that was exhausted; required when
            ``verdict == "inconclusive"``.
        defect: a pathwise identity was violated (error-level failure).
    """

    theorem: str
    verdict: str
    evidence: dict
    config_hash: str
    seed: int
    witness: dict | None = None
    budget: dict | None = None
    defect: bool = False
    note: str = ""

    def __post_init__(self):
        if self.theorem not in THEOREMS:
            raise UsageError(f"unknown theorem id {self.theorem!r}")
        if self.verdict not in VERDICTS:
            raise UsageError(f"unknown verdict {self.verdict!r}")
        if self.verdict == "fail" and self.witness is None:
            raise UsageError("a fail verdict needs a witness")
        if self.verdict == "inconclusive" and self.budget is None:
            raise UsageError("an inconclusive verdict needs the exhausted budget")
        if self.defect and self.verdict != "fail":
            raise UsageError("a pathwise defect is a fail verdict")

    @property
    def exit_code(self) -> int:
        """0 pass or inconclusive, 1 statistical fail, 4 pathwise defect."""
        if self.defect:
            return 4
        return 1 if self.verdict == "fail" else 0

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, default=_json_default)


def _report(model: ModelSpec, cfg: SamplerConfig, theorem: str, verdict: str, evidence: dict,
            **kw) -> TheoremReport:
    return TheoremReport(theorem, verdict, evidence, model.config_hash, cfg.seed, **kw)


# ---------------------------------------------------------------------------
# batched harmonic samples
# ---------------------------------------------------------------------------


@dataclass
class _Samples:
    """Per-path exit values of several boundary data at several start states.

    ``values[p]`` has shape (n_states, n) for boundary data ``p``; states are
    ordered regime-major over the lattice nodes.
    """

    states: list
    values: list
    killed: np.ndarray
    truncated: np.ndarray

    def stats(self, p: int, n: int | None = None):
        v = self.values[p] if n is None else self.values[p][:, :n]
        k = v.shape[1]
        mean = v.mean(axis=1)
        se = v.std(axis=1, ddof=1) / math.sqrt(k) if k > 1 else np.zeros(v.shape[0])
        return mean, se


def _lattice_states(lattice: Lattice, m: int) -> list:
    return [(lattice.nodes[k], i) for i in range(m) for k in range(len(lattice))]


def _harmonic_paths(model: ModelSpec, region: Region, phis, states, cfg: SamplerConfig, n: int,
                    *, stride: int | None = None, path_offset: int = 0, select=None) -> _Samples:
    """Simulate ``n`` paths per state and evaluate every ``phi`` at the exit states.

    State ``q`` uses paths ``path_offset + q * stride + [0, n)``, so runs with
    a common stride and growing ``n`` share their leading paths.
    """
    stride = n if stride is None else stride
    if n > stride:
        raise UsageError("per-state path count exceeds the stride")
    sel = np.arange(len(states)) if select is None else np.asarray(select)
    for x, _ in states:
        _check_inside(region, x, "query point")
    xs = np.array([np.atleast_1d(np.asarray(states[q][0], float)) for q in sel])
    i0 = np.array([int(states[q][1]) for q in sel])
    paths = (path_offset + sel[:, None] * stride + np.arange(n)[None, :]).ravel()
    res = simulate_batch(model, np.repeat(xs, n, axis=0), np.repeat(i0, n), paths,
                         StopRule.exit_of(region), cfg)
    vals = [_phi_at_exit(phi, res).reshape(sel.shape[0], n) for phi in phis]
    return _Samples([states[q] for q in sel], vals,
                    (res.status == KILLED).reshape(sel.shape[0], n).mean(axis=1),
                    (res.status == TRUNCATED).reshape(sel.shape[0], n).mean(axis=1))


def _state_dict(state) -> dict:
    x, i = state
    return {"x": np.atleast_1d(np.asarray(x, float)).tolist(), "regime": int(i) + 1}


def _is_constant(phi: BoundaryData, value: float) -> bool:
    return all(f.bounds() == (value, value) for f in phi.families)


# ---------------------------------------------------------------------------
# maximum principle
# ---------------------------------------------------------------------------


def check_maximum_principle(model: ModelSpec, region: Region, phi: BoundaryData,
                            lattice: Lattice, cfg: SamplerConfig, n: int, *,
                            theorem: str = "MaxPrinciple-I", path_offset: int = 0) -> TheoremReport:
    """Bound and rigidity checks for ``u = E phi(X_tau, Lambda_tau)``.

    Bound: every per-path value is at most ``M = phi.bound`` (pathwise) and
    ``u_hat <= M + 3 se`` at every node.  Rigidity: with ``phi == M`` and no
    killing observed, ``u_hat = M`` within bands everywhere; when killing
    occurs or ``phi`` is not constant, some node must show
    ``u_hat < M - 3 se``.
    """
    if theorem not in ("MaxPrinciple-I", "MaxPrinciple-II-surrogate"):
        raise UsageError(f"{theorem!r} is not a maximum principle check")
    m = model.n_regimes
    M = phi.bound
    states = _lattice_states(lattice, m)
    s = _harmonic_paths(model, region, [phi], states, cfg, n, path_offset=path_offset)
    u, se = s.stats(0)
    per_path_max = s.values[0].max(axis=1)
    ev = {"bound": M, "paths_per_node": n, "nodes": len(lattice), "surrogate": SURROGATE,
          "u_max": float(u.max()), "u_min": float(u.min()),
          "killed_fraction": float(s.killed.mean()),
          "truncated_fraction": float(s.truncated.max()),
          "pathwise_violations": int(np.sum(s.values[0] > M))}

    bad = np.flatnonzero(per_path_max > M)
    if bad.size:
        q = int(bad[np.argmax(per_path_max[bad])])
        return _report(model, cfg, theorem, "fail", ev, defect=True,
                       witness={**_state_dict(states[q]), "path_value": float(per_path_max[q]),
                                "bound": M, "kind": "pathwise bound"})
    z_up = np.where(se > 0, (u - M) / np.where(se > 0, se, 1.0), np.where(u > M, np.inf, -np.inf))
    if np.any(u > M + BAND * se):
        q = int(np.argmax(z_up))
        return _report(model, cfg, theorem, "fail", ev,
                       witness={**_state_dict(states[q]), "u": float(u[q]), "stderr": float(se[q]),
                                "bound": M, "kind": "statistical bound"})

    gap = u < M - BAND * se
    ev["gap_nodes"] = int(gap.sum())
    killing = bool(np.any(s.killed > 0))
    if _is_constant(phi, M) and not killing:
        ev["rigidity"] = "constant data, conservative paths"
        if gap.any():
            q = int(np.argmax(gap))
            return _report(model, cfg, theorem, "fail", ev,
                           witness={**_state_dict(states[q]), "u": float(u[q]), "stderr": float(se[q]),
                                    "bound": M, "kind": "rigidity"})
        return _report(model, cfg, theorem, "pass", ev, note=SURROGATE)
    ev["rigidity"] = "killing along paths" if killing else "non-constant data"
    if not gap.any():
        # consistent with u == M; more paths may resolve a gap
        return _report(model, cfg, theorem, "inconclusive", ev, budget={"paths_per_node": n},
                       note=SURROGATE)
    return _report(model, cfg, theorem, "pass", ev, note=SURROGATE)


# ---------------------------------------------------------------------------
# positivity
# ---------------------------------------------------------------------------


def check_positivity(model: ModelSpec, region: Region, phi: BoundaryData, lattice: Lattice,
                     cfg: SamplerConfig, n: int, *, budget: int = 1_600_000, growth: int = 4,
                     path_offset: int = 0) -> TheoremReport:
    """Either ``u > 0`` at every node and regime or ``u == 0``.

    ``phi == 0`` must give exact zeros.  Otherwise nodes whose lower bound
    ``u_hat - 3 se`` is not positive are re-estimated with ``growth`` times
    more paths (sharing the earlier ones) until ``budget`` paths per node;
    any node still straddling zero makes the verdict inconclusive.  The check
    is gated on irreducibility of the switching graph on ``region``.
    """
    if phi.lower_bound < 0:
        raise UsageError("positivity needs nonnegative boundary data")
    irr = irreducibility_check(model, region, "irreducible")
    if not irr.irreducible:
        return _report(model, cfg, "Positivity", "inconclusive",
                       {"precondition": "switching graph is not irreducible on the region",
                        "irreducibility": irr.to_dict()},
                       budget={"paths_per_node": 0, "skipped": True})
    m = model.n_regimes
    states = _lattice_states(lattice, m)
    zero = phi.is_identically_zero()
    nq = len(states)
    u = np.zeros(nq)
    se = np.zeros(nq)
    used = np.zeros(nq, dtype=np.int64)
    todo = np.arange(nq)
    k = n
    levels = []
    while True:
        s = _harmonic_paths(model, region, [phi], states, cfg, k, stride=budget,
                            path_offset=path_offset, select=todo)
        vals = s.values[0]
        if np.any(vals < 0) or (zero and np.any(vals != 0)):
            j = int(np.argmin(vals.min(axis=1))) if np.any(vals < 0) else \
                int(np.argmax(np.abs(vals).max(axis=1)))
            return _report(model, cfg, "Positivity", "fail",
                           {"paths_per_node": k, "zero_data": zero}, defect=True,
                           witness={**_state_dict(states[todo[j]]), "kind": "pathwise sign",
                                    "path_value": float(vals[j][np.argmax(np.abs(vals[j]))])})
        mu, sd = s.stats(0)
        u[todo], se[todo], used[todo] = mu, sd, k
        levels.append({"paths_per_node": k, "nodes": int(todo.size)})
        if zero:
            return _report(model, cfg, "Positivity", "pass",
                           {"zero_data": True, "paths_per_node": k, "u_max_abs": 0.0,
                            "levels": levels})
        lcb = u - BAND * se
        todo = np.flatnonzero(lcb <= 0)
        if todo.size == 0 or k * growth > budget:
            break
        k *= growth
    ev = {"zero_data": False, "levels": levels, "surrogate": SURROGATE,
          "u_min": float(u.min()), "min_lower_bound": float((u - BAND * se).min()),
          "paths_used_max": int(used.max())}
    if todo.size:
        q = int(todo[np.argmin((u - BAND * se)[todo])])
        ev["straddling"] = [_state_dict(states[j]) for j in todo]
        return _report(model, cfg, "Positivity", "inconclusive", ev,
                       budget={"paths_per_node": int(k), "limit": budget,
                               "worst": {**_state_dict(states[q]), "u": float(u[q]),
                                         "stderr": float(se[q])}})
    return _report(model, cfg, "Positivity", "pass", ev, note=SURROGATE)


# ---------------------------------------------------------------------------
# Harnack
# ---------------------------------------------------------------------------


def _ratio_bounds(u, se):
    """Point and conservative maximum ratio ``u_a / u_b`` over all state pairs."""
    lo = u - BAND * se
    hi = u + BAND * se
    if np.any(lo <= 0):
        return float(u.max() / u.min()) if u.min() > 0 else math.inf, math.inf
    return float(u.max() / u.min()), float(hi.max() / lo.min())


def _mirror_pairs(lattice: Lattice, region: Region, axis: int = 0):
    c = region.midpoint[axis]
    out = []
    for k, node in enumerate(lattice.nodes):
        img = node.copy()
        img[axis] = 2 * c - img[axis]
        j = int(lattice.nearest(img)[0])
        if j > k and np.allclose(lattice.nodes[j], img, atol=1e-9 * max(1.0, lattice.spacing)):
            out.append((k, j))
    return out


def estimate_harnack_constant(model: ModelSpec, region: Region, lattice: Lattice, phis,
                              cfg: SamplerConfig, n: int = 10_000, *, levels=(1, 4, 16),
                              symmetric: bool = False, stability: float = 0.2,
                              path_offset: int = 0) -> TheoremReport:
    """Empirical Harnack ratios on a compact lattice ``K``.

    For each boundary data ``phi`` the report holds the point ratio
    ``max u_hat / min u_hat`` over all (node, regime) pairs, which is a lower
    bound on any valid constant, and the conservative ratio
    ``max(u_hat + 3 se) / min(u_hat - 3 se)``.  The conservative ratio is
    computed at ``n * levels`` paths per state (nested samples) and must vary
    by less than ``stability`` relative across levels.  With ``symmetric``,
    mirror-symmetric data must give equal values at mirrored nodes.
    """
    phis = list(phis)
    if len(phis) < 5:
        raise UsageError("the Harnack check needs at least five boundary data")
    for phi in phis:
        if phi.lower_bound < 0:
            raise UsageError("Harnack boundary data must be nonnegative")
    irr = irreducibility_check(model, region, "strict")
    if not irr.irreducible:
        return _report(model, cfg, "Harnack", "inconclusive",
                       {"precondition": "switching rates are not bounded below on the region",
                        "irreducibility": irr.to_dict()},
                       budget={"paths_per_state": 0, "skipped": True})
    m = model.n_regimes
    states = _lattice_states(lattice, m)
    counts = [int(n * f) for f in levels]
    s = _harmonic_paths(model, region, phis, states, cfg, counts[-1], path_offset=path_offset)
    per_phi = []
    worst_sym = None
    for p in range(len(phis)):
        rows = []
        for k in counts:
            u, se = s.stats(p, k)
            point, cons = _ratio_bounds(u, se)
            rows.append({"paths_per_state": k, "point": point, "conservative": cons})
        per_phi.append(rows)
        if symmetric and phis[p].mirror_symmetric:
            u, se = s.stats(p)
            nn = len(lattice)
            for a, b in _mirror_pairs(lattice, region):
                for i in range(m):
                    qa, qb = i * nn + a, i * nn + b
                    comb = math.hypot(se[qa], se[qb])
                    z = 0.0 if comb == 0 and u[qa] == u[qb] else \
                        (u[qa] - u[qb]) / comb if comb > 0 else math.inf
                    if worst_sym is None or abs(z) > abs(worst_sym["z"]):
                        worst_sym = {"phi": p, **_state_dict(states[qa]),
                                     "mirror": _state_dict(states[qb])["x"], "z": float(z),
                                     "ratio": float(u[qa] / u[qb]) if u[qb] > 0 else math.inf}
    top = [rows[-1]["conservative"] for rows in per_phi]
    ev = {"per_phi": per_phi, "levels": counts, "surrogate": SURROGATE,
          "point_constant": max(rows[-1]["point"] for rows in per_phi),
          "conservative_constant": max(top), "symmetric_worst": worst_sym}
    if not np.all(np.isfinite(top)):
        p = int(np.argmax(~np.isfinite(top)))
        return _report(model, cfg, "Harnack", "inconclusive", ev,
                       budget={"paths_per_state": counts[-1], "phi": p})
    variation = []
    for rows in per_phi:
        c = np.array([r["conservative"] for r in rows])
        c = c[np.isfinite(c)]
        variation.append(float((c.max() - c.min()) / c.min()))
    ev["relative_variation"] = variation
    if max(variation) >= stability:
        p = int(np.argmax(variation))
        return _report(model, cfg, "Harnack", "fail", ev,
                       witness={"phi": p, "relative_variation": variation[p],
                                "kind": "stability", "ratios": per_phi[p]})
    if worst_sym is not None and abs(worst_sym["z"]) > BAND:
        return _report(model, cfg, "Harnack", "fail", ev,
                       witness={**worst_sym, "kind": "mirror symmetry"})
    return _report(model, cfg, "Harnack", "pass", ev, note=SURROGATE)


# ---------------------------------------------------------------------------
# exit-time scaling
# ---------------------------------------------------------------------------


def _slope(logr, y, se):
    """Weighted least-squares slope of ``y`` on ``logr`` and its standard error."""
    w = 1.0 / np.maximum(se, 1e-300) ** 2
    xb = np.sum(w * logr) / np.sum(w)
    sxx = np.sum(w * (logr - xb) ** 2)
    slope = np.sum(w * (logr - xb) * y) / sxx
    return float(slope), float(1.0 / math.sqrt(sxx))


def exit_time_bound_suite(model: ModelSpec, center, radii, cfg: SamplerConfig, n: int, *,
                          offsets=(0.0, 0.5), regimes=None, path_offset: int = 0) -> list:
    """Scaling of ``E tau_{B(x0, r)}`` with ``r^2`` and the short-time exit tail.

    Starts are ``x0 + f r e_1`` for ``f`` in ``offsets`` (each below one), in
    every regime.  Ratios ``E tau / r^2`` give ``c_lower`` and ``c_upper``;
    a weighted slope of the ratio against ``log r`` beyond three standard
    errors is a trend failure.  The tail constant ``c`` is fitted on the first
    half of the centred paths as the smallest ``median(tau) / r^2`` and
    ``P(tau <= c r^2) <= 1/2 + 3 se`` is checked on the second half.

    Returns:
        Reports for ``ExitUpper``, ``ExitLower`` and ``ExitTail``.
    """
    x0 = np.atleast_1d(np.asarray(center, dtype=float))
    radii = sorted(float(r) for r in radii)
    if len(radii) < 2 or radii[0] <= 0:
        raise UsageError("need at least two positive radii")
    if any(not 0 <= f < 1 for f in offsets):
        raise UsageError("start offsets must lie in [0, 1)")
    regimes = range(model.n_regimes) if regimes is None else regimes
    e1 = np.zeros_like(x0)
    e1[0] = 1.0
    rows = []
    taus = {}
    block = 0
    for r in radii:
        ball = Ball(x0, r)
        for i in regimes:
            for f in offsets:
                res = simulate(model, (x0 + f * r * e1, i), StopRule.exit_of(ball), cfg, n,
                               first_path=path_offset + block * n)
                block += 1
                t = res.time
                mean, se = float(t.mean()), float(t.std(ddof=1) / math.sqrt(n))
                rows.append({"r": r, "regime": i + 1, "offset": f, "mean": mean, "stderr": se,
                             "ratio": mean / r ** 2, "ratio_stderr": se / r ** 2,
                             "truncated_fraction": float(np.mean(res.status == TRUNCATED))})
                if f == 0.0:
                    taus[(r, i)] = t
    ratios = np.array([row["ratio"] for row in rows])
    rse = np.array([row["ratio_stderr"] for row in rows])
    c_lower, c_upper = float(ratios.min()), float(ratios.max())
    lower_lcb = float((ratios - BAND * rse).min())
    trend = []
    for i in regimes:
        for f in offsets:
            sel = [k for k, row in enumerate(rows) if row["regime"] == i + 1 and row["offset"] == f]
            slope, sse = _slope(np.log([rows[k]["r"] for k in sel]), ratios[sel], rse[sel])
            trend.append({"regime": i + 1, "offset": f, "slope": slope, "stderr": sse})
    ev = {"rows": rows, "c_lower": c_lower, "c_upper": c_upper, "c_lower_bound": lower_lcb,
          "trend": trend, "surrogate": "radii on a finite grid"}
    drifting = [t for t in trend if abs(t["slope"]) > BAND * t["stderr"]]
    reports = []
    for name, ok in (("ExitUpper", math.isfinite(c_upper)), ("ExitLower", lower_lcb > 0)):
        if drifting:
            w = max(drifting, key=lambda t: abs(t["slope"]) / t["stderr"])
            reports.append(_report(model, cfg, name, "fail", ev, witness={**w, "kind": "trend"}))
        elif not ok:
            reports.append(_report(model, cfg, name, "fail", ev,
                                   witness={"kind": "constant", "c_lower_bound": lower_lcb,
                                            "c_upper": c_upper}))
        else:
            reports.append(_report(model, cfg, name, "pass", ev))

    half = n // 2
    c_tail = min(float(np.median(t[:half])) / r ** 2 for (r, _), t in taus.items())
    tail_rows = []
    for (r, i), t in taus.items():
        test = t[half:]
        p = float(np.mean(test <= c_tail * r ** 2))
        band = 0.5 + BAND * math.sqrt(0.25 / test.shape[0])
        tail_rows.append({"r": r, "regime": i + 1, "p": p, "limit": band})
    tev = {"c_tail": c_tail, "rows": tail_rows, "fit_paths": half, "test_paths": n - half}
    over = [t for t in tail_rows if t["p"] > t["limit"]]
    if over or not c_tail > 0:
        w = max(over, key=lambda t: t["p"] - t["limit"]) if over else {"c_tail": c_tail}
        reports.append(_report(model, cfg, "ExitTail", "fail", tev, witness={**w, "kind": "tail"}))
    else:
        reports.append(_report(model, cfg, "ExitTail", "pass", tev))
    return reports


# ---------------------------------------------------------------------------
# Levy system and hitting probabilities
# ---------------------------------------------------------------------------


def levy_system_check(model: ModelSpec, pairs, horizon: float, init, cfg: SamplerConfig,
                      n: int, *, nodes: int = 64, z_limit: float = 4.0) -> TheoremReport:
    """Count-minus-compensator residuals at steps ``h`` and ``h / 2`` (same seed).

    Passes when every ``|z| < z_limit`` and refinement does not grow the
    residual: ``|res(h/2)| <= |res(h)| + 2 se(h/2)``.
    """
    rows = []
    witness = None
    for k, (a, b, i0) in enumerate(pairs):
        coarse = levy_system_residual(model, a, b, i0, horizon, init, cfg, n, nodes=nodes)
        fine = levy_system_residual(model, a, b, i0, horizon, init,
                                    cfg.replace(step=cfg.step / 2), n, nodes=nodes)
        zc, zf = coarse.z(0.0), fine.z(0.0)
        row = {"pair": k, "regime": int(i0) + 1, "residual_h": coarse.value, "stderr_h": coarse.stderr,
               "z_h": zc, "residual_h2": fine.value, "stderr_h2": fine.stderr, "z_h2": zf,
               "count": fine.detail["count"], "compensator": fine.detail["compensator"]}
        rows.append(row)
        if witness is None:
            if max(abs(zc), abs(zf)) >= z_limit:
                witness = {**row, "kind": "z-score"}
            elif abs(fine.value) > abs(coarse.value) + 2 * fine.stderr:
                witness = {**row, "kind": "refinement"}
    ev = {"rows": rows, "horizon": horizon, "nodes": nodes, "z_limit": z_limit}
    if witness is not None:
        return _report(model, cfg, "LevySystem", "fail", ev, witness=witness)
    return _report(model, cfg, "LevySystem", "pass", ev)


def hitting_lower_check(model: ModelSpec, x0, R: float, target, start, cfg: SamplerConfig,
                        n: int, *, radii=None, regime: int = 0) -> TheoremReport:
    """``P_y(sigma_{B(x, r)} < tau_{B(x0, 2R)})`` for shrinking ``r``.

    Radii default to ``R/4, R/8, R/16, R/32``.  Paths are shared across radii,
    so the nested balls give pathwise monotone estimates.  Passes when every
    lower confidence bound is positive and no estimate increases as ``r``
    shrinks beyond the combined band.
    """
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    x = np.atleast_1d(np.asarray(target, dtype=float))
    radii = sorted((R / 2 ** k for k in range(2, 6)) if radii is None else radii, reverse=True)
    container = Ball(x0, 2 * R)
    rows = []
    for r in radii:
        est = estimate_hitting_prob(model, Ball(x, r), container, (start, regime), cfg, n)
        rows.append({"r": r, "p": est.value, "stderr": est.stderr,
                     "lower_bound": est.value - BAND * est.stderr})
    ev = {"rows": rows, "R": R, "start": np.atleast_1d(start).tolist(), "regime": regime + 1}
    for a, b in zip(rows, rows[1:]):
        if b["p"] > a["p"] + BAND * math.hypot(a["stderr"], b["stderr"]):
            return _report(model, cfg, "HittingLower", "fail", ev,
                           witness={"kind": "monotonicity", "larger": a, "smaller": b})
    low = [row for row in rows if row["lower_bound"] <= 0]
    if low:
        if low[0]["p"] == 0:
            return _report(model, cfg, "HittingLower", "fail", ev,
                           witness={"kind": "no hits", **low[0]})
        return _report(model, cfg, "HittingLower", "inconclusive", ev,
                       budget={"paths": n, "radius": low[0]["r"]})
    return _report(model, cfg, "HittingLower", "pass", ev)
