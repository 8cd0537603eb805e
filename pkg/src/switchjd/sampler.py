"""Path sampling for the switched jump diffusion.

One time step of length ``h`` applies, in this order: an Euler diffusion move
with covariance ``2 a(x, i) h`` (the generator carries no factor 1/2), at most
one thinned jump candidate, and at most one uniformized switching event which
may also kill the path.  Region exits are monitored on the grid and, when
``bridge`` is enabled, between grid points by the Brownian-bridge crossing
probability of the nearest boundary piece.  Hit targets that are small
against the step scale (in two or more dimensions) are resolved by bisecting
the bridge until the flat-boundary approximation applies.

All randomness comes from :mod:`switchjd.rng`, so a path is a pure function of
``(model, init, stop rule, seed, path index)``.  Paths are simulated in
vectorised chunks of fixed size; chunks may run on any number of worker
processes without changing a bit of the output.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, UsageError
from .model import CEMETERY, ModelSpec
from .regions import Region
from .rng import Draws, normals_slots, uniform_pair_slots

# path status codes
RUNNING, EXITED, HIT, KILLED, HORIZON, TRUNCATED, SWITCHED = range(7)
STATUS_NAMES = ("running", "exited", "hit", "killed", "horizon", "truncated", "switched")

# event kinds recorded in trajectories
DIFFUSE, JUMP, SWITCH, KILL, STOP = range(5)
EVENT_NAMES = ("diffuse", "jump", "switch", "kill", "stop")

_SWITCH = "switch"
_STAY = "stay"
_KILL = "kill"


@dataclass(frozen=True)
class SamplerConfig:
    """Discretisation and randomness settings.

    Attributes:
        step: time step ``h``.
        horizon: hard time limit ``T_max``; paths still running are truncated.
        seed: master seed of the counter-based streams.
        bridge: enable Brownian-bridge exit and entry detection between grid points.
        chunk: paths per vectorised chunk (part of the reduction shape, so it
            affects nothing but memory and speed).
        workers: worker processes; never changes any value.
    """

    step: float = 1e-3
    horizon: float = 100.0
    seed: int = 0
    bridge: bool = True
    chunk: int = 65536
    workers: int = 1

    def __post_init__(self):
        if not self.step > 0:
            raise ConfigError("step must be positive", field="sampler.step")
        if not self.horizon >= self.step:
            raise ConfigError("horizon must be at least one step", field="sampler.horizon")
        if self.chunk < 1 or self.workers < 1:
            raise ConfigError("chunk and workers must be positive")

    def replace(self, **kw) -> "SamplerConfig":
        from dataclasses import replace
        return replace(self, **kw)


@dataclass(frozen=True, eq=False)
class StopRule:
    """When a path stops.

    ``horizon``: at time ``T``.  ``exit``: on leaving ``region``.  ``hit``: on
    entering ``target`` (in regime ``target_regime`` if given) before leaving
    ``region``.  ``first_switch``: at the first regime change (or exit of
    ``region`` if one is given).
    """

    kind: str
    horizon: float | None = None
    region: Region | None = None
    target: Region | None = None
    target_regime: int | None = None

    def __post_init__(self):
        if self.kind not in ("horizon", "exit", "hit", "first_switch"):
            raise UsageError(f"unknown stop rule {self.kind!r}")
        if self.kind == "horizon" and (self.horizon is None or self.horizon < 0):
            raise UsageError("horizon stop rule needs a nonnegative horizon")
        if self.kind in ("exit", "hit") and self.region is None:
            raise UsageError(f"{self.kind} stop rule needs a region")
        if self.kind == "hit" and self.target is None:
            raise UsageError("hit stop rule needs a target set")

    @classmethod
    def at_horizon(cls, t: float) -> "StopRule":
        return cls("horizon", horizon=float(t))

    @classmethod
    def exit_of(cls, region: Region) -> "StopRule":
        return cls("exit", region=region)

    @classmethod
    def hit(cls, target: Region, container: Region, regime: int | None = None) -> "StopRule":
        return cls("hit", region=container, target=target, target_regime=regime)

    @classmethod
    def first_switch(cls, region: Region | None = None) -> "StopRule":
        return cls("first_switch", region=region)


# ---------------------------------------------------------------------------
# draw layout inside one step
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _Slots:
    diffuse: int
    exit_bridge: int
    bridge_normals: int
    hit_bridge: int
    jump: int
    jump_normals: int
    jump_radius: int
    switch: int

    @classmethod
    def for_dim(cls, d: int) -> "_Slots":
        nd = (d + 1) // 2
        j0 = nd + 3
        return cls(0, nd, nd + 1, nd + 2, j0, j0 + 1, j0 + 1 + nd, j0 + nd + 2)


# ---------------------------------------------------------------------------
# single-step operations (vectorised over paths)
# ---------------------------------------------------------------------------


def _by_regime(regimes: np.ndarray, m: int):
    for i in range(m):
        sel = np.flatnonzero(regimes == i)
        if sel.size:
            yield i, sel


def diffuse_step(model: ModelSpec, x, regimes, h: float, draws: Draws) -> np.ndarray:
    """Euler move ``x + b_eff h + N(0, 2 a(x, i) h)``.

    Args:
        model: the model.
        x: positions, shape (n, d).
        regimes: regime per path, shape (n,); none may be the cemetery.
        h: step size.
        draws: random draws of these paths at this step.

    Returns:
        New positions, shape (n, d).
    """
    x = np.asarray(x, dtype=float)
    regimes = np.asarray(regimes)
    if np.any(regimes == CEMETERY):
        raise UsageError("cannot diffuse a killed path")
    g = draws.normals(_Slots.for_dim(model.dim).diffuse, model.dim)
    out = np.empty_like(x)
    for i, sel in _by_regime(regimes, model.n_regimes):
        xs = x[sel]
        b = model.effective_drift(xs, i)
        amp = np.sqrt(2.0 * h * model.diffusion_scale[i](xs))
        out[sel] = xs + b * h + amp[:, None] * (g[sel] @ model.diffusion_root[i].T)
    return out


def sample_jump(model: ModelSpec, x, regimes, h: float, draws: Draws):
    """At most one thinned jump per path.

    A candidate fires with probability ``1 - exp(-intensity h)``, is drawn
    from the dominating density and accepted with probability ``r(x, z)``.
    Several jumps inside one step are collapsed to one, an ``O(h^2)`` error.

    Returns:
        ``(accepted, z, candidate)``: boolean mask, displacements (zero where
        not accepted) and the boolean mask of fired candidates.
    """
    x = np.asarray(x, dtype=float)
    regimes = np.asarray(regimes)
    n = x.shape[0]
    z = np.zeros_like(x)
    accepted = np.zeros(n, dtype=bool)
    candidate = np.zeros(n, dtype=bool)
    slots = _Slots.for_dim(model.dim)
    for i, sel in _by_regime(regimes, model.n_regimes):
        k = model.jumps[i]
        if k is None or k.intensity <= 0:
            continue
        sub = draws.subset(sel)
        u = sub.uniforms(slots.jump)
        fire = u[:, 0] < -math.expm1(-k.intensity * h)
        if not np.any(fire):
            continue
        idx = sel[fire]
        cand = draws.subset(idx)
        g = cand.normals(slots.jump_normals, model.dim)
        ur = cand.uniforms(slots.jump_radius)[:, 0]
        zc = k.density.sample(g, ur)
        acc = u[fire, 1] < k.acceptance(x[idx], zc)
        candidate[idx] = True
        accepted[idx[acc]] = True
        z[idx[acc]] = zc[acc]
    return accepted, z, candidate


def switch_event(model: ModelSpec, x, regimes, h: float, draws: Draws):
    """Uniformized switching with rate bound ``Q_max``.

    An event fires with probability ``1 - exp(-Q_max h)`` (``h`` may be a
    per-path array of durations); it moves to ``j``
    with probability ``q_ij(x) / Q_max``, kills with probability
    ``kappa(x, i) / Q_max`` and otherwise leaves the regime unchanged.

    Returns:
        New regimes, with :data:`CEMETERY` for killed paths.
    """
    x = np.asarray(x, dtype=float)
    regimes = np.asarray(regimes)
    out = regimes.copy()
    if not model.has_switching:
        return out
    qmax = model.rate_bound
    if qmax <= 0:
        raise ConfigError("switching rates declared but the uniformization rate is zero",
                          field="switching.rate_bound")
    slot = _Slots.for_dim(model.dim).switch
    u = draws.uniforms(slot)
    fire = u[:, 0] < -np.expm1(-qmax * np.asarray(h, dtype=float))
    for i, sel in _by_regime(regimes, model.n_regimes):
        sel = sel[fire[sel]]
        if sel.size == 0:
            continue
        row = model.q_row(x[sel], i)
        c = u[sel, 1] * qmax
        new = np.full(sel.size, i)
        acc = np.zeros(sel.size)
        decided = np.zeros(sel.size, dtype=bool)
        for j in range(model.n_regimes):
            if j == i:
                continue
            acc = acc + row[:, j]
            take = ~decided & (c < acc)
            new[take] = j
            decided |= take
        kill = ~decided & (c < -row[:, i])
        new[kill] = CEMETERY
        out[sel] = new
    return out


def classify_switch(before: np.ndarray, after: np.ndarray) -> list:
    """Human-readable ``stay`` / ``switch`` / ``kill`` labels."""
    return [_KILL if a == CEMETERY else (_STAY if a == b else _SWITCH) for b, a in zip(before, after)]


# ---------------------------------------------------------------------------
# bridge helpers
# ---------------------------------------------------------------------------


def _normal_variance(model: ModelSpec, x, regimes, normals) -> np.ndarray:
    """``2 n' a(x, i) n``: variance rate of the displacement along ``n``."""
    out = np.empty(x.shape[0])
    for i, sel in _by_regime(regimes, model.n_regimes):
        a = model.diffusion[i]
        nn = normals[sel]
        out[sel] = 2.0 * model.diffusion_scale[i](x[sel]) * np.einsum("nk,kl,nl->n", nn, a, nn)
    return out


def _bridge_time(d0, d1, var, h, nu, u) -> np.ndarray:
    """First-passage time of a Brownian bridge over a flat barrier.

    The bridge starts at distance ``d0 > 0`` from the barrier and ends at
    distance ``d1 >= 0`` (on either side).  Conditional on crossing,
    ``T / (h - T)`` is inverse Gaussian with mean ``d0 / d1`` and shape
    ``d0^2 / (var h)``; it is sampled by the Michael-Schucany-Haas method.
    """
    d1 = np.maximum(d1, 1e-300)
    mu = d0 / d1
    lam = d0 * d0 / np.maximum(var * h, 1e-300)
    y = nu * nu
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        root = np.sqrt(mu * mu * y * y + 4.0 * mu * lam * y)
        xs = 4.0 * mu * mu * lam * y / (mu * y + root) ** 2
        take_small = u * (mu + xs) <= mu
        ratio = np.where(take_small, xs, mu * mu / xs)
        ratio = np.where(np.isfinite(ratio), ratio, np.inf)
        t = np.where(np.isinf(ratio), h, h * ratio / (1.0 + ratio))
    return np.clip(t, 0.0, h)


# bisection of bridges near small targets: draws start at this slot with a
# block of nd + 2 slots per dyadic node; depth is capped so slots fit 32 bits
_REFINE_SLOT = 1 << 10
_MAX_LEVELS = 28
_P_FLOOR = 1e-12


def _refined_entry(model: ModelSpec, target: Region, xa, x1, regimes, h: float, seed: int,
                   paths, step: int) -> np.ndarray:
    """First entry time into ``target`` of the bridges from ``xa`` to ``x1``.

    Sub-intervals that may still reach the target are halved by sampling the
    bridge midpoint (coefficients frozen at ``xa``) until the normal variance
    over the sub-interval is below the squared target inradius; the flat
    crossing probability is applied there.  Beyond ``_MAX_LEVELS`` halvings
    only the sampled points are checked, which undercounts entries into
    targets with inradius below about ``sqrt(var h) / 2**14``.

    Returns:
        Entry times in ``[0, h]``, ``inf`` where the bridge misses the target.
    """
    n, d = xa.shape
    nd = (d + 1) // 2
    block = nd + 2
    rho2 = target.inradius ** 2
    levels = min(_MAX_LEVELS, int(math.log2(((1 << 32) - _REFINE_SLOT) / block)) - 1)
    root = np.empty((n, d, d))
    for i, sel in _by_regime(regimes, model.n_regimes):
        amp = np.sqrt(2.0 * model.diffusion_scale[i](xa[sel]))
        root[sel] = amp[:, None, None] * model.diffusion_root[i]
    best = np.full(n, np.inf)
    owner, a, b = np.arange(n), xa, x1
    t0 = np.zeros(n)
    node = np.ones(n, dtype=np.int64)
    tau = h
    for level in range(levels + 1):
        rate = _normal_variance(model, xa[owner], regimes[owner], target.normal(a))
        e0 = np.maximum(-target.signed_distance(a), 0.0)
        e1 = np.maximum(-target.signed_distance(b), 0.0)
        with np.errstate(divide="ignore", over="ignore"):
            p = np.exp(-2.0 * e0 * e1 / np.maximum(rate * tau, 1e-300))
        final = rate * tau <= rho2
        f = np.flatnonzero(final)
        if f.size:
            slot = _REFINE_SLOT + node[f] * block
            u = uniform_pair_slots(seed, paths[owner[f]], step, slot + nd)
            cross = u[:, 0] < p[f]
            c = f[cross]
            if c.size:
                nu = normals_slots(seed, paths[owner[c]], step, slot[cross] + nd + 1, 1)[:, 0]
                tc = t0[c] + _bridge_time(e0[c], e1[c], rate[c], tau, nu, u[cross, 1])
                np.minimum.at(best, owner[c], tc)
        go = np.flatnonzero(~final & (p > _P_FLOOR) & (t0 < best[owner]))
        if level == levels or go.size == 0:
            break
        owner, a, b, t0, node = owner[go], a[go], b[go], t0[go], node[go]
        g = normals_slots(seed, paths[owner], step, _REFINE_SLOT + node * block, d)
        mid = 0.5 * (a + b) + math.sqrt(tau / 4.0) * np.einsum("nkl,nl->nk", root[owner], g)
        tm = t0 + 0.5 * tau
        inside = target.contains(mid)
        np.minimum.at(best, owner[inside], tm[inside])
        right = ~inside
        owner = np.concatenate((owner, owner[right]))
        a = np.concatenate((a, mid[right]))
        b = np.concatenate((mid, b[right]))
        t0 = np.concatenate((t0, tm[right]))
        node = np.concatenate((2 * node, 2 * node[right] + 1))
        tau *= 0.5
    return best


# ---------------------------------------------------------------------------
# observers: per-path functionals accumulated during simulation
# ---------------------------------------------------------------------------


class Observer:
    """Accumulates a per-path functional; ``on_step`` receives the step's
    weighted duration at the left endpoint, ``on_jump`` receives accepted jumps.

    With ``endpoints`` set, ``on_step`` is called twice per step, at the left
    endpoint and at the post-diffusion position, each with half the weight
    (trapezoid rule; weak error O(h^2) per unit time instead of O(h)).
    """

    width = 1
    endpoints = False

    def start(self, n: int, model: ModelSpec):
        self.values = np.zeros((n, self.width))

    def on_step(self, idx, x, regimes, weight_dt):
        pass

    def on_jump(self, idx, x_before, x_after, regimes):
        pass

    def result(self) -> np.ndarray:
        return self.values


@dataclass(eq=False)
class GreenIntegrand(Observer):
    """``int_0^tau e(s) f(X_s) ds`` for each scalar family ``f`` in ``funcs``.

    ``e`` is the Feynman-Kac weight of the frozen-regime process (one
    otherwise).  ``regime_filter`` restricts the integrand to one regime.
    """

    funcs: tuple
    regime_filter: int | None = None
    endpoints = True

    @property
    def width(self):
        return len(self.funcs)

    def on_step(self, idx, x, regimes, weight_dt):
        w = weight_dt
        if self.regime_filter is not None:
            w = np.where(regimes == self.regime_filter, w, 0.0)
        for k, f in enumerate(self.funcs):
            self.values[idx, k] += w * f(x)


@dataclass(eq=False)
class LevyCounter(Observer):
    """Jump counts ``A -> B`` in regime ``i0`` and their compensator.

    Column 0 counts jumps with ``X_{s-}`` in ``A``, ``X_s`` in ``B`` and
    regime ``i0``; column 1 accumulates ``1_A(X_s) 1_{i0}(Lambda_s) pi(X_s, B - X_s) ds``.
    """

    source: Region
    target: Region
    regime: int
    nodes: int = 64
    table_size: int = 8193
    width = 2

    def start(self, n, model):
        super().start(n, model)
        self.kernel = model.jumps[self.regime]
        self.table = None
        if self.kernel is not None and model.dim == 1:
            # pi(x, B - x) is tabulated once over A with the same quadrature
            lo, hi = self.source.bounding_box()
            self.grid = np.linspace(lo[0], hi[0], self.table_size)
            self.table = self.kernel.mass(self.grid[:, None], self.target, self.nodes)

    def on_step(self, idx, x, regimes, weight_dt):
        if self.kernel is None:
            return
        sel = (regimes == self.regime) & self.source.contains(x)
        if np.any(sel):
            if self.table is not None:
                mass = np.interp(x[sel, 0], self.grid, self.table)
            else:
                mass = self.kernel.mass(x[sel], self.target, self.nodes)
            self.values[idx[sel], 1] += weight_dt[sel] * mass

    def on_jump(self, idx, x_before, x_after, regimes):
        hit = (regimes == self.regime) & self.source.contains(x_before) & self.target.contains(x_after)
        self.values[idx[hit], 0] += 1.0


@dataclass(eq=False)
class OccupationProjector(Observer):
    """Weighted occupation measure projected on lattice hat functions.

    For a path frozen in regime ``i`` column ``j * n_nodes + k`` accumulates
    ``int_0^tau e(s) q_ij(X_s) w_k(X_s) ds`` with ``w_k`` the interpolation
    weight of node ``k``; then ``G(q_ij g) = sum_k column_jk g_k`` for every
    node field ``g`` of regime ``j``.

    Between the nodes' bounding box and the boundary, values are constant
    extrapolations unless ``phi`` is given: then they are blended linearly in
    the distances with the known boundary value ``phi_j`` at the nearest
    exterior point, and the ``phi`` part is accumulated separately.

    ``result()`` columns: the ``m * n_nodes`` projections, the time spent
    outside the bounding box, and the boundary part.
    """

    lattice: object
    phi: object = None
    endpoints = True

    def start(self, n, model):
        self.model = model
        self.width = model.n_regimes * len(self.lattice)
        # one scratch column absorbs absent corners, so (row, column) pairs never repeat
        self.values = np.zeros((n, self.width + 1))
        self.extrapolated = np.zeros(n)
        self.boundary = np.zeros(n)

    def on_step(self, idx, x, regimes, weight_dt):
        m, nn = self.model.n_regimes, len(self.lattice)
        if m == 1:
            return
        row = np.empty((x.shape[0], m))
        for i, sel in _by_regime(regimes, m):
            row[sel] = self.model.q_row(x[sel], i)
            row[sel, i] = 0.0
        node, w, ex = self.lattice.weights(x)
        self.extrapolated[idx] += np.where(ex, weight_dt, 0.0)
        if self.phi is not None and np.any(ex):
            # linear blend between the clamped lattice value and the boundary value
            xe = x[ex]
            a = np.maximum(self.lattice.region.signed_distance(xe), 0.0)
            b = np.linalg.norm(xe - np.clip(xe, self.lattice.lower, self.lattice.upper), axis=1)
            tot = a + b
            keep = np.where(tot > 0, a / np.where(tot > 0, tot, 1.0), 1.0)
            w = w.copy()
            w[ex] *= keep[:, None]
            y = self.lattice.region.project(xe)
            bval = np.zeros(xe.shape[0])
            for j in range(m):
                bval += row[ex, j] * self.phi.families[j](y)
            self.boundary[idx[ex]] += weight_dt[ex] * (1.0 - keep) * bval
        rows = idx[:, None]
        for j in range(m):
            cols = np.where(node >= 0, j * nn + node, self.width)
            self.values[rows, cols] += w * (weight_dt * row[:, j])[:, None]

    def result(self):
        return np.column_stack((self.values[:, :-1], self.extrapolated, self.boundary))


# ---------------------------------------------------------------------------
# simulation engine
# ---------------------------------------------------------------------------


@dataclass
class ChunkResult:
    paths: np.ndarray
    time: np.ndarray
    x: np.ndarray
    regime: np.ndarray
    status: np.ndarray
    log_weight: np.ndarray
    n_jumps: np.ndarray
    n_switches: np.ndarray
    observed: list
    events: tuple | None = None

    @classmethod
    def concat(cls, parts: list) -> "ChunkResult":
        obs = [np.concatenate([p.observed[k] for p in parts]) for k in range(len(parts[0].observed))]
        events = None
        if parts[0].events is not None:
            events = tuple(np.concatenate([p.events[k] for p in parts]) for k in range(len(parts[0].events)))
        return cls(*(np.concatenate([getattr(p, f) for p in parts])
                     for f in ("paths", "time", "x", "regime", "status", "log_weight",
                               "n_jumps", "n_switches")), obs, events)


@dataclass(frozen=True, eq=False)
class _Task:
    model: ModelSpec
    stop: StopRule
    cfg: SamplerConfig
    frozen: bool
    observers: tuple
    record: bool
    kill_rate: object = None


class _Recorder:
    def __init__(self):
        self.parts = []
        self.seq = 0

    def add(self, paths, t, x, regimes, kind):
        n = len(paths)
        if n == 0:
            return
        self.parts.append((np.asarray(paths, np.int64), np.broadcast_to(np.asarray(t, float), (n,)).copy(),
                           np.array(x, float, copy=True), np.array(regimes, np.int64, copy=True),
                           np.full(n, kind, np.int64), np.full(n, self.seq, np.int64)))
        self.seq += 1

    def finish(self, d):
        if not self.parts:
            return (np.empty(0, np.int64), np.empty(0), np.empty((0, d)), np.empty(0, np.int64),
                    np.empty(0, np.int64))
        cols = [np.concatenate([p[k] for p in self.parts]) for k in range(6)]
        order = np.lexsort((cols[5], cols[0]))
        return tuple(c[order] for c in cols[:5])


def _frozen_rate(task: _Task, model: ModelSpec, x, regimes) -> np.ndarray:
    """Killing rate of the frozen-regime process: ``-q_ii`` or the task's override."""
    if task.kill_rate is not None:
        return task.kill_rate(x)
    rate = np.empty(x.shape[0])
    for i, sel in _by_regime(regimes, model.n_regimes):
        rate[sel] = -model.q_row(x[sel], i)[:, i]
    return rate


def _simulate_chunk(task: _Task, paths: np.ndarray, x0: np.ndarray, i0: np.ndarray) -> ChunkResult:
    model, cfg, stop = task.model, task.cfg, task.stop
    d, m = model.dim, model.n_regimes
    n = paths.shape[0]
    h = cfg.step
    slots = _Slots.for_dim(d)

    x = np.array(x0, dtype=float, copy=True)
    reg = np.array(i0, dtype=np.int64, copy=True)
    status = np.full(n, RUNNING, dtype=np.int64)
    t_end = np.zeros(n)
    logw = np.zeros(n)
    n_jumps = np.zeros(n, dtype=np.int64)
    n_sw = np.zeros(n, dtype=np.int64)
    observers = [type(o)(**{k: v for k, v in o.__dict__.items() if k in o.__dataclass_fields__})
                 for o in task.observers]
    for o in observers:
        o.start(n, model)
    rec = _Recorder() if task.record else None

    region = stop.region if stop.kind in ("exit", "hit", "first_switch") else None
    target = stop.target if stop.kind == "hit" else None
    tgt_reg = stop.target_regime

    if stop.kind == "horizon":
        n_steps = int(round(stop.horizon / h))
        truncate_at = None
    else:
        n_steps = int(math.ceil(cfg.horizon / h - 1e-9))
        truncate_at = n_steps

    # paths that start outside the region or inside the target stop at time 0
    if region is not None:
        out0 = ~region.contains(x)
        status[out0] = EXITED
    if target is not None:
        in0 = target.contains(x) & (status == RUNNING)
        if tgt_reg is not None:
            in0 &= reg == tgt_reg
        status[in0] = HIT

    jumps_on = model.has_jumps
    switch_on = model.has_switching and not task.frozen
    frozen_q = task.frozen and (model.has_switching or task.kill_rate is not None)
    use_bridge = cfg.bridge and any(np.any(np.asarray(a) != 0) for a in model.diffusion)

    active = np.flatnonzero(status == RUNNING)
    k = 0
    while active.size and k < n_steps:
        t0 = k * h
        draws = Draws(cfg.seed, paths[active], k)
        xa = x[active]
        ra = reg[active]
        dt = np.full(active.size, h)
        done = np.zeros(active.size, dtype=bool)
        new_status = np.zeros(active.size, dtype=np.int64)

        # 1. diffusion
        x1 = diffuse_step(model, xa, ra, h, draws)
        first_time = np.full(active.size, np.inf)
        first_pos = x1.copy()
        first_kind = np.zeros(active.size, dtype=np.int64)
        var = None
        if use_bridge and (region is not None or target is not None):
            nrm_src = region if region is not None else target
            var = _normal_variance(model, xa, ra, nrm_src.normal(xa))
        if region is not None:
            sd0 = region.signed_distance(xa)
            sd1 = region.signed_distance(x1)
            crossed = sd1 <= 0
            if use_bridge:
                inside = ~crossed
                with np.errstate(divide="ignore", over="ignore"):
                    p = np.exp(-2.0 * sd0 * np.maximum(sd1, 0.0) / np.maximum(var * h, 1e-300))
                ub = draws.uniforms(slots.exit_bridge)
                crossed = crossed | (inside & (ub[:, 0] < p))
                idx = np.flatnonzero(crossed)
                if idx.size:
                    nu = draws.subset(idx).normals(slots.bridge_normals, 1)[:, 0]
                    tc = _bridge_time(sd0[idx], np.abs(sd1[idx]), var[idx], h, nu, ub[idx, 1])
                    # the diffusion part of the step is already committed; the crossing point
                    # is interpolated and placed on the boundary
                    frac = (tc / h)[:, None]
                    pos = region.project(xa[idx] + frac * (x1[idx] - xa[idx]))
                    first_time[idx] = tc
                    first_pos[idx] = pos
                    first_kind[idx] = EXITED
            else:
                idx = np.flatnonzero(crossed)
                first_time[idx] = h
                first_kind[idx] = EXITED
        if target is not None:
            ok_reg = np.ones(active.size, bool) if tgt_reg is None else (ra == tgt_reg)
            e0 = -target.signed_distance(xa)
            e1 = -target.signed_distance(x1)
            entered = ok_reg & (e1 < 0)
            if use_bridge:
                vt = _normal_variance(model, xa, ra, target.normal(xa))
                outside = ok_reg & ~entered
                with np.errstate(divide="ignore", over="ignore"):
                    p = np.exp(-2.0 * np.maximum(e0, 0) * np.maximum(e1, 0.0) / np.maximum(vt * h, 1e-300))
                # the flat-boundary formula overshoots for targets small against the step
                small = outside & (vt * h > target.inradius ** 2) if d >= 2 else np.zeros_like(outside)
                ub = draws.uniforms(slots.hit_bridge)
                entered = entered | (outside & ~small & (ub[:, 0] < p))
                tref = np.full(active.size, np.inf)
                near = np.flatnonzero(small & (p > _P_FLOOR))
                if near.size:
                    tref[near] = _refined_entry(model, target, xa[near], x1[near], ra[near], h,
                                                cfg.seed, paths[active[near]], k)
                    entered |= np.isfinite(tref)
                idx = np.flatnonzero(entered)
                if idx.size:
                    nu = draws.subset(idx).normals(slots.bridge_normals, 2)[:, 1]
                    tc = _bridge_time(np.maximum(e0[idx], 0), np.abs(e1[idx]), vt[idx], h, nu, ub[idx, 1])
                    tc = np.where(np.isfinite(tref[idx]), tref[idx], tc)
                    earlier = tc < first_time[idx]
                    j = idx[earlier]
                    first_time[j] = tc[earlier]
                    first_pos[j] = xa[j] + (tc[earlier] / h)[:, None] * (x1[j] - xa[j])
                    first_kind[j] = HIT
            else:
                idx = np.flatnonzero(entered & (h < first_time))
                first_time[idx] = h
                first_pos[idx] = x1[idx]
                first_kind[idx] = HIT
        stop_diff = np.isfinite(first_time)
        if np.any(stop_diff):
            dt[stop_diff] = first_time[stop_diff]
            done |= stop_diff
            new_status[stop_diff] = first_kind[stop_diff]
        x1 = np.where(stop_diff[:, None], first_pos, x1)

        # time integrals: the killing rate is the mean of its endpoint values and
        # the discount is integrated exactly, so e(tau) + int rate e ds = 1 holds
        # pathwise; endpoint observers split the step weight between xa and x1
        if frozen_q:
            rate = 0.5 * (_frozen_rate(task, model, xa, ra) + _frozen_rate(task, model, x1, ra))
            rdt = rate * dt
            with np.errstate(divide="ignore", invalid="ignore"):
                span = np.where(rdt != 0, -np.expm1(-rdt) / rate, dt)
            wdt = np.exp(logw[active]) * span
        else:
            wdt = dt
        for o in observers:
            if o.endpoints:
                o.on_step(active, xa, ra, 0.5 * wdt)
                o.on_step(active, x1, ra, 0.5 * wdt)
            else:
                o.on_step(active, xa, ra, wdt)
        if frozen_q:
            logw[active] -= rdt
        if rec is not None:
            rec.add(paths[active], t0 + dt, x1, ra, DIFFUSE)

        # 2. jumps
        x2 = x1
        if jumps_on:
            live = np.flatnonzero(~done)
            if live.size:
                acc, z, _ = sample_jump(model, x1[live], ra[live], h, draws.subset(live))
                if np.any(acc):
                    j = live[acc]
                    x2 = x1.copy()
                    x2[j] = x1[j] + z[acc]
                    n_jumps[active[j]] += 1
                    for o in observers:
                        o.on_jump(active[j], x1[j], x2[j], ra[j])
                    if rec is not None:
                        rec.add(paths[active[j]], t0 + h, x2[j], ra[j], JUMP)
                    if region is not None:
                        out = j[~region.contains(x2[j])]
                        done[out] = True
                        new_status[out] = EXITED
                    if target is not None:
                        hit = j[target.contains(x2[j]) & ~done[j]]
                        if tgt_reg is not None:
                            hit = hit[ra[hit] == tgt_reg]
                        done[hit] = True
                        new_status[hit] = HIT

        # 3. switching; paths that left during the diffusion move may still switch
        # or die before their exit time, so they draw an event over [t0, t0 + dt]
        r2 = ra
        if switch_on:
            left = stop_diff & (new_status == EXITED)
            cand = np.flatnonzero(~done | left)
            if cand.size:
                xs = np.where(left[cand, None], xa[cand], x2[cand])
                new_r = switch_event(model, xs, ra[cand], dt[cand], draws.subset(cand))
                changed = new_r != ra[cand]
                if np.any(changed):
                    r2 = ra.copy()
                    r2[cand] = new_r
                    j = cand[changed]
                    killed = j[new_r[changed] == CEMETERY]
                    moved = j[new_r[changed] != CEMETERY]
                    n_sw[active[moved]] += 1
                    if rec is not None:
                        rec.add(paths[active[moved]], t0 + dt[moved], x2[moved], r2[moved], SWITCH)
                    done[killed] = True
                    new_status[killed] = KILLED
                    if stop.kind == "first_switch":
                        done[moved] = True
                        new_status[moved] = SWITCHED
                    if target is not None and tgt_reg is not None:
                        hit = moved[(r2[moved] == tgt_reg) & target.contains(x2[moved])]
                        hit = hit[~done[hit]]
                        done[hit] = True
                        new_status[hit] = HIT

        x[active] = x2
        reg[active] = r2
        fin = np.flatnonzero(done)
        t_end[active[fin]] = t0 + dt[fin]
        status[active[fin]] = new_status[fin]
        k += 1
        active = active[~done]

    if active.size:
        t_end[active] = k * h
        status[active] = HORIZON if truncate_at is None else TRUNCATED
    killed = status == KILLED
    reg[killed] = CEMETERY

    events = None
    if rec is not None:
        # terminal marker: repeats the final state; kill replaces the last state
        for code, kind in ((KILLED, KILL),):
            sel = np.flatnonzero(status == code)
            rec.add(paths[sel], t_end[sel], x[sel], reg[sel], kind)
        sel = np.flatnonzero(status != KILLED)
        rec.add(paths[sel], t_end[sel], x[sel], reg[sel], STOP)
        events = rec.finish(d)
    return ChunkResult(paths.copy(), t_end, x, reg, status, logw, n_jumps, n_sw,
                       [o.result() for o in observers], events)


def _run_chunk(args):
    return _simulate_chunk(*args)


def simulate(model: ModelSpec, init, stop: StopRule, cfg: SamplerConfig, n_paths: int,
             *, frozen: bool = False, observers=(), record: bool = False,
             first_path: int = 0, kill_rate=None) -> ChunkResult:
    """Simulate paths ``first_path .. first_path + n_paths - 1``.

    Args:
        model: the model.
        init: ``(x, i)`` starting state, regime indexed from 0.
        stop: stop rule.
        cfg: sampler settings.
        n_paths: number of paths.
        frozen: simulate the single-regime process of the starting regime,
            killed at rate ``-q_ii`` through the Feynman-Kac log-weight
            instead of switching.
        kill_rate: with ``frozen``, a scalar family replacing ``-q_ii`` as
            the Feynman-Kac killing rate.
        observers: per-path functionals to accumulate.
        record: keep the full event list (for trajectories and dumps).

    Returns:
        Per-path results concatenated in path order.
    """
    x0, i0 = init
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if n_paths < 1:
        raise UsageError("need at least one path")
    return simulate_batch(model, np.tile(x0, (n_paths, 1)), np.full(n_paths, i0),
                          np.arange(first_path, first_path + n_paths, dtype=np.int64), stop, cfg,
                          frozen=frozen, observers=observers, record=record, kill_rate=kill_rate)


def simulate_batch(model: ModelSpec, x0, i0, paths, stop: StopRule, cfg: SamplerConfig, *,
                   frozen: bool = False, observers=(), record: bool = False,
                   kill_rate=None) -> ChunkResult:
    """Simulate paths with individual starting states in one vectorised run.

    Path ``paths[k]`` starts at ``(x0[k], i0[k])``; its result is identical
    to a separate :func:`simulate` call for that path index, because every
    draw depends on the path index only.  Results keep the input order.
    """
    x0 = np.asarray(x0, dtype=float).reshape(-1, model.dim)
    i0 = np.asarray(i0, dtype=np.int64).reshape(-1)
    paths = np.asarray(paths, dtype=np.int64).reshape(-1)
    n = paths.shape[0]
    if n < 1:
        raise UsageError("need at least one path")
    if x0.shape[0] != n or i0.shape[0] != n:
        raise UsageError(f"initial positions must have shape ({n}, {model.dim})")
    if np.any((i0 < 0) | (i0 >= model.n_regimes)):
        raise UsageError(f"initial regime outside 0..{model.n_regimes - 1}")
    task = _Task(model, stop, cfg, frozen, tuple(observers), record, kill_rate)
    chunks = [(task, paths[s:s + cfg.chunk], x0[s:s + cfg.chunk], i0[s:s + cfg.chunk])
              for s in range(0, n, cfg.chunk)]
    if cfg.workers > 1 and len(chunks) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            parts = list(pool.map(_run_chunk, chunks))
    else:
        parts = [_simulate_chunk(*c) for c in chunks]
    return ChunkResult.concat(parts)


# ---------------------------------------------------------------------------
# trajectories
# ---------------------------------------------------------------------------


@dataclass
class Trajectory:
    """A sampled path: the ordered events of one path index.

    ``events`` rows are ``(t, x, regime, kind)``; the last event is ``kill``
    for killed paths and ``stop`` otherwise.
    """

    path: int
    times: np.ndarray
    positions: np.ndarray
    regimes: np.ndarray
    kinds: np.ndarray
    status: str
    killed: bool = False
    truncated: bool = False
    init: tuple | None = None

    @property
    def terminal(self):
        return self.times[-1], self.positions[-1], int(self.regimes[-1])

    def __len__(self) -> int:
        return self.times.shape[0]

    def events(self):
        for t, x, r, k in zip(self.times, self.positions, self.regimes, self.kinds):
            yield float(t), x, int(r), EVENT_NAMES[k]


def _trajectories(res: ChunkResult, init) -> list:
    p, t, x, r, kind = res.events
    out = []
    bounds = np.searchsorted(p, res.paths, side="left")
    ends = np.searchsorted(p, res.paths, side="right")
    for n, (a, b) in enumerate(zip(bounds, ends)):
        st = int(res.status[n])
        keep = np.arange(a, b)
        # the stop marker repeats the last diffusion state; keep only the marker
        if b - a >= 2 and kind[b - 2] == DIFFUSE and t[b - 2] == t[b - 1] \
                and r[b - 2] == r[b - 1] and np.array_equal(x[b - 2], x[b - 1]):
            keep = np.delete(keep, b - 2 - a)
        out.append(Trajectory(int(res.paths[n]), t[keep], x[keep], r[keep], kind[keep],
                              STATUS_NAMES[st], killed=st == KILLED, truncated=st == TRUNCATED,
                              init=init))
    return out


def sample_path(model: ModelSpec, init, stop: StopRule, cfg: SamplerConfig,
                path: int = 0, frozen: bool = False) -> Trajectory:
    """Trajectory of one path index; identical to that path inside any batch."""
    res = simulate(model, init, stop, cfg, 1, frozen=frozen, record=True, first_path=path)
    return _trajectories(res, init)[0]


def sample_paths(model: ModelSpec, init, stop: StopRule, cfg: SamplerConfig, n_paths: int,
                 frozen: bool = False) -> list:
    res = simulate(model, init, stop, cfg, n_paths, frozen=frozen, record=True)
    return _trajectories(res, init)


def write_dump(trajectories, fh, dim: int) -> None:
    """Tab-separated event dump, one event per line.

    Columns: ``path, t, x_1..x_d, regime, event``.  Regimes are written from 1;
    the cemetery is written as 0.  Floats use 17 significant digits so dumps
    are byte-identical across runs with the same seed.
    """
    cols = ["path", "t"] + [f"x_{k + 1}" for k in range(dim)] + ["regime", "event"]
    fh.write("# " + "\t".join(cols) + "\n")
    for tr in trajectories:
        for t, x, r, kind in tr.events():
            xs = "\t".join(format(float(v), ".17g") for v in x)
            fh.write(f"{tr.path}\t{t:.17g}\t{xs}\t{r + 1 if r != CEMETERY else 0}\t{kind}\n")


def read_dump(fh):
    """Parse a dump into a list of ``(path, t, x, regime, event)`` tuples."""
    rows = []
    for line in fh:
        if line.startswith("#") or not line.strip():
            continue
        parts = line.rstrip("\n").split("\t")
        x = np.array([float(v) for v in parts[2:-2]])
        r = int(parts[-2])
        rows.append((int(parts[0]), float(parts[1]), x, r - 1 if r else CEMETERY, parts[-1]))
    return rows
