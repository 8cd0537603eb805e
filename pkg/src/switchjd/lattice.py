"""Node lattices inside a domain and fields of per-(node, regime) values."""

from __future__ import annotations

import csv
import io
import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .regions import Region


@dataclass(frozen=True, eq=False)
class Lattice:
    """Grid points ``k * spacing`` at distance more than ``spacing / 2`` from the complement.

    Nodes are ordered lexicographically.  Values between nodes are multilinear
    in each grid cell; corners that are not nodes are dropped and the
    remaining weights renormalised; points outside the nodes' bounding box are
    clamped to it (constant extrapolation).
    """

    region: Region
    spacing: float
    nodes: np.ndarray
    kmin: np.ndarray = field(repr=False)
    table: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return self.nodes.shape[1]

    def __len__(self) -> int:
        return self.nodes.shape[0]

    @property
    def lower(self) -> np.ndarray:
        return self.nodes.min(axis=0)

    @property
    def upper(self) -> np.ndarray:
        return self.nodes.max(axis=0)

    def weights(self, x):
        """Interpolation weights of points ``x`` (n, d).

        Returns:
            ``(idx, w, extrapolated)``: node indices and weights of shape
            (n, 2^d) (index -1 with weight 0 marks an absent corner) and a
            boolean mask of points that needed clamping.
        """
        x = np.asarray(x, dtype=float).reshape(-1, self.dim)
        s = self.spacing
        lo, hi = self.lower, self.upper
        xc = np.clip(x, lo, hi)
        extrap = np.any(xc != x, axis=1)
        kf = xc / s
        k0 = np.floor(kf + 1e-9).astype(np.int64)
        frac = np.clip(kf - k0, 0.0, 1.0)
        n, d = x.shape
        corners = list(itertools.product((0, 1), repeat=d))
        idx = np.full((n, len(corners)), -1, dtype=np.int64)
        w = np.zeros((n, len(corners)))
        for c, bits in enumerate(corners):
            kk = k0 + np.asarray(bits)
            wc = np.prod(np.where(np.asarray(bits) == 1, frac, 1.0 - frac), axis=1)
            rel = kk - self.kmin
            inside = np.all((rel >= 0) & (rel < np.array(self.table.shape)), axis=1)
            found = np.full(n, -1, dtype=np.int64)
            found[inside] = self.table[tuple(rel[inside].T)]
            ok = found >= 0
            idx[ok, c] = found[ok]
            w[ok, c] = wc[ok]
        tot = w.sum(axis=1)
        lost = tot <= 1e-12
        if np.any(lost):
            # no corner is a node: fall back to the nearest node
            near = self.nearest(xc[lost])
            idx[lost] = -1
            w[lost] = 0.0
            idx[lost, 0] = near
            w[lost, 0] = 1.0
            extrap |= lost
            tot = w.sum(axis=1)
        w /= tot[:, None]
        return idx, w, extrap

    def nearest(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(-1, self.dim)
        dist = np.linalg.norm(x[:, None, :] - self.nodes[None, :, :], axis=2)
        return dist.argmin(axis=1)

    def interpolate(self, values, x):
        """Interpolate node values (n_nodes,) at points ``x``; returns ``(vals, extrapolated)``."""
        values = np.asarray(values, dtype=float)
        idx, w, ex = self.weights(x)
        vals = (np.where(idx >= 0, values[np.maximum(idx, 0)], 0.0) * w).sum(axis=1)
        return vals, ex

    def to_dict(self) -> dict:
        return {"region": self.region.to_dict(), "spacing": self.spacing,
                "nodes": self.nodes.tolist()}


def build_lattice(region: Region, spacing: float) -> Lattice:
    """Regular grid of ``region`` with the half-spacing boundary margin.

    Raises:
        ConfigError: if the spacing is not positive, is at least twice the
            inradius, or leaves no node.
    """
    s = float(spacing)
    if not s > 0:
        raise ConfigError("lattice spacing must be positive", field="lattice.spacing")
    if s >= 2.0 * region.inradius:
        raise ConfigError(f"lattice spacing {s} is at least twice the inradius "
                          f"{region.inradius}: empty lattice", field="lattice.spacing")
    lo, hi = region.bounding_box()
    axes = [np.arange(np.ceil(lo[k] / s - 1e-9), np.floor(hi[k] / s + 1e-9) + 1, dtype=np.int64)
            for k in range(region.dim)]
    ks = np.array(list(itertools.product(*axes)), dtype=np.int64).reshape(-1, region.dim)
    pts = ks * s
    keep = region.signed_distance(pts) > s / 2.0
    ks, pts = ks[keep], pts[keep]
    if pts.shape[0] == 0:
        raise ConfigError("lattice has no nodes", field="lattice.spacing")
    kmin = ks.min(axis=0)
    table = np.full(tuple(ks.max(axis=0) - kmin + 1), -1, dtype=np.int64)
    table[tuple((ks - kmin).T)] = np.arange(ks.shape[0])
    return Lattice(region, s, pts, kmin, table)


@dataclass
class LatticeField:
    """Values (and optional standard errors) per node and regime, shape (n_nodes, m)."""

    lattice: Lattice
    values: np.ndarray
    stderr: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2 or self.values.shape[0] != len(self.lattice):
            raise ValueError("field values must have shape (n_nodes, m)")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field values must be finite")
        if self.stderr is not None:
            self.stderr = np.asarray(self.stderr, dtype=float)

    @property
    def n_regimes(self) -> int:
        return self.values.shape[1]

    def regime(self, i: int) -> np.ndarray:
        return self.values[:, i]

    def at(self, x, i: int):
        return self.lattice.interpolate(self.values[:, i], x)[0]

    def to_records(self) -> list:
        out = []
        for n, node in enumerate(self.lattice.nodes):
            for i in range(self.n_regimes):
                rec = {"node": n, **{f"x_{k + 1}": float(v) for k, v in enumerate(node)},
                       "regime": i + 1, "value": float(self.values[n, i])}
                rec["stderr"] = float(self.stderr[n, i]) if self.stderr is not None else None
                out.append(rec)
        return out

    def to_csv(self) -> str:
        """CSV with header ``node,x_1..x_d,regime,value,stderr``; regimes from 1."""
        buf = io.StringIO()
        cols = ["node"] + [f"x_{k + 1}" for k in range(self.lattice.dim)] + ["regime", "value", "stderr"]
        w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
        w.writeheader()
        for rec in self.to_records():
            w.writerow({k: ("" if v is None else (repr(v) if isinstance(v, float) else v))
                        for k, v in rec.items()})
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, lattice: Lattice) -> "LatticeField":
        rows = list(csv.DictReader(io.StringIO(text)))
        m = max(int(r["regime"]) for r in rows)
        vals = np.zeros((len(lattice), m))
        se = np.zeros((len(lattice), m))
        for r in rows:
            vals[int(r["node"]), int(r["regime"]) - 1] = float(r["value"])
            se[int(r["node"]), int(r["regime"]) - 1] = float(r["stderr"]) if r["stderr"] else np.nan
        return cls(lattice, vals, se)
