"""YAML configuration: model sections plus optional task sections.

Top-level sections::

    dimensions   {d, m}
    regimes      list of {drift, diffusion}, one per regime
    jumps        list of {regime, intensity, density, ratio, ratio_z, convention, harnack}
    switching    {rates, killing, rate_bound}
    assumptions  {kappa0, sample_region}
    region       domain D used by estimators (ball or box)
    boundary     {regimes, bound, mirror_symmetric}
    sampler      {step, horizon, seed, bridge}
    lattice      {spacing}
    run          {paths, workers, max_iter, tol}
    verify       per-check options (see ``switchjd.verify``)

Unknown keys anywhere are configuration errors.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .errors import ConfigError, StructuralError
from .families import Constant, jump_density, scalar_family
from .model import BoundaryData, JumpKernel, ModelSpec
from .regions import Region, region_from_dict

MODEL_KEYS = {"dimensions", "regimes", "jumps", "switching", "assumptions"}
TASK_KEYS = {"region", "boundary", "sampler", "lattice", "run", "verify"}


def _require_map(obj, fld: str, allowed: set, required: set = frozenset()) -> dict:
    if not isinstance(obj, dict):
        raise ConfigError("expected a mapping", field=fld)
    unknown = set(obj) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown keys {sorted(unknown)}", field=fld)
    missing = set(required) - set(obj)
    if missing:
        raise ConfigError(f"missing keys {sorted(missing)}", field=fld)
    return obj


def _int(obj, fld: str, minimum: int = 1) -> int:
    if isinstance(obj, bool) or not isinstance(obj, int) or obj < minimum:
        raise ConfigError(f"expected an integer >= {minimum}", field=fld)
    return obj


def _float(obj, fld: str, positive: bool = False) -> float:
    if isinstance(obj, bool) or not isinstance(obj, (int, float)):
        raise ConfigError("expected a number", field=fld)
    if positive and not obj > 0:
        raise ConfigError("expected a positive number", field=fld)
    return float(obj)


def _diffusion(spec, d: int, fld: str):
    if isinstance(spec, (int, float)) and not isinstance(spec, bool):
        return float(spec) * np.eye(d), Constant(1.0)
    _require_map(spec, fld, {"matrix", "scale"}, {"matrix"})
    mat = spec["matrix"]
    if isinstance(mat, (int, float)) and not isinstance(mat, bool):
        a = float(mat) * np.eye(d)
    else:
        try:
            a = np.asarray(mat, dtype=float)
        except (TypeError, ValueError):
            raise ConfigError("matrix must be numeric", field=f"{fld}.matrix") from None
        if a.shape != (d, d):
            raise StructuralError(f"{fld}.matrix: expected {d}x{d}, got shape {a.shape}")
    scale = scalar_family(spec.get("scale", 1.0), d, f"{fld}.scale")
    lo, _ = scale.bounds()
    if lo < 0:
        raise ConfigError("diffusion scale family must be nonnegative", field=f"{fld}.scale")
    return a, scale


def model_from_dict(cfg: dict) -> ModelSpec:
    """Build a :class:`ModelSpec` from the model sections of a config mapping."""
    if not isinstance(cfg, dict):
        raise ConfigError("configuration must be a mapping")
    unknown = set(cfg) - MODEL_KEYS - TASK_KEYS
    if unknown:
        raise ConfigError(f"unknown top-level keys {sorted(unknown)}")
    dims = _require_map(cfg.get("dimensions"), "dimensions", {"d", "m"}, {"d", "m"})
    d = _int(dims["d"], "dimensions.d")
    m = _int(dims["m"], "dimensions.m")

    regimes = cfg.get("regimes")
    if not isinstance(regimes, list):
        raise ConfigError("regimes must be a list", field="regimes")
    if len(regimes) != m:
        raise StructuralError(f"regimes: expected {m} entries, got {len(regimes)}")
    drift, diff, scale = [], [], []
    for i, r in enumerate(regimes):
        fld = f"regimes[{i + 1}]"
        _require_map(r, fld, {"drift", "diffusion"}, {"diffusion"})
        b = r.get("drift", [0.0] * d)
        if not isinstance(b, list):
            b = [b]
        if len(b) != d:
            raise StructuralError(f"{fld}.drift: expected {d} components, got {len(b)}")
        drift.append(tuple(scalar_family(c, d, f"{fld}.drift[{k + 1}]") for k, c in enumerate(b)))
        a, s = _diffusion(r["diffusion"], d, f"{fld}.diffusion")
        diff.append(a)
        scale.append(s)

    jumps = [None] * m
    jlist = cfg.get("jumps", []) or []
    if not isinstance(jlist, list):
        raise ConfigError("jumps must be a list", field="jumps")
    for k, j in enumerate(jlist):
        fld = f"jumps[{k + 1}]"
        _require_map(j, fld, {"regime", "intensity", "density", "ratio", "ratio_z", "convention",
                              "harnack"}, {"regime", "intensity", "density"})
        reg = _int(j["regime"], f"{fld}.regime")
        if reg > m:
            raise StructuralError(f"{fld}.regime: regime {reg} does not exist (m={m})")
        if jumps[reg - 1] is not None:
            raise ConfigError(f"second kernel for regime {reg}", field=fld)
        intensity = _float(j["intensity"], f"{fld}.intensity")
        if intensity < 0:
            raise ConfigError("intensity must be nonnegative", field=f"{fld}.intensity")
        conv = j.get("convention", "plain")
        if conv not in ("plain", "compensated"):
            raise ConfigError("convention must be 'plain' or 'compensated'", field=f"{fld}.convention")
        kappa2 = beta = None
        if "harnack" in j:
            h = _require_map(j["harnack"], f"{fld}.harnack", {"kappa2", "beta"}, {"kappa2", "beta"})
            kappa2 = _float(h["kappa2"], f"{fld}.harnack.kappa2", positive=True)
            beta = _float(h["beta"], f"{fld}.harnack.beta")
        jumps[reg - 1] = JumpKernel(
            regime=reg - 1, intensity=intensity,
            density=jump_density(j["density"], d, f"{fld}.density"),
            ratio=scalar_family(j.get("ratio", 1.0), d, f"{fld}.ratio"),
            ratio_z=scalar_family(j.get("ratio_z", 1.0), d, f"{fld}.ratio_z"),
            compensated=(conv == "compensated"), kappa2=kappa2, beta=beta)

    sw = _require_map(cfg.get("switching", {}) or {}, "switching", {"rates", "killing", "rate_bound"})
    rates_cfg = sw.get("rates")
    if rates_cfg is None:
        rates = tuple(tuple(Constant(0.0) if j != i else None for j in range(m)) for i in range(m))
    else:
        if not isinstance(rates_cfg, list) or len(rates_cfg) != m:
            raise StructuralError(f"switching.rates: expected {m} rows")
        rows = []
        for i, row in enumerate(rates_cfg):
            if not isinstance(row, list) or len(row) != m:
                raise StructuralError(f"switching.rates[{i + 1}]: expected {m} entries")
            out = []
            for j, e in enumerate(row):
                fld = f"switching.rates[{i + 1}][{j + 1}]"
                if i == j and (e is None or e == "auto"):
                    out.append(None)
                elif i != j and (e is None or e == "auto"):
                    raise ConfigError("'auto' is only allowed on the diagonal", field=fld)
                else:
                    out.append(scalar_family(e, d, fld))
            rows.append(tuple(out))
        rates = tuple(rows)
    kill_cfg = sw.get("killing", [0.0] * m)
    if not isinstance(kill_cfg, list) or len(kill_cfg) != m:
        raise StructuralError(f"switching.killing: expected {m} entries")
    killing = []
    for i, e in enumerate(kill_cfg):
        fam = scalar_family(e, d, f"switching.killing[{i + 1}]")
        if rates[i][i] is not None and fam.bounds() != (0.0, 0.0):
            raise ConfigError("killing given for a row with explicit diagonal",
                              field=f"switching.killing[{i + 1}]")
        killing.append(fam)
    rate_bound = sw.get("rate_bound")
    if rate_bound is not None:
        rate_bound = _float(rate_bound, "switching.rate_bound")

    asm = _require_map(cfg.get("assumptions", {}) or {}, "assumptions", {"kappa0", "sample_region"})
    kappa0 = asm.get("kappa0")
    if kappa0 is not None:
        kappa0 = _float(kappa0, "assumptions.kappa0", positive=True)
        if kappa0 > 1:
            raise ConfigError("kappa0 must lie in (0, 1]", field="assumptions.kappa0")
    sample_region = None
    if "sample_region" in asm:
        sample_region = region_from_dict(asm["sample_region"], d, "assumptions.sample_region")

    source = {k: copy.deepcopy(cfg[k]) for k in MODEL_KEYS if k in cfg}
    spec = ModelSpec(dim=d, n_regimes=m, drift=tuple(drift), diffusion=tuple(diff),
                     diffusion_scale=tuple(scale), jumps=tuple(jumps), rates=rates,
                     killing=tuple(killing), kappa0=kappa0, declared_rate_bound=rate_bound,
                     sample_region=sample_region, source=source)
    if rate_bound == 0.0 and spec.family_rate_bound > 0:
        raise ConfigError("rate_bound is zero but switching rates are declared",
                          field="switching.rate_bound")
    return spec


def boundary_from_dict(spec, d: int, m: int, fld: str = "boundary") -> BoundaryData:
    """``regimes`` holds one scalar family (or number) per regime, or a single
    entry applied to all regimes."""
    if isinstance(spec, (int, float)) and not isinstance(spec, bool):
        return BoundaryData.constant(float(spec), m)
    _require_map(spec, fld, {"regimes", "bound", "mirror_symmetric"}, {"regimes"})
    regs = spec["regimes"]
    if not isinstance(regs, list):
        regs = [regs] * m
    if len(regs) == 1 and m > 1:
        regs = regs * m
    if len(regs) != m:
        raise StructuralError(f"{fld}.regimes: expected {m} entries, got {len(regs)}")
    fams = tuple(scalar_family(e, d, f"{fld}.regimes[{i + 1}]") for i, e in enumerate(regs))
    bound = spec.get("bound")
    if bound is not None:
        bound = _float(bound, f"{fld}.bound")
    return BoundaryData(fams, bound, bool(spec.get("mirror_symmetric", False)))


@dataclass
class Config:
    """A parsed configuration file."""

    model: ModelSpec
    raw: dict
    region: Region | None = None
    boundary: BoundaryData | None = None
    sampler: dict = field(default_factory=dict)
    lattice: dict = field(default_factory=dict)
    run: dict = field(default_factory=dict)
    verify: dict = field(default_factory=dict)


def parse_config(raw: dict) -> Config:
    model = model_from_dict(raw)
    region = region_from_dict(raw["region"], model.dim) if "region" in raw else None
    boundary = None
    if "boundary" in raw:
        boundary = boundary_from_dict(raw["boundary"], model.dim, model.n_regimes)
    sampler = _require_map(raw.get("sampler", {}) or {}, "sampler",
                           {"step", "horizon", "seed", "bridge"})
    lattice = _require_map(raw.get("lattice", {}) or {}, "lattice", {"spacing"})
    run = _require_map(raw.get("run", {}) or {}, "run",
                       {"paths", "workers", "max_iter", "tol", "init", "stop"})
    verify = raw.get("verify", {}) or {}
    if not isinstance(verify, dict):
        raise ConfigError("expected a mapping", field="verify")
    return Config(model, raw, region, boundary, dict(sampler), dict(lattice), dict(run), dict(verify))


def load_config(path) -> Config:
    """Read and parse a YAML configuration file.

    Raises:
        ConfigError: on YAML syntax errors (with line and column) or schema errors.
        OSError: when the file cannot be read.
    """
    text = Path(path).read_text()
    try:
        raw = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark
        raise ConfigError(f"YAML parse error: {exc.problem}",
                          line=mark.line + 1 if mark else None,
                          column=mark.column + 1 if mark else None) from None
    return parse_config(raw)
