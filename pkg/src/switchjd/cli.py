"""Command-line front end.

Usage::

    switchjd validate CONFIG [--out REPORT]
    switchjd simulate CONFIG [--paths N] [--seed S] [--step H] [--out DUMP]
    switchjd harmonic CONFIG [run options] [--out FIELD]
    switchjd solve    CONFIG [run options] [--out FIELD]
    switchjd verify   CONFIG [run options] [--out REPORTS]
    switchjd rerun    MANIFEST [--out PATH]

Every run writes ``<out>.manifest.json`` holding the parsed configuration,
the resolved options and the output list, which is enough to re-run it.

Exit codes: 0 pass (inconclusive verdicts included, flagged in the
report), 1 statistical failure, 2 configuration or usage error, 3 I/O
error, 4 pathwise defect.
"""

from __future__ import annotations

import argparse
import datetime
import io
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import Config, boundary_from_dict, load_config, parse_config
from .coupled_solver import fixed_point_solve
from .errors import ConfigError, DivergenceError, SwitchJDError
from .estimators import _json_default, estimate_harmonic
from .lattice import build_lattice
from .model import validate_model
from .regions import region_from_dict
from .sampler import SamplerConfig, StopRule, sample_paths, write_dump
from . import verify as V

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_IO, EXIT_DEFECT = 0, 1, 2, 3, 4
DEFAULT_PATHS = 10_000
VERIFY_KEYS = {"max_principle", "strong_max_principle", "positivity", "harnack", "exit_time",
               "levy", "hitting"}


class _OutputError(Exception):
    """Writing a result file failed."""


# ---------------------------------------------------------------------------
# option resolution
# ---------------------------------------------------------------------------


def _sampler_config(cfg: Config, args) -> SamplerConfig:
    s = dict(cfg.sampler)
    if args.seed is not None:
        s["seed"] = args.seed
    if args.step is not None:
        s["step"] = args.step
    workers = args.workers if args.workers is not None else cfg.run.get("workers", 1)
    try:
        return SamplerConfig(**s, workers=int(workers))
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc), field="sampler") from None


def _paths(cfg: Config, args) -> int:
    n = args.paths if args.paths is not None else cfg.run.get("paths", DEFAULT_PATHS)
    if not isinstance(n, int) or n < 1:
        raise ConfigError("path count must be a positive integer", field="run.paths")
    return n


def _require(cfg: Config, *names):
    for name in names:
        if getattr(cfg, name) in (None, {}):
            raise ConfigError(f"section {name!r} is required for this command", field=name)


def _state(spec, d: int, fld: str):
    if not isinstance(spec, dict) or set(spec) - {"x", "regime"} or "x" not in spec:
        raise ConfigError("expected a mapping with 'x' and optional 'regime'", field=fld)
    x = np.atleast_1d(np.asarray(spec["x"], dtype=float))
    if x.shape != (d,):
        raise ConfigError(f"expected {d} coordinates", field=f"{fld}.x")
    return x, int(spec.get("regime", 1)) - 1


def _stop_rule(cfg: Config) -> StopRule:
    stop = cfg.run.get("stop", {"horizon": 1.0})
    if not isinstance(stop, dict) or len(stop) != 1:
        raise ConfigError("stop takes exactly one of 'horizon' or 'exit'", field="run.stop")
    if "horizon" in stop:
        return StopRule.at_horizon(float(stop["horizon"]))
    if "exit" in stop:
        _require(cfg, "region")
        return StopRule.exit_of(cfg.region)
    raise ConfigError(f"unknown stop rule {sorted(stop)}", field="run.stop")


def _lattice(cfg: Config):
    _require(cfg, "region")
    if "spacing" not in cfg.lattice:
        raise ConfigError("lattice.spacing is required", field="lattice.spacing")
    return build_lattice(cfg.region, float(cfg.lattice["spacing"]))


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------


def _write(path: Path, text: str) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    except OSError as exc:
        raise _OutputError(f"cannot write {path}: {exc}") from exc


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n"


def _manifest(cfg: Config, args, outputs: list, extra: dict | None = None) -> dict:
    return {"tool": "switchjd", "tool_version": __version__,
            "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
            "subcommand": args.command, "config_hash": cfg.model.config_hash,
            "seed": None if not hasattr(args, "seed") else _sampler_seed(cfg, args),
            "options": {k: getattr(args, k, None) for k in ("paths", "seed", "step", "workers", "format")},
            "config": cfg.raw, "outputs": [str(p) for p in outputs], **(extra or {})}


def _sampler_seed(cfg: Config, args) -> int:
    return args.seed if args.seed is not None else int(cfg.sampler.get("seed", 0))


def _finish(cfg: Config, args, outputs: list, extra: dict | None = None) -> None:
    out = Path(args.out)
    _write(out.with_name(out.name + ".manifest.json"), _dumps(_manifest(cfg, args, outputs, extra)))


def _field_text(field, fmt: str, extra: dict | None = None) -> str:
    if fmt == "csv":
        return field.to_csv()
    recs = field.to_records()
    return _dumps({"records": recs, **(extra or {})})


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_validate(cfg: Config, args) -> int:
    rep = validate_model(cfg.model)
    out = rep.to_dict()
    if args.out:
        _write(Path(args.out), _dumps(out))
        _finish(cfg, args, [args.out])
    for name, check in rep.checks.items():
        line = f"{name:<3} {check.status:<13} {check.detail}"
        if check.witness and "field" in check.witness:
            line += f" [{check.witness['field']}]"
        print(line)
    return EXIT_PASS if rep.usable else EXIT_FAIL


def cmd_simulate(cfg: Config, args) -> int:
    scfg = _sampler_config(cfg, args)
    init = _state(cfg.run.get("init", {"x": [0.0] * cfg.model.dim}), cfg.model.dim, "run.init")
    trajs = sample_paths(cfg.model, init, _stop_rule(cfg), scfg, _paths(cfg, args))
    out = Path(args.out)
    if args.format == "json":
        text = _dumps([{"path": t.path, "status": t.status,
                        "events": [[tt, x.tolist(), r + 1, k] for tt, x, r, k in t.events()]}
                       for t in trajs])
    else:
        buf = io.StringIO()
        write_dump(trajs, buf, cfg.model.dim)
        text = buf.getvalue()
    _write(out, text)
    _finish(cfg, args, [out])
    return EXIT_PASS


def cmd_harmonic(cfg: Config, args) -> int:
    _require(cfg, "boundary")
    lat = _lattice(cfg)
    fld = estimate_harmonic(cfg.model, cfg.region, cfg.boundary, lat, _sampler_config(cfg, args),
                            _paths(cfg, args))
    warnings = sorted({r.warning for r in fld.meta["results"] if r.warning})
    info = {"killed_fraction": fld.meta["killed_fraction"],
            "truncated_fraction": fld.meta["truncated_fraction"], "warnings": warnings}
    _write(Path(args.out), _field_text(fld, args.format, info))
    _finish(cfg, args, [args.out], info)
    for w in warnings:
        print(f"warning: {w}", file=sys.stderr)
    return EXIT_PASS


def cmd_solve(cfg: Config, args) -> int:
    _require(cfg, "boundary")
    lat = _lattice(cfg)
    kw = {k: cfg.run[k] for k in ("max_iter", "tol") if k in cfg.run}
    code = EXIT_PASS
    try:
        fld, trace = fixed_point_solve(cfg.model, cfg.region, cfg.boundary, lat,
                                       _sampler_config(cfg, args), _paths(cfg, args), **kw)
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        fld, trace, code = None, exc.trace, EXIT_FAIL
    info = {"trace": trace.to_dict()}
    if fld is not None:
        _write(Path(args.out), _field_text(fld, args.format, info))
    trace_path = Path(args.out).with_suffix(".trace.json")
    _write(trace_path, _dumps(info["trace"]))
    _finish(cfg, args, ([args.out] if fld is not None else []) + [trace_path], info)
    print(f"iterations {trace.iterations}, converged {trace.converged}, "
          f"norms {[float(f'{v:.3g}') for v in trace.norms]}")
    return code


def _verify_section(cfg: Config) -> dict:
    sec = cfg.verify
    unknown = set(sec) - VERIFY_KEYS
    if unknown:
        raise ConfigError(f"unknown checks {sorted(unknown)}", field="verify")
    if not sec:
        raise ConfigError("no checks requested", field="verify")
    for k, v in sec.items():
        if v is not None and not isinstance(v, dict):
            raise ConfigError("expected a mapping", field=f"verify.{k}")
    return {k: (v or {}) for k, v in sec.items()}


def _keys(opts: dict, fld: str, allowed: set) -> dict:
    unknown = set(opts) - allowed
    if unknown:
        raise ConfigError(f"unknown keys {sorted(unknown)}", field=fld)
    return opts


def _run_checks(cfg: Config, args) -> list:
    model, d, m = cfg.model, cfg.model.dim, cfg.model.n_regimes
    scfg = _sampler_config(cfg, args)
    n = _paths(cfg, args)
    reports = []
    for name, opts in _verify_section(cfg).items():
        fld = f"verify.{name}"
        if name in ("max_principle", "strong_max_principle", "positivity"):
            _keys(opts, fld, {"boundary", "budget"})
            _require(cfg, "region")
            phi = boundary_from_dict(opts["boundary"], d, m, f"{fld}.boundary") \
                if "boundary" in opts else cfg.boundary
            if phi is None:
                raise ConfigError("boundary data required", field=f"{fld}.boundary")
            lat = _lattice(cfg)
            if name == "positivity":
                reports.append(V.check_positivity(model, cfg.region, phi, lat, scfg, n,
                                                  budget=int(opts.get("budget", 1_600_000))))
            else:
                theorem = "MaxPrinciple-I" if name == "max_principle" else "MaxPrinciple-II-surrogate"
                reports.append(V.check_maximum_principle(model, cfg.region, phi, lat, scfg, n,
                                                         theorem=theorem))
        elif name == "harnack":
            _keys(opts, fld, {"region", "spacing", "boundaries", "levels", "symmetric"})
            _require(cfg, "region")
            k_region = region_from_dict(opts.get("region"), d, f"{fld}.region")
            lat = build_lattice(k_region, float(opts.get("spacing", cfg.lattice.get("spacing", 0.1))))
            phis = [boundary_from_dict(b, d, m, f"{fld}.boundaries[{k + 1}]")
                    for k, b in enumerate(opts.get("boundaries", []))]
            reports.append(V.estimate_harnack_constant(
                model, cfg.region, lat, phis, scfg, n, levels=tuple(opts.get("levels", (1, 4, 16))),
                symmetric=bool(opts.get("symmetric", False))))
        elif name == "exit_time":
            _keys(opts, fld, {"center", "radii", "offsets", "regimes"})
            regs = None if "regimes" not in opts else [int(i) - 1 for i in opts["regimes"]]
            reports.extend(V.exit_time_bound_suite(
                model, opts.get("center", [0.0] * d), opts.get("radii", [0.1, 0.2, 0.4]), scfg, n,
                offsets=tuple(opts.get("offsets", (0.0, 0.5))), regimes=regs))
        elif name == "levy":
            _keys(opts, fld, {"pairs", "horizon", "init", "nodes"})
            pairs = []
            for k, p in enumerate(opts.get("pairs", [])):
                pf = f"{fld}.pairs[{k + 1}]"
                _keys(p, pf, {"source", "target", "regime"})
                pairs.append((region_from_dict(p.get("source"), d, f"{pf}.source"),
                              region_from_dict(p.get("target"), d, f"{pf}.target"),
                              int(p.get("regime", 1)) - 1))
            if not pairs:
                raise ConfigError("at least one pair is required", field=f"{fld}.pairs")
            init = _state(opts.get("init", {"x": [0.0] * d}), d, f"{fld}.init")
            reports.append(V.levy_system_check(model, pairs, float(opts.get("horizon", 1.0)), init,
                                               scfg, n, nodes=int(opts.get("nodes", 64))))
        elif name == "hitting":
            _keys(opts, fld, {"center", "R", "target", "start", "regime", "radii"})
            reports.append(V.hitting_lower_check(
                model, opts.get("center", [0.0] * d), float(opts.get("R", 0.5)),
                opts.get("target", [0.0] * d), opts.get("start", [0.0] * d), scfg, n,
                radii=opts.get("radii"), regime=int(opts.get("regime", 1)) - 1))
    return reports


def _summary(reports) -> str:
    lines = [f"{'theorem':<26} {'verdict':<13} {'flag':<10} witness"]
    for r in reports:
        flag = "DEFECT" if r.defect else ("warning" if r.verdict == "inconclusive" else "")
        wit = "" if r.witness is None else json.dumps(r.witness, default=_json_default)[:80]
        lines.append(f"{r.theorem:<26} {r.verdict:<13} {flag:<10} {wit}")
    return "\n".join(lines)


def cmd_verify(cfg: Config, args) -> int:
    reports = _run_checks(cfg, args)
    docs = [dict(r.to_dict(), warning=r.verdict == "inconclusive") for r in reports]
    if args.format == "csv":
        text = "theorem,verdict,defect,warning,config_hash,seed\n" + "".join(
            f"{r.theorem},{r.verdict},{int(r.defect)},{int(r.verdict == 'inconclusive')},"
            f"{r.config_hash},{r.seed}\n" for r in reports)
        _write(Path(args.out).with_suffix(".json"), _dumps(docs))
        outs = [args.out, str(Path(args.out).with_suffix(".json"))]
    else:
        text = _dumps(docs)
        outs = [args.out]
    _write(Path(args.out), text)
    _finish(cfg, args, outs)
    print(_summary(reports))
    return max((r.exit_code for r in reports), default=EXIT_PASS)


COMMANDS = {"validate": cmd_validate, "simulate": cmd_simulate, "harmonic": cmd_harmonic,
            "solve": cmd_solve, "verify": cmd_verify}
DEFAULT_OUT = {"simulate": "trajectories.tsv", "harmonic": "harmonic.csv", "solve": "solution.csv",
               "verify": "reports.json"}


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="switchjd", description=__doc__.split("\n\n")[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    v = sub.add_parser("validate", help="check the model assumptions")
    v.add_argument("config")
    v.add_argument("--out", help="JSON validation report")
    for name, helptext in (("simulate", "write sample trajectories"),
                           ("harmonic", "estimate the harmonic function on the lattice"),
                           ("solve", "solve the coupled system by fixed-point iteration"),
                           ("verify", "run the theorem checks in the verify section")):
        s = sub.add_parser(name, help=helptext)
        s.add_argument("config")
        s.add_argument("--paths", type=int, help="paths per estimate")
        s.add_argument("--seed", type=int, help="master seed")
        s.add_argument("--step", type=float, help="time step")
        s.add_argument("--workers", type=int, help="worker processes (wall time only)")
        s.add_argument("--out", default=DEFAULT_OUT[name], help="output file")
        s.add_argument("--format", choices=("csv", "json"), default="csv" if name != "verify" else "json")
    r = sub.add_parser("rerun", help="repeat a run from its manifest")
    r.add_argument("manifest")
    r.add_argument("--out", required=True, help="output file of the repeated run")
    return p


def _rerun(args) -> int:
    try:
        man = json.loads(Path(args.manifest).read_text())
    except (OSError, ValueError) as exc:
        print(f"error: cannot read manifest: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    opts = man.get("options", {})
    ns = argparse.Namespace(command=man["subcommand"], out=args.out,
                            **{k: opts.get(k) for k in ("paths", "seed", "step", "workers", "format")})
    if ns.format is None:
        ns.format = "json" if ns.command == "verify" else "csv"
    return _dispatch(ns, lambda: parse_config(man["config"]))


def _dispatch(args, load) -> int:
    try:
        cfg = load()
    except OSError as exc:
        print(f"error: cannot read configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SwitchJDError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return COMMANDS[args.command](cfg, args)
    except _OutputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except SwitchJDError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "rerun":
        return _rerun(args)
    return _dispatch(args, lambda: load_config(args.config))


if __name__ == "__main__":
    sys.exit(main())
