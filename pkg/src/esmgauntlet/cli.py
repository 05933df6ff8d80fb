"""Command-line entry point.

Exit codes: 0 all checks passed, 1 a check failed (evaluation completed),
2 usage or configuration error, 3 I/O or adapter error. Diagnostics go to
stderr; data goes to stdout or to files under ``--out``.
"""
from __future__ import annotations

import argparse
import itertools
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import __version__
from . import constraints as cons
from . import dataio, features, idealized, metrics, report, sanity
from .causality import ACOUSTIC_SPEED_MPS, causality_test
from .errors import AdapterError, ConfigurationError, DataIOError, EvalError, InsufficientDataError, MissingVariableError
from .grid import GridSpec, Provenance, zonal_mean
from .metrics import MetricRecord
from .protocol import SubprocessAdapter
from .report import ModelResults
from .sanity import CheckResult
from .toymodels import make_builtin_adapter

BUILTINS = ("upwind", "leaky", "teleport", "identity")
CASES = ("advection", "jet")


@dataclass
class RunConfig:
    """Everything that determines a run; echoed into the manifest."""

    subcommand: str
    inputs: List[str] = field(default_factory=list)
    adapter: Optional[str] = None
    options: Dict[str, object] = field(default_factory=dict)
    out: Optional[str] = None
    formats: List[str] = field(default_factory=lambda: ["json"])


# -- helpers -----------------------------------------------------------------------------

def _pair(text: str):
    try:
        lo, hi = (float(x) for x in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected lo:hi, got {text!r}") from None
    if lo > hi:
        raise argparse.ArgumentTypeError(f"empty range {text!r}")
    return (lo, hi)


def _point(text: str):
    try:
        lat, lon = (float(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected lat,lon, got {text!r}") from None
    return (lat, lon)


def _csv_list(text: str) -> List[str]:
    return [t for t in (s.strip() for s in text.split(",")) if t]


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("ESMGAUNTLET_THREADS", "1")))
    except ValueError:
        raise ConfigurationError("ESMGAUNTLET_THREADS must be an integer") from None


def _timestamp(args) -> Optional[str]:
    if getattr(args, "timestamp", None):
        return args.timestamp
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if epoch:
        return datetime.fromtimestamp(int(epoch), tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
    return None


def _read(path: str):
    try:
        return dataio.read_dataset(path)
    except FileNotFoundError:
        raise DataIOError(f"no such file: {path}") from None


def _model_id(args, ds=None, fallback="model") -> str:
    if getattr(args, "model_id", None):
        return args.model_id
    if ds is not None and ds.provenance.model_id:
        return ds.provenance.model_id
    return fallback


def _run_config(args) -> RunConfig:
    skip = {"command", "func", "config", "out", "formats", "inputs", "model", "reference", "adapter", "timestamp"}
    opts = {k: v for k, v in sorted(vars(args).items()) if k not in skip}
    inputs = list(getattr(args, "inputs", None) or [])
    if getattr(args, "reference", None):
        inputs = [args.model, args.reference]
    return RunConfig(args.command, inputs, getattr(args, "adapter", None), opts, getattr(args, "out", None),
                     list(getattr(args, "formats", ["json"]) or ["json"]))


def _config_snapshot(args) -> dict:
    cfg = asdict(_run_config(args))
    cfg["suite_version"] = __version__
    return json.loads(report._canonical(cfg))


def _finish(args, parts: Sequence[ModelResults], extras: Optional[Dict[str, bytes]] = None) -> int:
    rep = report.collate(parts, timestamp=_timestamp(args))
    _write_outputs(args, rep, extras)
    return 0 if rep.all_passed else 1


def _write_outputs(args, rep, extras=None):
    formats = getattr(args, "formats", None) or ["json"]
    out = getattr(args, "out", None)
    if out in (None, "-"):
        sys.stdout.buffer.write(report.render_json(rep))
        sys.stdout.buffer.flush()
        return
    d = Path(out)
    d.mkdir(parents=True, exist_ok=True)
    suffix = {"json": "json", "csv": "csv", "markdown": "md"}
    for fmt in formats:
        report.emit(rep, fmt, d / f"report.{suffix[fmt]}")
    (d / "manifest.json").write_bytes(report._canonical(rep.manifest.to_dict()) + b"\n")
    for name, blob in (extras or {}).items():
        (d / name).write_bytes(blob)


def _summary(results: Sequence[CheckResult]):
    for c in results:
        print(f"{c.check_id}: {'PASS' if c.passed else 'FAIL'} statistic={c.statistic!r} threshold={c.threshold!r}",
              file=sys.stderr)


# -- subcommands --------------------------------------------------------------------------

def cmd_validate(args) -> int:
    ds = _read(args.inputs[0])
    profile = args.profile or list(dataio.DEFAULT_PROFILE)
    violations = dataio.validate_metadata(ds, profile)
    for v in violations:
        print(str(v), file=sys.stderr)
    check = CheckResult("metadata", not violations, float(len(violations)), 0.0,
                        notes="; ".join(str(v) for v in violations))
    _summary([check])
    mid = _model_id(args, ds)
    return _finish(args, [ModelResults(mid, ds.provenance, (check,), (), {"validate": _config_snapshot(args)})])


def _auto_tracers(ds) -> List[str]:
    return [n for n in ("q", "tcwv", "pr") if n in ds]


def cmd_sanity(args) -> int:
    ds = _read(args.inputs[0])
    checks = []
    mass_var = args.mass_var
    if mass_var == "auto":
        mass_var = "ps" if "ps" in ds else ("q" if "q" in ds and ds["q"].dims == ("time", "lat", "lon") else None)
    if mass_var:
        checks.append(sanity.check_mass_conservation(ds, args.tol, mass_var))
    tracers = args.tracers if args.tracers is not None else _auto_tracers(ds)
    if tracers:
        checks.append(sanity.check_nonnegative_tracers(ds, tracers, args.floor))
    if "pr" in ds and "tcwv" in ds:
        dt = args.dt if args.dt is not None else float(ds.attrs.get("dt_seconds", "nan"))
        if not np.isfinite(dt):
            raise ConfigurationError("precipitation budget needs --dt or a dt_seconds attribute")
        checks.append(sanity.check_precip_column_budget(ds, dt, args.precip_tol))
    if "ta" in ds and "q" in ds and ds.level_pa is not None:
        checks.append(sanity.check_supersaturation(ds, args.rh_max, args.band, args.max_exceed))
    if not checks:
        raise MissingVariableError("no sanity check is applicable to this dataset")
    _summary(checks)
    mid = _model_id(args, ds)
    return _finish(args, [ModelResults(mid, ds.provenance, tuple(checks), (), {"sanity": _config_snapshot(args)})])


def _metric_task(model, ref, var, season, mid, region):
    m = metrics.climatology(model, var, season)
    r = metrics.climatology(ref, var, season)
    grid = model.grid
    units = model[var].units
    out = [
        MetricRecord(mid, var, season, region, "rmse", metrics.rmse(m, r, grid), units),
        MetricRecord(mid, var, season, region, "bias",
                     float(np.mean(np.atleast_1d(_gm(m.data, grid) - _gm(r.data, grid)))), units),
    ]
    if m.dims[-2:] == ("lat", "lon") and m.data.ndim == 2:
        out.append(MetricRecord(mid, var, season, region, "zonal_mean", tuple(float(x) for x in zonal_mean(m.data)), units))
    return out


def _gm(data, grid):
    from .grid import global_mean

    return np.asarray(global_mean(data, grid))


def cmd_metrics(args) -> int:
    model, ref = _read(args.model), _read(args.reference)
    if model.grid != ref.grid:
        raise ConfigurationError("model and reference grids differ (no regridding is performed)")
    variables = args.vars or sorted(set(model.variables) & set(ref.variables))
    mid = _model_id(args, model)
    tasks = [(v, s) for v in variables for s in args.seasons]
    with ThreadPoolExecutor(max_workers=_threads()) as pool:
        chunks = list(pool.map(lambda vs: _metric_task(model, ref, vs[0], vs[1], mid, args.region), tasks))
    records = tuple(r for chunk in chunks for r in chunk)
    print(f"{len(records)} metric records for {mid}", file=sys.stderr)
    return _finish(args, [ModelResults(mid, model.provenance, (), records, {"metrics": _config_snapshot(args)})])


def cmd_constraints(args) -> int:
    ds = _read(args.inputs[0])
    mid = _model_id(args, ds)
    wv_band = args.wv_band or args.band or cons.WATER_VAPOR_BAND
    pr_band = args.pr_band or args.band or cons.PRECIP_BAND
    checks, records = [], []
    todo = {"water_vapor": ("tcwv", wv_band, cons.check_water_vapor_constraint),
            "precip": ("pr", pr_band, cons.check_precip_constraint)}
    for name in args.only or list(todo):
        var, band, fn = todo[name]
        res = fn(ds, band)
        checks.append(CheckResult(f"constraint_{name}", res.passed, res.rate_pct_per_K, tuple(res.band),
                                  notes=f"stderr={res.stderr_pct_per_K:.3g} %/K over {res.n_samples} annual means"))
        records.append(MetricRecord(mid, var, "ANN", args.region, "scaling_rate", res.rate_pct_per_K, "%/K"))
    _summary(checks)
    return _finish(args, [ModelResults(mid, ds.provenance, tuple(checks), tuple(records),
                                       {"constraints": _config_snapshot(args)})])


def cmd_spectra(args) -> int:
    model, ref = _read(args.model), _read(args.reference)
    mid = _model_id(args, model)
    region = f"lat{args.lat_band[0]:g}:{args.lat_band[1]:g}"
    records = []
    for var in args.vars or [v for v in sorted(set(model.variables) & set(ref.variables))
                             if model[v].dims[-2:] == ("lat", "lon")]:
        sm = metrics.zonal_power_spectrum(model, var, args.lat_band)
        sr = metrics.zonal_power_spectrum(ref, var, args.lat_band)
        m_eff = metrics.effective_resolution(sm, sr, args.ratio)
        units = f"({model[var].units})2"
        records.append(MetricRecord(mid, var, "ANN", region, "zonal_spectrum", tuple(float(x) for x in sm.energy), units))
        records.append(MetricRecord(mid, var, "ANN", region, "effective_resolution",
                                    None if m_eff is None else float(m_eff), "wavenumber"))
    return _finish(args, [ModelResults(mid, model.provenance, (), tuple(records), {"spectra": _config_snapshot(args)})])


def cmd_features(args) -> int:
    ds = _read(args.inputs[0])
    mid = _model_id(args, ds)
    found = features.detect_pressure_minima(ds, args.var, args.dp, args.radius)
    closed = [[c for c in per_t if c.closed] for per_t in found]
    counts = [len(c) for c in closed]
    records = [MetricRecord(mid, args.var, "ANN", args.region, "closed_minima_per_step", float(np.mean(counts)), "1")]
    centers = [c for per_t in closed for c in per_t]
    if centers and args.composite_var:
        comp = features.radial_composite(ds, args.composite_var, centers, args.bins, args.radius)
        records.append(MetricRecord(mid, args.composite_var, "ANN", args.region, "radial_composite",
                                    tuple(float(x) for x in comp), ds[args.composite_var].units))
    print(f"{sum(counts)} closed minima over {len(found)} timesteps", file=sys.stderr)
    extras = {"features.csv": features.candidates_to_csv(found).encode("utf-8")}
    return _finish(args, [ModelResults(mid, ds.provenance, (), tuple(records), {"features": _config_snapshot(args)})],
                   extras)


def _make_case(args, grid):
    if args.case == "advection":
        return idealized.gen_solid_body_advection(grid, alpha_rad=np.deg2rad(args.alpha), cfl=args.cfl)
    perturb = None
    if args.perturb_amplitude:
        perturb = {"lat": args.jet_center, "lon": 180.0, "amplitude": args.perturb_amplitude, "width": 5.0e5}
    return idealized.gen_balanced_jet(grid, u_max=args.u_max, jet_center_deg=args.jet_center, perturb=perturb,
                                      cfl=args.cfl, steps=args.steps or 50)


def _make_adapter(args, case):
    if args.adapter:
        try:
            ad = SubprocessAdapter(args.adapter, grid=case.grid)
        except AdapterError:
            raise
        return ad, args.model_id or "subprocess"
    variant = args.builtin
    return (make_builtin_adapter(variant, case.grid, case.dt_s, case.variables,
                                 leak_lambda=args.leak_lambda, smoothing_strength=args.smoothing),
            args.model_id or f"toy-{variant}")


def _close(adapter):
    if hasattr(adapter, "close"):
        adapter.close()


def cmd_idealized(args) -> int:
    grid = GridSpec.regular(args.nlat, args.nlon)
    case = _make_case(args, grid)
    adapter, mid = _make_adapter(args, case)
    try:
        steps = args.steps if args.steps is not None else case.duration_steps
        traj = idealized.run_case(case, adapter, steps)
    finally:
        _close(adapter)
    traj = traj.replace(provenance=Provenance(model_id=mid, description=f"{case.case_id} trajectory"))
    checks, records = [], []
    tracer = "q" if case.case_id == "advection_solid_body" else "h"
    mass = sanity.check_mass_conservation(traj, args.tol, tracer)
    checks.append(CheckResult(f"{case.case_id}.mass_conservation", mass.passed, mass.statistic, mass.threshold,
                              mass.worst_offenders, mass.notes))
    if case.case_id == "advection_solid_body":
        nonneg = sanity.check_nonnegative_tracers(traj, ["q"])
        checks.append(CheckResult(f"{case.case_id}.nonnegative_tracers", nonneg.passed, nonneg.statistic,
                                  nonneg.threshold, nonneg.worst_offenders, nonneg.notes))
        try:
            l2, over, under = idealized.advection_shape_error(traj, case)
            for name, val in (("l2_error", l2), ("overshoot", over), ("undershoot", under)):
                records.append(MetricRecord(mid, "q", "ANN", "global", f"advection_{name}", val, "1" if name == "l2_error" else "kg kg-1"))
        except ConfigurationError as exc:
            print(f"shape error skipped: {exc}", file=sys.stderr)
    s = idealized.zonal_symmetry_error(traj, tracer)
    records.append(MetricRecord(mid, tracer, "ANN", "global", "zonal_symmetry_error", tuple(float(x) for x in s), "1"))
    if case.case_id == "balanced_jet" and not args.perturb_amplitude:
        checks.append(CheckResult("balanced_jet.zonal_symmetry", bool(np.max(s) <= args.sym_tol), float(np.max(s)),
                                  float(args.sym_tol), notes="max over trajectory"))
    _summary(checks)
    extras = {"trajectory.etc": dataio.encode_dataset(traj)}
    return _finish(args, [ModelResults(mid, traj.with_content_hash().provenance, tuple(checks), tuple(records),
                                       {"idealized": _config_snapshot(args)})], extras)


def cmd_causality(args) -> int:
    grid = GridSpec.regular(args.nlat, args.nlon)
    case = _make_case(args, grid)
    adapter, mid = _make_adapter(args, case)
    variable = args.variable or ("q" if case.case_id == "advection_solid_body" else "h")
    if args.point is not None:
        point = args.point
    elif case.case_id == "advection_solid_body":
        point = (case.params["bell_lat"], case.params["bell_lon"])
    else:
        point = (args.jet_center, 180.0)
    if args.cbound == "wind":
        state = case.initial.state_at(0, case.variables)
        c_bound = float(np.max(np.hypot(state["u"], state["v"])))
    else:
        try:
            c_bound = float(args.cbound)
        except ValueError:
            raise ConfigurationError(f"--cbound expects a speed or 'wind', got {args.cbound!r}") from None
    try:
        rep = causality_test(adapter, case.initial, point, args.amplitude, variable, c_bound, args.steps, args.eps)
    finally:
        _close(adapter)
    margin = rep.front_radius_m - rep.bound_radius_m
    check = CheckResult("causality", rep.passed, float(np.max(margin)), 0.0,
                        notes=f"c_bound={c_bound:g} m/s, first violation step={rep.first_violation_step}")
    records = [MetricRecord(mid, variable, "ANN", "global", "causality_front_radius",
                            tuple(float(x) for x in rep.front_radius_m), "m"),
               MetricRecord(mid, variable, "ANN", "global", "causality_speed_estimate", rep.speed_estimate_mps, "m s-1")]
    _summary([check])
    extras = {"causality.csv": rep.to_csv().encode("utf-8"),
              "causality.json": report._canonical(rep.to_dict()) + b"\n"}
    return _finish(args, [ModelResults(mid, Provenance(model_id=mid, description="causality test subject"),
                                       (check,), tuple(records), {"causality": _config_snapshot(args)})], extras)


def _load_report(path: str):
    try:
        with open(path, "rb") as fh:
            return report.parse_json(fh.read())
    except FileNotFoundError:
        raise DataIOError(f"no such file: {path}") from None
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise DataIOError(f"{path}: not a version-1 report ({exc!r})") from None


def cmd_compare(args) -> int:
    parts = []
    for path in args.inputs:
        rep = _load_report(path)
        parts.extend(rep.results_for(m) for m in rep.models)
    rep = report.collate(parts, timestamp=_timestamp(args), exclude_self=args.exclude_self)
    pairs = args.pair or list(itertools.combinations(rep.models, 2))
    rep = report.with_pairwise(rep, pairs)
    _write_outputs(args, rep)
    return 0 if rep.all_passed else 1


def cmd_report(args) -> int:
    rep = _load_report(args.inputs[0])
    _write_outputs(args, rep)
    return 0 if rep.all_passed else 1


# -- parser ---------------------------------------------------------------------------------

def _model_pair(text: str):
    if ":" not in text:
        raise argparse.ArgumentTypeError(f"expected MODEL_A:MODEL_B, got {text!r}")
    a, b = text.split(":", 1)
    return (a, b)


def _formats(text: str) -> List[str]:
    out = _csv_list(text)
    bad = [f for f in out if f not in report.RENDERERS]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown format(s) {bad}; choose from json,csv,markdown")
    return out


def _common(p: argparse.ArgumentParser):
    p.add_argument("--out", help="output directory (default: report JSON on stdout)")
    p.add_argument("--formats", "--emit", dest="formats", type=_formats, default=["json"],
                   help="report formats to write under --out: json,csv,markdown")
    p.add_argument("--model-id", help="override the model id taken from provenance")
    p.add_argument("--region", default="global", help="region label for metric records")
    p.add_argument("--timestamp", help="timestamp recorded in the manifest (default: $SOURCE_DATE_EPOCH or none)")
    p.add_argument("--config", help="key = value file; explicit flags override it")


def _adapter_opts(p: argparse.ArgumentParser):
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--adapter", metavar="CMD", help="command line of a child speaking esm-adapter/1")
    src.add_argument("--builtin", choices=BUILTINS, help="built-in toy model")
    p.add_argument("--nlat", type=int, default=64)
    p.add_argument("--nlon", type=int, default=128)
    p.add_argument("--cfl", type=float, default=0.5)
    p.add_argument("--alpha", type=float, default=0.0, help="advection axis tilt in degrees")
    p.add_argument("--u-max", type=float, default=35.0, help="jet speed, m/s")
    p.add_argument("--jet-center", type=float, default=45.0, help="jet latitude, degrees")
    p.add_argument("--perturb-amplitude", type=float, default=0.0, help="jet height bump, m")
    p.add_argument("--leak-lambda", type=float, default=1e-3)
    p.add_argument("--smoothing", type=float, default=0.1)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="esmgauntlet", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="metadata and axis checks")
    p.add_argument("inputs", nargs=1, metavar="ETC")
    p.add_argument("--profile", type=_csv_list, help="required keys, e.g. units,standard_name,provenance.model_id")
    _common(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("sanity", help="conservation and physical-bound checks")
    p.add_argument("inputs", nargs=1, metavar="ETC")
    p.add_argument("--tol", type=float, default=1e-6, help="relative mass drift tolerance")
    p.add_argument("--mass-var", default="auto")
    p.add_argument("--tracers", type=_csv_list)
    p.add_argument("--floor", type=float, default=0.0)
    p.add_argument("--dt", type=float, help="model step for the precipitation budget, s")
    p.add_argument("--precip-tol", type=float, default=1e-9)
    p.add_argument("--rh-max", type=float, default=1.01)
    p.add_argument("--band", type=_pair, default=(85000.0, 110000.0), help="near-surface pressure band lo:hi, Pa")
    p.add_argument("--max-exceed", type=float, default=1e-4)
    _common(p)
    p.set_defaults(func=cmd_sanity)

    p = sub.add_parser("metrics", help="RMSE, bias and zonal means against a reference")
    p.add_argument("model", metavar="MODEL_ETC")
    p.add_argument("reference", metavar="REF_ETC")
    p.add_argument("--vars", type=_csv_list)
    p.add_argument("--seasons", type=_csv_list, default=["ANN"])
    _common(p)
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("constraints", help="water vapour and precipitation scaling rates")
    p.add_argument("inputs", nargs=1, metavar="ETC")
    p.add_argument("--band", type=_pair, help="band lo:hi %%/K applied to every selected constraint")
    p.add_argument("--wv-band", type=_pair)
    p.add_argument("--pr-band", type=_pair)
    p.add_argument("--only", type=_csv_list, help="water_vapor and/or precip")
    _common(p)
    p.set_defaults(func=cmd_constraints)

    p = sub.add_parser("spectra", help="zonal power spectra and effective resolution")
    p.add_argument("model", metavar="MODEL_ETC")
    p.add_argument("reference", metavar="REF_ETC")
    p.add_argument("--vars", type=_csv_list)
    p.add_argument("--lat-band", type=_pair, default=(-60.0, 60.0))
    p.add_argument("--ratio", type=float, default=0.5)
    _common(p)
    p.set_defaults(func=cmd_spectra)

    p = sub.add_parser("features", help="closed-contour pressure minima")
    p.add_argument("inputs", nargs=1, metavar="ETC")
    p.add_argument("--var", default="msl")
    p.add_argument("--dp", type=float, default=200.0)
    p.add_argument("--radius", type=float, default=1.0e6)
    p.add_argument("--composite-var")
    p.add_argument("--bins", type=int, default=10)
    _common(p)
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("idealized", help="run an idealized case against a model")
    p.add_argument("case", choices=CASES)
    _adapter_opts(p)
    p.add_argument("--steps", type=int, help="default: one revolution (advection) or 50 (jet)")
    p.add_argument("--tol", type=float, default=1e-10, help="relative mass drift tolerance")
    p.add_argument("--sym-tol", type=float, default=1e-12, help="zonal symmetry tolerance for the jet")
    _common(p)
    p.set_defaults(func=cmd_idealized)

    p = sub.add_parser("causality", help="single-point perturbation causality test")
    _adapter_opts(p)
    p.add_argument("--case", choices=CASES, default="jet", help="base state")
    p.add_argument("--cbound", default=str(ACOUSTIC_SPEED_MPS), help="bound speed in m/s, or 'wind'")
    p.add_argument("--steps", type=int, default=10)
    p.add_argument("--eps", type=float, default=1e-6)
    p.add_argument("--amplitude", type=float, default=100.0)
    p.add_argument("--variable")
    p.add_argument("--point", type=_point)
    _common(p)
    p.set_defaults(func=cmd_causality)

    p = sub.add_parser("compare", help="collate reports from several runs or models")
    p.add_argument("inputs", nargs="+", metavar="REPORT_JSON")
    p.add_argument("--pair", type=_model_pair, action="append", help="MODEL_A:MODEL_B (default: all pairs)")
    p.add_argument("--exclude-self", action="store_true", help="portrait median over the other models only")
    _common(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("report", help="re-render a report in other formats")
    p.add_argument("inputs", nargs=1, metavar="REPORT_JSON")
    _common(p)
    p.set_defaults(func=cmd_report)
    return parser


def load_config_file(path: str) -> Dict[str, str]:
    """``key = value`` lines; ``#`` starts a comment. Keys use flag spelling without dashes."""
    out = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataIOError(f"cannot read config {path}: {exc}") from None
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"{path}:{n}: expected key = value")
        k, v = (s.strip() for s in line.split("=", 1))
        out[k.replace("-", "_")] = v
    return out


def _subparsers(parser) -> Dict[str, argparse.ArgumentParser]:
    return next(a.choices for a in parser._actions if isinstance(a, argparse._SubParsersAction))


def _apply_config(parser, command: str, path: str):
    """Install values from a config file as defaults of ``command``; flags given on the command line win."""
    cfg = load_config_file(path)
    sub = _subparsers(parser)[command]
    actions = {a.dest: a for a in sub._actions}
    defaults = {}
    for key, raw in cfg.items():
        if key not in actions or key in ("inputs", "config", "help"):
            raise ConfigurationError(f"config key {key!r} is not an option of {command}")
        act = actions[key]
        if isinstance(act, argparse._StoreTrueAction):
            defaults[key] = raw.lower() in ("1", "true", "yes", "on")
        else:
            try:
                defaults[key] = act.type(raw) if act.type else raw
            except (argparse.ArgumentTypeError, ValueError) as exc:
                raise ConfigurationError(f"config key {key!r}: {exc}") from None
    sub.set_defaults(**defaults)
    if any(k in ("adapter", "builtin") for k in defaults):
        for a in sub._actions:
            if a.dest in ("adapter", "builtin"):
                a.required = False
        for grp in sub._mutually_exclusive_groups:
            grp.required = False


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        pre = argparse.ArgumentParser(add_help=False)
        pre.add_argument("--config")
        known, rest = pre.parse_known_args(argv)
        command = next((a for a in rest if not a.startswith("-")), None)
        if known.config and command in _subparsers(parser):
            _apply_config(parser, command, known.config)
        args = parser.parse_args(argv)
        return int(args.func(args))
    except SystemExit as exc:
        return int(exc.code or 0) if not isinstance(exc.code, str) else 2
    except EvalError as exc:
        print(f"esmgauntlet: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"esmgauntlet: I/O error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
