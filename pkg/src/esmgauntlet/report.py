"""Multi-model collation and report emission.

Reports hold every check and every metric per model. There is deliberately
no aggregate score anywhere in the schema; absent evaluations are explicit
nulls, never zeros.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import sys
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from . import __version__
from .errors import CollationError, ConfigurationError, DegenerateError, InsufficientDataError, ValidationError
from .grid import Provenance
from .metrics import MetricRecord, portrait_normalize
from .sanity import CheckResult

REPORT_VERSION = 1


@dataclass(frozen=True)
class ModelResults:
    """Everything evaluated for one model in one run."""

    model_id: str
    provenance: Provenance = field(default_factory=Provenance)
    checks: Tuple[CheckResult, ...] = ()
    metrics: Tuple[MetricRecord, ...] = ()
    config: Mapping[str, object] = field(default_factory=dict)


@dataclass(frozen=True)
class RunManifest:
    run_id: str
    timestamp: Optional[str]
    suite_version: str
    models: Mapping[str, Provenance]
    config: Mapping[str, object]

    def to_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "timestamp": self.timestamp,
            "suite_version": self.suite_version,
            "models": {k: self.models[k].to_dict() for k in sorted(self.models)},
            "config": _jsonable(self.config),
        }

    @classmethod
    def from_dict(cls, d) -> "RunManifest":
        return cls(d["run_id"], d.get("timestamp"), d["suite_version"],
                   {k: Provenance.from_dict(v) for k, v in d["models"].items()}, d.get("config", {}))


@dataclass(frozen=True)
class IntercomparisonReport:
    manifest: RunManifest
    models: Tuple[str, ...]
    check_ids: Tuple[str, ...]
    checks: Mapping[str, Mapping[str, Optional[CheckResult]]]
    metric_keys: Tuple[tuple, ...]
    metrics: Tuple[MetricRecord, ...]
    portrait_entries: Tuple[tuple, ...] = ()
    portrait: Optional[np.ndarray] = None
    pairwise: Tuple[dict, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "_lookup", {(r.model_id,) + r.key: r for r in self.metrics})

    def metric(self, model_id: str, key: tuple) -> Optional[MetricRecord]:
        return self._lookup.get((model_id,) + tuple(key))

    def results_for(self, model_id: str) -> ModelResults:
        checks = tuple(c for c in self.checks.get(model_id, {}).values() if c is not None)
        metrics = tuple(m for m in self.metrics if m.model_id == model_id)
        cfg = self.manifest.config.get(model_id, {}) if isinstance(self.manifest.config, Mapping) else {}
        return ModelResults(model_id, self.manifest.models.get(model_id, Provenance(model_id=model_id)),
                            checks, metrics, cfg)

    @property
    def all_passed(self) -> bool:
        return all(c is None or c.passed for row in self.checks.values() for c in row.values())


def _jsonable(obj):
    if isinstance(obj, Mapping):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return None if math.isnan(v) or math.isinf(v) else v
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def _canonical(obj) -> bytes:
    return json.dumps(_jsonable(obj), sort_keys=True, separators=(",", ":"), ensure_ascii=False,
                      allow_nan=False).encode("utf-8")


def _values_equal(a, b) -> bool:
    return _canonical(a) == _canonical(b)


def collate(results: Iterable[ModelResults], timestamp: Optional[str] = None,
            rmse_metric: str = "rmse", exclude_self: bool = False) -> IntercomparisonReport:
    """Join per-model results into one report, canonically ordered.

    Identical duplicates merge silently; conflicting duplicates for a key
    raise CollationError. A portrait is built from ``rmse_metric`` scalar
    records whenever at least two models share an entry.
    """
    by_model: Dict[str, ModelResults] = {}
    configs: Dict[str, dict] = {}
    checks: Dict[str, Dict[str, CheckResult]] = {}
    records: Dict[tuple, MetricRecord] = {}
    for res in results:
        mid = res.model_id
        if not mid:
            raise CollationError("model_id must be nonempty")
        # one model may arrive in several parts (one per subcommand); the first provenance wins
        by_model.setdefault(mid, res)
        configs.setdefault(mid, {}).update(res.config)
        row = checks.setdefault(mid, {})
        for c in res.checks:
            if c.check_id in row and not _values_equal(row[c.check_id].to_dict(), c.to_dict()):
                raise CollationError(f"conflicting results for check {c.check_id!r} of model {mid!r}")
            row[c.check_id] = c
        for m in res.metrics:
            if m.model_id != mid:
                raise CollationError(f"metric record for {m.model_id!r} submitted under {mid!r}")
            k = (mid,) + m.key
            if k in records and not _values_equal(records[k].to_dict(), m.to_dict()):
                raise CollationError(f"conflicting records for key {k!r}")
            records[k] = m

    models = tuple(sorted(by_model))
    check_ids = tuple(sorted({cid for row in checks.values() for cid in row}))
    table = {mid: {cid: checks[mid].get(cid) for cid in check_ids} for mid in models}
    metric_keys = tuple(sorted({k[1:] for k in records}))
    metrics = tuple(records[k] for k in sorted(records))

    entries = tuple(sorted({k[:3] for k in metric_keys if k[3] == rmse_metric}))
    portrait = None
    if entries and len(models) >= 2:
        raw = np.full((len(models), len(entries)), np.nan)
        for i, mid in enumerate(models):
            for e, ent in enumerate(entries):
                rec = records.get((mid,) + ent + (rmse_metric,))
                if rec is not None and isinstance(rec.value, (int, float)):
                    raw[i, e] = float(rec.value)
        columns = {}
        for e in range(len(entries)):
            try:
                columns[e] = portrait_normalize(raw[:, e:e + 1], exclude_self=exclude_self)
            except (InsufficientDataError, DegenerateError):
                # fewer than two models or a zero median: the raw RMSEs stay in
                # the metric table, the column just has no normalized form
                continue
        entries = tuple(entries[e] for e in columns)
        portrait = np.hstack([columns[e] for e in columns]) if columns else None
    else:
        entries = ()

    config = {mid: configs[mid] for mid in models}
    provs = {mid: by_model[mid].provenance for mid in models}
    body = {"models": {m: p.to_dict() for m, p in provs.items()}, "config": config,
            "checks": {m: {c: (None if r is None else r.to_dict()) for c, r in table[m].items()} for m in models},
            "metrics": [r.to_dict() for r in metrics]}
    run_id = hashlib.sha256(_canonical(body)).hexdigest()[:16]
    manifest = RunManifest(run_id, timestamp, __version__, provs, config)
    return IntercomparisonReport(manifest, models, check_ids, table, metric_keys, metrics, entries, portrait)


def _delta(a, b):
    if a is None or b is None:
        return None
    if isinstance(a, tuple) or isinstance(b, tuple):
        if not (isinstance(a, tuple) and isinstance(b, tuple)) or len(a) != len(b):
            return None
        return tuple(float(x) - float(y) for x, y in zip(a, b))
    return float(a) - float(b)


def pairwise_delta(report: IntercomparisonReport, model_a: str, model_b: str) -> dict:
    """Per-metric differences a - b over shared metrics, and paired check verdicts."""
    for mid in (model_a, model_b):
        if mid not in report.models:
            raise ConfigurationError(f"unknown model id {mid!r}")
    metrics = []
    for key in report.metric_keys:
        ra, rb = report.metric(model_a, key), report.metric(model_b, key)
        if ra is None or rb is None:
            continue
        metrics.append({"key": list(key), "a": ra.value, "b": rb.value, "delta": _delta(ra.value, rb.value)})
    checks = []
    for cid in report.check_ids:
        ca, cb = report.checks[model_a].get(cid), report.checks[model_b].get(cid)
        if ca is None or cb is None:
            continue
        checks.append({"check_id": cid, "passed_a": ca.passed, "passed_b": cb.passed,
                       "statistic_delta": _delta(ca.statistic, cb.statistic)})
    return {"model_a": model_a, "model_b": model_b, "metrics": metrics, "checks": checks}


def with_pairwise(report: IntercomparisonReport, pairs: Sequence[Tuple[str, str]]) -> IntercomparisonReport:
    from dataclasses import replace

    return replace(report, pairwise=tuple(pairwise_delta(report, a, b) for a, b in pairs))


# -- serialization ----------------------------------------------------------------------

def to_dict(report: IntercomparisonReport) -> dict:
    return {
        "report_version": REPORT_VERSION,
        "manifest": report.manifest.to_dict(),
        "models": list(report.models),
        "check_ids": list(report.check_ids),
        "checks": {
            mid: {cid: (None if c is None else c.to_dict()) for cid, c in row.items()}
            for mid, row in report.checks.items()
        },
        "metric_keys": [list(k) for k in report.metric_keys],
        "metric_table": {
            mid: [
                (None if (r := report.metric(mid, k)) is None else r.to_dict()["value"])
                for k in report.metric_keys
            ]
            for mid in report.models
        },
        "metrics": [r.to_dict() for r in report.metrics],
        "portrait": {
            "models": list(report.models) if report.portrait is not None else [],
            "entries": [list(e) for e in report.portrait_entries],
            "values": [] if report.portrait is None else _jsonable(report.portrait),
        },
        "pairwise": _jsonable(list(report.pairwise)),
    }


def from_dict(d: Mapping) -> IntercomparisonReport:
    if d.get("report_version") != REPORT_VERSION:
        raise ValidationError(f"unsupported report_version {d.get('report_version')!r}")
    manifest = RunManifest.from_dict(d["manifest"])
    checks = {
        mid: {cid: (None if c is None else CheckResult.from_dict(c)) for cid, c in row.items()}
        for mid, row in d["checks"].items()
    }
    values = d["portrait"]["values"]
    portrait = None
    if values:
        portrait = np.array([[np.nan if x is None else x for x in row] for row in values], dtype=np.float64)
    return IntercomparisonReport(
        manifest, tuple(d["models"]), tuple(d["check_ids"]), checks,
        tuple(tuple(k) for k in d["metric_keys"]),
        tuple(MetricRecord.from_dict(r) for r in d["metrics"]),
        tuple(tuple(e) for e in d["portrait"]["entries"]), portrait,
        tuple(d.get("pairwise", ())),
    )


def render_json(report: IntercomparisonReport) -> bytes:
    return _canonical(to_dict(report)) + b"\n"


def parse_json(blob) -> IntercomparisonReport:
    return from_dict(json.loads(blob))


def render_csv(report: IntercomparisonReport) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["model_id", "variable", "season", "region", "metric_id", "value", "units"])
    for r in report.metrics:
        v = r.to_dict()["value"]
        w.writerow([r.model_id, r.variable, r.season, r.region, r.metric_id,
                    json.dumps(v) if isinstance(v, list) else ("" if v is None else repr(v)), r.units])
    return buf.getvalue().encode("utf-8")


def _fmt(x) -> str:
    return "n/a" if x is None or (isinstance(x, float) and math.isnan(x)) else f"{x:.4g}"


def render_markdown(report: IntercomparisonReport) -> bytes:
    lines = [f"# Evaluation report `{report.manifest.run_id}`", ""]
    lines.append(f"Suite version {report.manifest.suite_version}; models: {', '.join(report.models) or 'none'}.")
    lines.append("")
    lines.append("## Checks")
    lines.append("")
    if report.check_ids:
        lines.append("| model | " + " | ".join(report.check_ids) + " |")
        lines.append("|---" * (len(report.check_ids) + 1) + "|")
        for mid in report.models:
            cells = []
            for cid in report.check_ids:
                c = report.checks[mid][cid]
                cells.append("absent" if c is None else f"{'PASS' if c.passed else 'FAIL'} ({_fmt(c.statistic)})")
            lines.append(f"| {mid} | " + " | ".join(cells) + " |")
    else:
        lines.append("No checks were run.")
    lines += ["", "## Metrics", ""]
    scalar_keys = [k for k in report.metric_keys
                   if any(isinstance(getattr(report.metric(m, k), "value", None), float) for m in report.models)]
    if scalar_keys:
        lines.append("| variable | season | region | metric | " + " | ".join(report.models) + " |")
        lines.append("|---" * (4 + len(report.models)) + "|")
        for k in scalar_keys:
            vals = []
            for m in report.models:
                r = report.metric(m, k)
                vals.append("absent" if r is None else _fmt(r.value if isinstance(r.value, float) else None))
            lines.append("| " + " | ".join(k) + " | " + " | ".join(vals) + " |")
    else:
        lines.append("No scalar metrics.")
    lines += ["", "## Portrait (RMSE relative to the median model)", ""]
    if report.portrait is not None and report.portrait_entries:
        ents = ["/".join(e) for e in report.portrait_entries]
        lines.append("| model | " + " | ".join(ents) + " |")
        lines.append("|---" * (len(ents) + 1) + "|")
        for i, m in enumerate(report.models):
            row = ["n/a" if np.isnan(x) else f"{x:+.3f}" for x in report.portrait[i]]
            lines.append(f"| {m} | " + " | ".join(row) + " |")
    else:
        lines.append("Needs RMSE records from at least two models.")
    lines.append("")
    return "\n".join(lines).encode("utf-8")


RENDERERS = {"json": render_json, "csv": render_csv, "markdown": render_markdown}


def emit(report: IntercomparisonReport, fmt: str, destination) -> int:
    """Write ``report`` as json, csv or markdown to a path, binary stream or ``"-"``."""
    if fmt not in RENDERERS:
        raise ConfigurationError(f"unknown report format {fmt!r}")
    blob = RENDERERS[fmt](report)
    if destination == "-":
        sys.stdout.buffer.write(blob)
        sys.stdout.buffer.flush()
    elif hasattr(destination, "write"):
        destination.write(blob)
    else:
        with open(destination, "wb") as fh:
            fh.write(blob)
    return len(blob)


def load_schema() -> dict:
    from importlib.resources import files

    return json.loads(files("esmgauntlet").joinpath("report_schema.json").read_text(encoding="utf-8"))
