"""ETC ("ESM Tensor Container") reader/writer and metadata validation.

Layout::

    b"ETC1" | uint32 LE header length | UTF-8 canonical JSON header | payload

The payload is every variable in header order, float64 little-endian,
row-major in the variable's dim order. ``provenance.content_hash`` is the
SHA-256 of the payload alone.
"""
from __future__ import annotations

import hashlib
import io
import json
import os
import struct
import sys
from dataclasses import dataclass
from typing import BinaryIO, Iterable, List, Sequence, Union

import numpy as np

from .errors import CorruptionError, FormatError, IntegrityError, ValidationError
from .grid import Dataset, Field, GridSpec, Provenance

MAGIC = b"ETC1"
FORMAT_VERSION = 1
_U32 = struct.Struct("<I")

PathOrStream = Union[str, os.PathLike, BinaryIO]


def canonical_json(obj) -> bytes:
    """Sorted keys, no whitespace, shortest round-trip floats."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False, allow_nan=False).encode("utf-8")


def _coord_list(values: np.ndarray) -> list:
    return [float(v) for v in values]


def build_header(ds: Dataset, content_hash: str) -> dict:
    dims = {"time": int(ds.ntime), "lat": ds.grid.nlat, "lon": ds.grid.nlon}
    coords = {
        "time": _coord_list(ds.time_s),
        "lat": _coord_list(ds.grid.lat_deg),
        "lon": _coord_list(ds.grid.lon_deg),
    }
    if ds.level_pa is not None:
        dims["level"] = int(ds.level_pa.size)
        coords["level"] = _coord_list(ds.level_pa)
    prov = ds.provenance.to_dict()
    prov["content_hash"] = content_hash
    return {
        "format_version": FORMAT_VERSION,
        "dims": dims,
        "coords": coords,
        "radius_m": ds.grid.radius_m,
        "variables": [
            {
                "name": f.name,
                "dims": list(f.dims),
                "units": f.units,
                "standard_name": f.standard_name,
                "maskable": bool(f.maskable),
            }
            for f in ds.variables.values()
        ],
        "attrs": dict(ds.attrs),
        "provenance": prov,
    }


def _check_writable(ds: Dataset):
    # shape consistency is enforced by Dataset itself
    if not isinstance(ds, Dataset):
        raise ValidationError("write_dataset expects a Dataset")
    axes = [ds.time_s] if ds.level_pa is None else [ds.time_s, ds.level_pa]
    if not all(np.all(np.isfinite(a)) for a in axes):
        raise ValidationError("coordinates must be finite")


def encode_dataset(ds: Dataset) -> bytes:
    _check_writable(ds)
    payload = ds.payload_bytes()
    header = canonical_json(build_header(ds, hashlib.sha256(payload).hexdigest()))
    return MAGIC + _U32.pack(len(header)) + header + payload


def write_dataset(ds: Dataset, destination: PathOrStream) -> int:
    """Serialize ``ds``; ``destination`` is a path, a binary stream, or ``"-"`` for stdout."""
    blob = encode_dataset(ds)
    if destination == "-":
        sys.stdout.buffer.write(blob)
        sys.stdout.buffer.flush()
    elif hasattr(destination, "write"):
        destination.write(blob)
    else:
        with open(destination, "wb") as fh:
            fh.write(blob)
    return len(blob)


def decode_dataset(blob: bytes) -> Dataset:
    if len(blob) < 8 or blob[:4] != MAGIC:
        raise FormatError("not an ETC file (bad magic)")
    (hlen,) = _U32.unpack_from(blob, 4)
    if 8 + hlen > len(blob):
        raise CorruptionError(f"header length {hlen} exceeds file size {len(blob)}")
    try:
        header = json.loads(blob[8 : 8 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"unreadable header: {exc}") from None
    if not isinstance(header, dict) or header.get("format_version") != FORMAT_VERSION:
        raise FormatError("unsupported ETC header/version")
    try:
        dims = header["dims"]
        coords = header["coords"]
        for axis in ("time", "lat", "lon", "level"):
            if axis in dims and len(coords.get(axis, ())) != dims[axis]:
                raise FormatError(f"coordinate {axis} length disagrees with declared size")
        grid = GridSpec(coords["lat"], coords["lon"], header.get("radius_m", 6.371e6))
        shapes = []
        for var in header["variables"]:
            shapes.append(tuple(int(dims[d]) for d in var["dims"]))
    except (KeyError, TypeError) as exc:
        raise FormatError(f"malformed header: {exc!r}") from None

    payload = blob[8 + hlen :]
    expected = sum(int(np.prod(s)) for s in shapes) * 8
    if len(payload) != expected:
        raise CorruptionError(f"payload is {len(payload)} bytes, header declares {expected}")
    prov = Provenance.from_dict(header.get("provenance", {}))
    digest = hashlib.sha256(payload).hexdigest()
    if prov.content_hash and digest != prov.content_hash:
        raise IntegrityError(f"content hash mismatch: header {prov.content_hash}, payload {digest}")

    fields = {}
    offset = 0
    for var, shape in zip(header["variables"], shapes):
        n = int(np.prod(shape))
        data = np.frombuffer(payload, dtype="<f8", count=n, offset=offset).astype(np.float64).reshape(shape)
        offset += 8 * n
        fields[var["name"]] = Field(
            var["name"], tuple(var["dims"]), data, var.get("units", ""), var.get("standard_name"),
            bool(var.get("maskable", False)),
        )
    level = coords.get("level") if "level" in dims else None
    return Dataset(grid, coords["time"], fields, level, header.get("attrs", {}), prov)


def read_dataset(source: PathOrStream) -> Dataset:
    if source == "-":
        blob = sys.stdin.buffer.read()
    elif hasattr(source, "read"):
        blob = source.read()
    else:
        with open(source, "rb") as fh:
            blob = fh.read()
    return decode_dataset(bytes(blob))


# -- metadata -----------------------------------------------------------------

DEFAULT_PROFILE = ("units", "standard_name", "provenance.model_id")


@dataclass(frozen=True)
class Violation:
    subject: str
    key: str
    message: str

    def __str__(self):
        return f"{self.subject}: {self.key}: {self.message}"


def validate_metadata(ds: Dataset, profile: Sequence[str] = DEFAULT_PROFILE) -> List[Violation]:
    """Report metadata problems; an empty list means compliant.

    Profile keys: bare names (``units``, ``standard_name``) apply to every
    variable, ``provenance.<field>`` to the provenance record and
    ``attrs.<name>`` to global attributes. Axis monotonicity is always checked.
    """
    out = []
    for key in profile:
        if key.startswith("provenance."):
            name = key.split(".", 1)[1]
            if not str(getattr(ds.provenance, name, "") or "").strip():
                out.append(Violation("provenance", name, "missing or empty"))
        elif key.startswith("attrs."):
            name = key.split(".", 1)[1]
            if not ds.attrs.get(name, "").strip():
                out.append(Violation("attrs", name, "missing or empty"))
        else:
            for f in ds.variables.values():
                if not str(getattr(f, key, "") or "").strip():
                    out.append(Violation(f.name, key, "missing or empty"))
    out.extend(_axis_violations(ds))
    return out


def _axis_violations(ds: Dataset) -> Iterable[Violation]:
    if ds.ntime > 1 and np.any(np.diff(ds.time_s) <= 0):
        yield Violation("time", "monotonic", "time axis is not strictly increasing")
    if ds.level_pa is not None and ds.level_pa.size > 1 and np.any(np.diff(ds.level_pa) >= 0):
        yield Violation("level", "monotonic", "pressure levels must strictly decrease")
